from __future__ import annotations

import json
import os
import sys

import numpy as np
import pytest

from sd4x.cli import main

from conftest import TOY_CSV, TOY_SCHEMA

_SPEC = {
    "attributes": [
        {"name": "x0", "kind": "numeric"},
        {"name": "x1", "kind": "numeric"},
        {"name": "flag", "kind": "boolean"},
    ],
    "classes": ["pos", "neg"],
    "n": 40,
    "regimes": [
        {
            "conditions": [{"column": "x0", "op": "le", "value": 0.5}],
            "weights": [[3.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
            "biases": [0.0, 0.0],
        },
        {
            "conditions": [{"column": "x0", "op": "gt", "value": 0.5}],
            "weights": [[0.0, -2.0, 1.0], [0.0, 0.0, 0.0]],
            "biases": [0.5, 0.0],
        },
    ],
}


@pytest.fixture()
def gen_dir(tmp_path):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(_SPEC))
    out = tmp_path / "gen"
    code = main(["synth", "--spec", str(spec_path), "--out", str(out), "--seed", "11"])
    assert code == 0
    return out


def _explain_args(gen_dir, out, extra=()):
    return [
        "explain",
        "--data",
        str(gen_dir / "data.csv"),
        "--schema",
        str(gen_dir / "schema.json"),
        "--blackbox",
        str(gen_dir / "blackbox.json"),
        "--k",
        "3",
        "--z",
        "10",
        "--n-synth",
        "25",
        "--lambda",
        "0.5",
        "--seed",
        "2",
        "--out",
        str(out),
        *extra,
    ]


def test_synth_writes_expected_files(gen_dir):
    for name in ("data.csv", "schema.json", "blackbox.json", "ground_truth.json"):
        assert (gen_dir / name).exists()
    header = (gen_dir / "data.csv").read_text().splitlines()[0]
    assert header == "x0,x1,flag,class"


def test_explain_then_eval_round_trip(gen_dir, tmp_path):
    out = tmp_path / "partition.json"
    assert main(_explain_args(gen_dir, out)) == 0
    dump = json.loads(out.read_text())
    assert dump["config"]["lambda"] == 0.5
    assert 1 <= len(dump["subgroups"]) <= 3
    report_dir = tmp_path / "report"
    code = main(
        [
            "eval",
            "--partition",
            str(out),
            "--data",
            str(gen_dir / "data.csv"),
            "--schema",
            str(gen_dir / "schema.json"),
            "--blackbox",
            str(gen_dir / "blackbox.json"),
            "--out-dir",
            str(report_dir),
        ]
    )
    assert code == 0
    report = json.loads((report_dir / "report.json").read_text())
    assert set(report["mse"]) == {"splitsd4x", "global_wb", "local_wb"}
    assert (report_dir / "report.md").exists()
    assert (report_dir / "curve.csv").exists() or len(dump["trace"]) < 2


def test_explain_is_byte_deterministic(gen_dir, tmp_path):
    paths = [tmp_path / f"p{i}.json" for i in range(3)]
    threads = ["1", "4", "1"]
    for path, t in zip(paths, threads):
        code = main(_explain_args(gen_dir, path, extra=("--threads", t)))
        assert code == 0
    blobs = [p.read_bytes() for p in paths]
    assert blobs[0] == blobs[1] == blobs[2]


def test_explain_curve_output(gen_dir, tmp_path):
    out = tmp_path / "partition.json"
    curve = tmp_path / "curve.csv"
    assert main(_explain_args(gen_dir, out, extra=("--curve", str(curve)))) == 0
    lines = curve.read_text().splitlines()
    assert lines[0] == "K,loss"
    assert len(lines) >= 2


def test_explain_with_cache_dir_hits_cache(gen_dir, tmp_path):
    cache = tmp_path / "cache"
    out1 = tmp_path / "a.json"
    out2 = tmp_path / "b.json"
    assert main(_explain_args(gen_dir, out1, extra=("--cache-dir", str(cache)))) == 0
    entries = os.listdir(cache)
    assert len(entries) == 1
    assert main(_explain_args(gen_dir, out2, extra=("--cache-dir", str(cache)))) == 0
    assert os.listdir(cache) == entries
    assert out1.read_bytes() == out2.read_bytes()


def test_eval_rejects_tampered_members(gen_dir, tmp_path):
    out = tmp_path / "partition.json"
    assert main(_explain_args(gen_dir, out)) == 0
    dump = json.loads(out.read_text())
    if len(dump["subgroups"]) < 2:
        pytest.skip("needs two subgroups to overlap")
    dump["subgroups"][0]["members"].append(dump["subgroups"][1]["members"][0])
    tampered = tmp_path / "tampered.json"
    tampered.write_text(json.dumps(dump))
    code = main(
        [
            "eval",
            "--partition",
            str(tampered),
            "--data",
            str(gen_dir / "data.csv"),
            "--schema",
            str(gen_dir / "schema.json"),
            "--blackbox",
            str(gen_dir / "blackbox.json"),
            "--out-dir",
            str(tmp_path / "r"),
        ]
    )
    assert code == 1


def test_eval_rejects_stale_data_hash(gen_dir, tmp_path):
    out = tmp_path / "partition.json"
    assert main(_explain_args(gen_dir, out)) == 0
    data = (gen_dir / "data.csv").read_text().splitlines()
    cells = data[1].split(",")
    cells[0] = "0.123456"
    data[1] = ",".join(cells)
    altered = tmp_path / "altered.csv"
    altered.write_text("\n".join(data) + "\n")
    code = main(
        [
            "eval",
            "--partition",
            str(out),
            "--data",
            str(altered),
            "--schema",
            str(gen_dir / "schema.json"),
            "--blackbox",
            str(gen_dir / "blackbox.json"),
            "--out-dir",
            str(tmp_path / "r"),
        ]
    )
    assert code == 2


def test_exit_codes_for_bad_input(gen_dir, tmp_path):
    missing = main(
        [
            "explain",
            "--data",
            str(gen_dir / "data.csv"),
            "--schema",
            str(gen_dir / "schema.json"),
            "--out",
            str(tmp_path / "x.json"),
        ]
    )
    assert missing == 2  # neither --blackbox nor --blackbox-cmd
    both = main(
        _explain_args(
            gen_dir,
            tmp_path / "y.json",
            extra=("--blackbox-cmd", "echo hi"),
        )
    )
    assert both == 2
    nofile = main(
        [
            "explain",
            "--data",
            str(tmp_path / "missing.csv"),
            "--schema",
            str(gen_dir / "schema.json"),
            "--blackbox",
            str(gen_dir / "blackbox.json"),
            "--out",
            str(tmp_path / "z.json"),
        ]
    )
    assert nofile == 2


def test_external_blackbox_cmd_and_failure_exit_code(gen_dir, tmp_path):
    script = tmp_path / "bb.py"
    script.write_text(
        """\
import csv, math, os, sys
workdir = sys.argv[1]
with open(os.path.join(workdir, "request.csv")) as fh:
    rows = list(csv.reader(fh))
header, data = rows[0], rows[1:]
with open(os.path.join(workdir, "response.csv"), "w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["pos", "neg"])
    for row in data:
        x0 = float(row[header.index("x0")])
        p = 1.0 / (1.0 + math.exp(-4.0 * (x0 - 0.5)))
        w.writerow([repr(p), repr(1.0 - p)])
"""
    )
    out = tmp_path / "ext.json"
    code = main(
        [
            "explain",
            "--data",
            str(gen_dir / "data.csv"),
            "--schema",
            str(gen_dir / "schema.json"),
            "--blackbox-cmd",
            f"{sys.executable} {script}",
            "--k",
            "2",
            "--n-synth",
            "15",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    assert out.exists()

    crash = tmp_path / "crash.py"
    crash.write_text("import sys; sys.exit(5)")
    code = main(
        [
            "explain",
            "--data",
            str(gen_dir / "data.csv"),
            "--schema",
            str(gen_dir / "schema.json"),
            "--blackbox-cmd",
            f"{sys.executable} {crash}",
            "--k",
            "2",
            "--n-synth",
            "5",
            "--out",
            str(tmp_path / "never.json"),
        ]
    )
    assert code == 3


def test_config_file_defaults_and_flag_override(gen_dir, tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"k": 2, "n-synth": 25, "lambda": 0.5, "seed": 2, "z": 10}))
    out_cfg = tmp_path / "from_config.json"
    code = main(
        [
            "explain",
            "--data",
            str(gen_dir / "data.csv"),
            "--schema",
            str(gen_dir / "schema.json"),
            "--blackbox",
            str(gen_dir / "blackbox.json"),
            "--config",
            str(config),
            "--out",
            str(out_cfg),
        ]
    )
    assert code == 0
    dump = json.loads(out_cfg.read_text())
    assert dump["config"]["k"] == 2
    assert dump["config"]["lambda"] == 0.5

    out_flag = tmp_path / "flag_wins.json"
    code = main(
        [
            "explain",
            "--data",
            str(gen_dir / "data.csv"),
            "--schema",
            str(gen_dir / "schema.json"),
            "--blackbox",
            str(gen_dir / "blackbox.json"),
            "--config",
            str(config),
            "--k",
            "3",
            "--out",
            str(out_flag),
        ]
    )
    assert code == 0
    assert json.loads(out_flag.read_text())["config"]["k"] == 3


def test_featurize_expands_text_column(tmp_path):
    data = tmp_path / "tickets.csv"
    data.write_text(
        "severity,message,class\n"
        "1.0,disk full,hw\n"
        "2.0,swap full,hw\n"
        "0.5,login failed,sw\n"
    )
    schema = tmp_path / "tickets_schema.json"
    schema.write_text(
        json.dumps(
            {
                "attributes": [{"name": "severity", "kind": "numeric"}],
                "classes": ["hw", "sw"],
            }
        )
    )
    out_data = tmp_path / "out.csv"
    out_schema = tmp_path / "out_schema.json"
    out_vocab = tmp_path / "vocab.json"
    code = main(
        [
            "featurize",
            "--data",
            str(data),
            "--schema",
            str(schema),
            "--field",
            "message",
            "--top-n",
            "4",
            "--out-data",
            str(out_data),
            "--out-schema",
            str(out_schema),
            "--out-vocab",
            str(out_vocab),
        ]
    )
    assert code == 0
    vocab = json.loads(out_vocab.read_text())
    assert vocab["field"] == "message"
    assert len(vocab["terms"]) == 4
    schema_obj = json.loads(out_schema.read_text())
    derived = [a for a in schema_obj["attributes"] if a.get("text_field") == "message"]
    assert len(derived) == 4
    assert all(a["name"].startswith("message_") for a in derived)
    header = out_data.read_text().splitlines()[0]
    assert header.startswith("severity,message_")
    assert header.endswith(",class")

    from sd4x.dataset import load_dataset

    ds = load_dataset(str(out_data), str(out_schema))
    assert ds.n == 3
    assert ds.labels == ["hw", "hw", "sw"]


def test_featurize_rejects_bad_requests(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("severity,message\n1.0,hello\n")
    schema = tmp_path / "s.json"
    schema.write_text(
        json.dumps(
            {
                "attributes": [{"name": "severity", "kind": "numeric"}],
                "classes": ["a", "b"],
            }
        )
    )
    args = [
        "featurize",
        "--data",
        str(data),
        "--schema",
        str(schema),
        "--out-data",
        str(tmp_path / "o.csv"),
        "--out-schema",
        str(tmp_path / "os.json"),
        "--out-vocab",
        str(tmp_path / "ov.json"),
    ]
    assert main(args + ["--field", "nope"]) == 2
    assert main(args + ["--field", "message", "--top-n", "0"]) == 2

    collision_schema = tmp_path / "cs.json"
    collision_schema.write_text(
        json.dumps(
            {
                "attributes": [
                    {"name": "severity", "kind": "numeric"},
                    {"name": "message_hello", "kind": "numeric"},
                ],
                "classes": ["a", "b"],
            }
        )
    )
    cdata = tmp_path / "cd.csv"
    cdata.write_text("severity,message_hello,message\n1.0,0.0,hello\n")
    assert (
        main(
            [
                "featurize",
                "--data",
                str(cdata),
                "--schema",
                str(collision_schema),
                "--field",
                "message",
                "--top-n",
                "3",
                "--out-data",
                str(tmp_path / "o2.csv"),
                "--out-schema",
                str(tmp_path / "os2.json"),
                "--out-vocab",
                str(tmp_path / "ov2.json"),
            ]
        )
        == 2
    )


def test_explain_on_toy_fixture(tmp_path):
    # tiny mixed-type dataset exercises one-hot and ordinal splits end to end
    bb_path = tmp_path / "bb.json"
    weights = np.zeros((2, 11))
    weights[0, 0] = 2.0
    weights[0, 5] = 1.5
    bb_path.write_text(
        json.dumps(
            {
                "type": "linear",
                "classes": ["TEC", "OT"],
                "columns": [
                    "disk",
                    "swap",
                    "full",
                    "java",
                    "http",
                    "weekend",
                    "Soft. version",
                    "Soft. type=Sales",
                    "Soft. type=Factory",
                    "Memory usage",
                    "% used heap",
                ],
                "weights": weights.tolist(),
                "biases": [0.0, 0.0],
            }
        )
    )
    out = tmp_path / "toy_partition.json"
    code = main(
        [
            "explain",
            "--data",
            TOY_CSV,
            "--schema",
            TOY_SCHEMA,
            "--blackbox",
            str(bb_path),
            "--k",
            "3",
            "--n-synth",
            "20",
            "--lambda",
            "1.0",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    dump = json.loads(out.read_text())
    assert dump["config"]["k"] == 3
    for sd in dump["subgroups"]:
        assert isinstance(sd["pattern"], str)
        assert isinstance(sd["pattern_closed"], str)
