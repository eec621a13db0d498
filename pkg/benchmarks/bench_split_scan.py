"""Benchmark the boundary-scan and ridge-solve kernels, numba vs numpy.

Builds one realistic scan problem (random numeric data, random linear
black box, labeled neighborhoods, prefix/suffix Gram stacks over one
sorted column) and times both backends on identical inputs.

Usage:
    python3 benchmarks/bench_split_scan.py --n 400 --m 12 --n-synth 50
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from sd4x import kernels
from sd4x.dataset import Attribute, AttributeKind, EncodedMatrix, encoded_columns
from sd4x.blackbox import LinearBlackBox
from sd4x.neighborhood import build, label
from sd4x.whitebox import neighborhood_grams


def make_problem(n: int, m: int, p: int, n_synth: int, seed: int):
    rng = np.random.default_rng(seed)
    attrs = tuple(Attribute(f"x{j}", AttributeKind.NUMERIC) for j in range(m))
    enc = EncodedMatrix(
        values=rng.random((n, m)),
        columns=encoded_columns(attrs),
        attributes=attrs,
        classes=tuple(f"c{i}" for i in range(p)),
    )
    bb = LinearBlackBox(
        classes=enc.classes,
        columns=enc.column_names,
        weights=rng.normal(scale=2.0, size=(p, m)),
        biases=rng.normal(size=p),
    )
    ns = label(build(enc, z=10, n_synth=n_synth, seed=seed), bb)
    G, C, yy = neighborhood_grams(ns)

    order = np.argsort(enc.values[:, 0], kind="stable")
    Gpre = np.cumsum(G[order], axis=0)
    Cpre = np.cumsum(C[order], axis=0)
    yypre = np.cumsum(yy[order])
    Gsuf = np.cumsum(G[order][::-1], axis=0)[::-1].copy()
    Csuf = np.cumsum(C[order][::-1], axis=0)[::-1].copy()
    yysuf = np.cumsum(yy[order][::-1])[::-1].copy()
    bounds = np.arange(1, n, dtype=np.int64)
    return (Gpre, Cpre, yypre, Gsuf, Csuf, yysuf, bounds), (G[0], C[0])


def time_call(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=400, help="number of objects")
    ap.add_argument("--m", type=int, default=12, help="number of columns")
    ap.add_argument("--p", type=int, default=3, help="number of classes")
    ap.add_argument("--n-synth", type=int, default=50, help="samples per neighborhood")
    ap.add_argument("--lam", type=float, default=1.0, help="ridge penalty")
    ap.add_argument("--repeats", type=int, default=5, help="timing repeats (best of)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    scan_args, (G0, C0) = make_problem(args.n, args.m, args.p, args.n_synth, args.seed)
    npen = args.m
    boundaries = scan_args[-1].shape[0]
    print(
        f"problem: n={args.n} m={args.m} p={args.p} n_synth={args.n_synth} "
        f"lam={args.lam} ({boundaries} boundaries)"
    )

    out_np = kernels.scan_sse(*scan_args, args.lam, npen, force="numpy")
    t_np = time_call(
        lambda: kernels.scan_sse(*scan_args, args.lam, npen, force="numpy"),
        args.repeats,
    )
    print(f"scan_sse  numpy : {t_np * 1e3:9.2f} ms")

    if kernels.numba_available():
        # first call includes JIT compilation; time warm calls only
        kernels.scan_sse(*scan_args, args.lam, npen, force="numba")
        t_nb = time_call(
            lambda: kernels.scan_sse(*scan_args, args.lam, npen, force="numba"),
            args.repeats,
        )
        out_nb = kernels.scan_sse(*scan_args, args.lam, npen, force="numba")
        diff = float(np.max(np.abs(out_nb - out_np)))
        rel = diff / max(1.0, float(np.max(np.abs(out_np))))
        print(f"scan_sse  numba : {t_nb * 1e3:9.2f} ms  (speedup {t_np / t_nb:.1f}x)")
        print(f"agreement       : max |diff| {diff:.3e} (rel {rel:.3e})")

        s_np = time_call(
            lambda: kernels.solve_penalized(G0, C0, args.lam, npen, force="numpy"),
            args.repeats,
        )
        s_nb = time_call(
            lambda: kernels.solve_penalized(G0, C0, args.lam, npen, force="numba"),
            args.repeats,
        )
        print(f"solve     numpy : {s_np * 1e6:9.2f} us")
        print(f"solve     numba : {s_nb * 1e6:9.2f} us  (speedup {s_np / s_nb:.1f}x)")
    else:
        print("numba not importable; numpy backend only")


if __name__ == "__main__":
    main()
