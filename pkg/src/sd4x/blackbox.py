"""Black-box classifier interfaces.

A black box maps a batch of encoded rows to row-stochastic class
probability rows.  Built-in implementations cover a softmax-linear
model, a piecewise softmax-linear model keyed by threshold conditions
on encoded columns, and an adapter that shells out to an external
command speaking a CSV batch protocol.
"""
from __future__ import annotations

import csv
import json
import shutil
import subprocess
import tempfile
import threading
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import ExternalBlackBoxError, InputError


@runtime_checkable
class BlackBox(Protocol):
    classes: tuple[str, ...]
    columns: tuple[str, ...]

    def predict_batch(self, X: np.ndarray) -> np.ndarray: ...


def _check_batch(X: np.ndarray, columns: tuple[str, ...]) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(columns):
        raise InputError(
            f"batch shape {X.shape} does not match {len(columns)} encoded columns"
        )
    return X


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class LinearBlackBox:
    """softmax(X @ weights.T + biases)."""

    classes: tuple[str, ...]
    columns: tuple[str, ...]
    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        p, m = len(self.classes), len(self.columns)
        if self.weights.shape != (p, m):
            raise InputError(
                f"weights shape {self.weights.shape} does not match ({p}, {m})"
            )
        if self.biases.shape != (p,):
            raise InputError(f"biases shape {self.biases.shape} does not match ({p},)")

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = _check_batch(X, self.columns)
        return softmax(X @ self.weights.T + self.biases)


@dataclass(frozen=True)
class Condition:
    """Threshold test on one encoded column: value <= v or value > v."""

    column: str
    op: str
    value: float

    def __post_init__(self) -> None:
        if self.op not in ("le", "gt"):
            raise InputError(f"condition op must be 'le' or 'gt', got {self.op!r}")

    def mask(self, X: np.ndarray, columns: tuple[str, ...]) -> np.ndarray:
        try:
            j = columns.index(self.column)
        except ValueError:
            raise InputError(f"condition column {self.column!r} not in columns") from None
        if self.op == "le":
            return X[:, j] <= self.value
        return X[:, j] > self.value


@dataclass
class Regime:
    conditions: tuple[Condition, ...]
    weights: np.ndarray
    biases: np.ndarray


@dataclass
class PiecewiseLinearBlackBox:
    """Per-regime softmax-linear model; regimes must partition the space."""

    classes: tuple[str, ...]
    columns: tuple[str, ...]
    regimes: list[Regime] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.regimes:
            raise InputError("piecewise black box needs at least one regime")
        p, m = len(self.classes), len(self.columns)
        for k, reg in enumerate(self.regimes):
            reg.weights = np.asarray(reg.weights, dtype=np.float64)
            reg.biases = np.asarray(reg.biases, dtype=np.float64)
            if reg.weights.shape != (p, m):
                raise InputError(f"regime {k}: weights shape {reg.weights.shape}")
            if reg.biases.shape != (p,):
                raise InputError(f"regime {k}: biases shape {reg.biases.shape}")
            for cond in reg.conditions:
                cond.mask(np.zeros((0, m)), self.columns)

    def regime_index(self, X: np.ndarray) -> np.ndarray:
        """Index of the single matching regime per row; errors otherwise."""
        X = _check_batch(X, self.columns)
        masks = np.stack(
            [
                np.logical_and.reduce(
                    [c.mask(X, self.columns) for c in reg.conditions]
                )
                if reg.conditions
                else np.ones(X.shape[0], dtype=bool)
                for reg in self.regimes
            ]
        )
        counts = masks.sum(axis=0)
        if np.any(counts != 1):
            bad = int(np.nonzero(counts != 1)[0][0])
            raise InputError(
                f"row {bad} matches {int(counts[bad])} regimes; rules must "
                "partition the feature space"
            )
        return masks.argmax(axis=0)

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = _check_batch(X, self.columns)
        which = self.regime_index(X)
        out = np.empty((X.shape[0], len(self.classes)))
        for k, reg in enumerate(self.regimes):
            rows = which == k
            if np.any(rows):
                out[rows] = softmax(X[rows] @ reg.weights.T + reg.biases)
        return out


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def blackbox_to_dict(bb: LinearBlackBox | PiecewiseLinearBlackBox) -> dict:
    if isinstance(bb, LinearBlackBox):
        return {
            "type": "linear",
            "classes": list(bb.classes),
            "columns": list(bb.columns),
            "weights": bb.weights.tolist(),
            "biases": bb.biases.tolist(),
        }
    return {
        "type": "piecewise_linear",
        "classes": list(bb.classes),
        "columns": list(bb.columns),
        "regimes": [
            {
                "conditions": [
                    {"column": c.column, "op": c.op, "value": c.value}
                    for c in reg.conditions
                ],
                "weights": reg.weights.tolist(),
                "biases": reg.biases.tolist(),
            }
            for reg in bb.regimes
        ],
    }


def blackbox_from_dict(obj: dict) -> LinearBlackBox | PiecewiseLinearBlackBox:
    if not isinstance(obj, dict) or "type" not in obj:
        raise InputError("black-box description needs a 'type' field")
    classes = tuple(str(c) for c in obj.get("classes", ()))
    columns = tuple(str(c) for c in obj.get("columns", ()))
    if obj["type"] == "linear":
        weights = obj.get("weights", obj.get("coefficients"))
        biases = obj.get("biases", obj.get("intercepts"))
        if weights is None or biases is None:
            raise InputError("linear black box needs weights and biases")
        return LinearBlackBox(classes, columns, np.asarray(weights), np.asarray(biases))
    if obj["type"] == "piecewise_linear":
        regimes = [
            Regime(
                conditions=tuple(
                    Condition(str(c["column"]), str(c["op"]), float(c["value"]))
                    for c in reg.get("conditions", ())
                ),
                weights=np.asarray(reg["weights"]),
                biases=np.asarray(reg["biases"]),
            )
            for reg in obj.get("regimes", ())
        ]
        return PiecewiseLinearBlackBox(classes, columns, regimes)
    raise InputError(f"unknown black-box type {obj['type']!r}")


def save_blackbox(path: str, bb: LinearBlackBox | PiecewiseLinearBlackBox) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(blackbox_to_dict(bb), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_blackbox(path: str) -> LinearBlackBox | PiecewiseLinearBlackBox:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read black box {path}: {exc}") from exc
    return blackbox_from_dict(obj)


# ---------------------------------------------------------------------------
# external adapter
# ---------------------------------------------------------------------------

_SUM_ACCEPT = 1e-9
_SUM_RENORM = 1e-6
_NEG_CLIP = -1e-12


@dataclass
class ExternalBlackBox:
    """Adapter around an external command speaking the CSV batch protocol.

    Each call writes ``request.csv`` (header = encoded column names) to a
    fresh temporary directory, runs ``command + [directory]``, and reads
    back ``response.csv`` whose header must name every class.  Calls are
    serialized with a lock.  Tiny negative probabilities are clipped,
    near-unit row sums are accepted or renormalized with a warning, and
    anything worse is an error.
    """

    classes: tuple[str, ...]
    columns: tuple[str, ...]
    command: tuple[str, ...]
    timeout: float | None = None
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = _check_batch(X, self.columns)
        with self._lock:
            return self._call(X)

    def _call(self, X: np.ndarray) -> np.ndarray:
        workdir = Path(tempfile.mkdtemp(prefix="sd4x-bb-"))
        try:
            request = workdir / "request.csv"
            with open(request, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(self.columns)
                for row in X:
                    writer.writerow([repr(float(v)) for v in row])
            try:
                proc = subprocess.run(
                    list(self.command) + [str(workdir)],
                    capture_output=True,
                    text=True,
                    timeout=self.timeout,
                )
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise ExternalBlackBoxError(f"external black box failed: {exc}") from exc
            if proc.returncode != 0:
                raise ExternalBlackBoxError(
                    f"external black box exited with {proc.returncode}: "
                    f"{proc.stderr.strip()[:500]}"
                )
            response = workdir / "response.csv"
            if not response.exists():
                raise ExternalBlackBoxError("external black box wrote no response.csv")
            with open(response, newline="", encoding="utf-8") as fh:
                reader = csv.reader(fh)
                header = next(reader, None)
                if header is None:
                    raise ExternalBlackBoxError("response.csv is empty")
                try:
                    order = [header.index(c) for c in self.classes]
                except ValueError:
                    raise ExternalBlackBoxError(
                        f"response header {header} does not name classes "
                        f"{list(self.classes)}"
                    ) from None
                rows = []
                for cells in reader:
                    if not cells:
                        continue
                    if len(cells) != len(header):
                        raise ExternalBlackBoxError(
                            f"response row has {len(cells)} cells, expected {len(header)}"
                        )
                    try:
                        rows.append([float(cells[j]) for j in order])
                    except ValueError as exc:
                        raise ExternalBlackBoxError(
                            f"non-numeric probability in response: {exc}"
                        ) from exc
            probs = np.asarray(rows, dtype=np.float64)
            if probs.shape != (X.shape[0], len(self.classes)):
                raise ExternalBlackBoxError(
                    f"response shape {probs.shape} does not match "
                    f"({X.shape[0]}, {len(self.classes)})"
                )
            return self._sanitize(probs)
        finally:
            shutil.rmtree(workdir, ignore_errors=True)

    def _sanitize(self, probs: np.ndarray) -> np.ndarray:
        if np.any(probs < _NEG_CLIP):
            bad = float(probs.min())
            raise ExternalBlackBoxError(f"negative probability {bad} in response")
        probs = np.clip(probs, 0.0, None)
        sums = probs.sum(axis=1)
        err = np.abs(sums - 1.0)
        if np.any(err > _SUM_RENORM):
            bad = float(sums[np.argmax(err)])
            raise ExternalBlackBoxError(f"probability row sums to {bad}")
        fix = err > _SUM_ACCEPT
        if np.any(fix):
            warnings.warn(
                f"renormalizing {int(fix.sum())} probability rows from the "
                "external black box"
            )
            probs = probs.copy()
            probs[fix] /= sums[fix, None]
        return probs
