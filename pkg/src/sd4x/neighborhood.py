"""Neighborhood generation, discretization, and black-box labeling.

Each explained object gets a neighborhood of ``1 + n_synth`` rows: the
object itself first, then synthetic points drawn from a Gaussian
centered on the object with covariance ``Sigma / z``, where ``Sigma`` is
the sample covariance of the encoded explained objects.  Draws use one
independent, object-indexed substream of the base seed, so results do
not depend on thread scheduling.  Synthetic rows are snapped back onto
valid encodings before labeling: booleans threshold at 0.5, ordinal
codes round half-up and clamp to the level range, and each one-hot block
activates the category whose raw value is closest to 1.
"""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .blackbox import BlackBox
from .dataset import AttributeKind, EncodedMatrix
from .errors import InputError

_LABEL_CHUNK = 65536


@dataclass
class NeighborhoodSet:
    """Discretized neighborhoods and, once labeled, black-box outputs."""

    samples: np.ndarray  # (n_objects, 1 + n_synth, m')
    z: int
    n_synth: int
    seed: int
    bb_outputs: np.ndarray | None = None
    grams: tuple | None = None  # lazy per-object Gram cache, see whitebox module

    @property
    def n_objects(self) -> int:
        return int(self.samples.shape[0])

    @property
    def size(self) -> int:
        return int(self.samples.shape[1])


def estimate_covariance(X: np.ndarray) -> np.ndarray:
    """Symmetrized sample covariance (ddof=1) of the encoded objects."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InputError(f"expected a 2-D matrix, got shape {X.shape}")
    if X.shape[0] < 2:
        return np.zeros((X.shape[1], X.shape[1]))
    C = np.cov(X, rowvar=False, ddof=1)
    C = np.atleast_2d(C)
    return (C + C.T) / 2.0


def scaled_cholesky(sigma: np.ndarray, z: int) -> np.ndarray:
    """Cholesky factor of sigma / z, adding diagonal jitter when needed."""
    if z < 1:
        raise InputError(f"z must be a positive integer, got {z}")
    A = np.asarray(sigma, dtype=np.float64) / float(z)
    m = A.shape[0]
    trace = float(np.trace(A))
    eps = 1e-9 * (trace / m if trace > 0.0 else 1.0)
    for _ in range(40):
        try:
            return np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            A = A + eps * np.eye(m)
            eps *= 10.0
    raise InputError("covariance matrix cannot be made positive definite")


def discretize(samples: np.ndarray, enc: EncodedMatrix) -> np.ndarray:
    """Snap raw Gaussian rows onto valid encoded rows."""
    out = np.array(samples, dtype=np.float64, copy=True)
    j = 0
    for attr in enc.attributes:
        if attr.kind is AttributeKind.NUMERIC:
            j += 1
        elif attr.kind is AttributeKind.BOOLEAN:
            out[:, j] = np.where(out[:, j] >= 0.5, 1.0, 0.0)
            j += 1
        elif attr.kind is AttributeKind.ORDINAL:
            top = float(len(attr.categories) - 1)
            out[:, j] = np.clip(np.floor(out[:, j] + 0.5), 0.0, top)
            j += 1
        else:
            k = len(attr.categories)
            block = out[:, j : j + k]
            winner = np.argmin(np.abs(block - 1.0), axis=1)
            block[:] = 0.0
            block[np.arange(block.shape[0]), winner] = 1.0
            j += k
    return out


def _object_neighborhood(
    x0: np.ndarray, L: np.ndarray, n_synth: int, seed: int, index: int
) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))
    rows = np.empty((1 + n_synth, x0.shape[0]))
    rows[0] = x0
    if n_synth:
        g = rng.standard_normal((n_synth, x0.shape[0]))
        rows[1:] = x0 + g @ L.T
    return rows


def build(
    enc: EncodedMatrix,
    z: int = 10,
    n_synth: int = 250,
    seed: int = 0,
    threads: int = 1,
) -> NeighborhoodSet:
    """Generate discretized neighborhoods for every encoded object."""
    if n_synth < 0:
        raise InputError(f"n_synth must be >= 0, got {n_synth}")
    sigma = estimate_covariance(enc.values)
    L = scaled_cholesky(sigma, z)
    n = enc.n
    samples = np.empty((n, 1 + n_synth, enc.m))

    def one(i: int) -> None:
        raw = _object_neighborhood(enc.values[i], L, n_synth, seed, i)
        samples[i] = discretize(raw, enc)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(one, range(n)))
    else:
        for i in range(n):
            one(i)
    return NeighborhoodSet(samples=samples, z=z, n_synth=n_synth, seed=seed)


def label(ns: NeighborhoodSet, bb: BlackBox) -> NeighborhoodSet:
    """Run the black box over every neighborhood row, in fixed-size chunks."""
    n, S, m = ns.samples.shape
    flat = ns.samples.reshape(n * S, m)
    parts = [
        bb.predict_batch(flat[start : start + _LABEL_CHUNK])
        for start in range(0, flat.shape[0], _LABEL_CHUNK)
    ]
    probs = np.concatenate(parts, axis=0) if parts else np.zeros((0, 0))
    ns.bb_outputs = probs.reshape(n, S, probs.shape[1])
    return ns


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------


def cache_key(data_hash: str, seed: int, z: int, n_synth: int, bb_tag: str) -> str:
    h = hashlib.sha256()
    h.update(
        json.dumps(
            {
                "data": data_hash,
                "seed": seed,
                "z": z,
                "n_synth": n_synth,
                "bb": bb_tag,
            },
            sort_keys=True,
        ).encode("utf-8")
    )
    return h.hexdigest()


def save_cache(path: str, ns: NeighborhoodSet) -> None:
    if ns.bb_outputs is None:
        raise InputError("refusing to cache unlabeled neighborhoods")
    np.savez_compressed(
        path,
        samples=ns.samples,
        bb_outputs=ns.bb_outputs,
        meta=np.array([ns.z, ns.n_synth, ns.seed], dtype=np.int64),
    )


def load_cache(path: str) -> NeighborhoodSet | None:
    try:
        with np.load(path) as data:
            meta = data["meta"]
            return NeighborhoodSet(
                samples=data["samples"],
                z=int(meta[0]),
                n_synth=int(meta[1]),
                seed=int(meta[2]),
                bb_outputs=data["bb_outputs"],
            )
    except (OSError, KeyError, ValueError):
        return None
