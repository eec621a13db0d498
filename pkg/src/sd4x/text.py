"""Tf-idf featurization of free-text fields.

Terms are lowercase alphanumeric runs.  Term frequency is the raw count
in the document.  Inverse document frequency is smoothed,
``idf(t) = ln((1 + n) / (1 + df(t))) + 1``, and each document row of the
full term matrix is L2-normalized.  The vocabulary keeps the ``top_n``
terms by total normalized tf-idf mass over the corpus (ties broken
lexicographically); the returned matrix is the corresponding column
slice of the normalized full matrix, without renormalization.
"""
from __future__ import annotations

import re

import numpy as np

from .errors import InputError

_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def featurize_text(texts: list[str], top_n: int) -> tuple[np.ndarray, tuple[str, ...]]:
    """Return (matrix of shape (len(texts), k), vocabulary) with k <= top_n."""
    if top_n <= 0:
        raise InputError(f"top_n must be positive, got {top_n}")
    if not texts:
        raise InputError("cannot featurize an empty corpus")
    docs = [tokenize(t) for t in texts]
    terms = sorted({tok for doc in docs for tok in doc})
    if not terms:
        return np.zeros((len(texts), 0)), ()
    index = {t: i for i, t in enumerate(terms)}
    n = len(docs)
    tf = np.zeros((n, len(terms)))
    for i, doc in enumerate(docs):
        for tok in doc:
            tf[i, index[tok]] += 1.0
    df = np.count_nonzero(tf, axis=0)
    idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
    full = tf * idf
    norms = np.linalg.norm(full, axis=1)
    nonzero = norms > 0.0
    full[nonzero] /= norms[nonzero, None]
    mass = full.sum(axis=0)
    order = sorted(range(len(terms)), key=lambda j: (-mass[j], terms[j]))
    keep = sorted(order[:top_n], key=lambda j: (-mass[j], terms[j]))
    vocab = tuple(terms[j] for j in keep)
    return full[:, keep], vocab
