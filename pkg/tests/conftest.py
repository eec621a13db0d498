from __future__ import annotations

import os

import numpy as np
import pytest

from sd4x.blackbox import LinearBlackBox
from sd4x.dataset import (
    Attribute,
    AttributeKind,
    EncodedMatrix,
    encode,
    encoded_columns,
    load_dataset,
)

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
TOY_CSV = os.path.join(DATA_DIR, "toy.csv")
TOY_SCHEMA = os.path.join(DATA_DIR, "toy_schema.json")


@pytest.fixture(scope="session")
def toy():
    return load_dataset(TOY_CSV, TOY_SCHEMA)


@pytest.fixture(scope="session")
def toy_enc(toy):
    return encode(toy)


def numeric_enc(values, classes=("c0", "c1"), prefix="x") -> EncodedMatrix:
    """Encoded matrix over purely numeric attributes, for synthetic tests."""
    values = np.asarray(values, dtype=np.float64)
    attrs = tuple(
        Attribute(name=f"{prefix}{j}", kind=AttributeKind.NUMERIC)
        for j in range(values.shape[1])
    )
    return EncodedMatrix(
        values=values,
        columns=encoded_columns(attrs),
        attributes=attrs,
        classes=tuple(classes),
    )


def random_linear_bb(rng, enc, scale=1.0) -> LinearBlackBox:
    p = len(enc.classes)
    return LinearBlackBox(
        classes=enc.classes,
        columns=enc.column_names,
        weights=rng.normal(scale=scale, size=(p, enc.m)),
        biases=rng.normal(scale=scale, size=p),
    )


def mixed_enc(rng, n=60) -> EncodedMatrix:
    """Numeric + boolean + nominal + ordinal attributes, randomly filled."""
    from sd4x.dataset import Dataset

    attrs = (
        Attribute("a", AttributeKind.NUMERIC),
        Attribute("b", AttributeKind.NUMERIC),
        Attribute("flag", AttributeKind.BOOLEAN),
        Attribute("color", AttributeKind.NOMINAL, categories=("red", "green", "blue")),
        Attribute("level", AttributeKind.ORDINAL, categories=("low", "mid", "high")),
    )
    rows = [
        (
            float(rng.random()),
            float(rng.normal()),
            bool(rng.integers(2)),
            ("red", "green", "blue")[int(rng.integers(3))],
            ("low", "mid", "high")[int(rng.integers(3))],
        )
        for _ in range(n)
    ]
    return encode(Dataset(attributes=attrs, classes=("c0", "c1"), rows=rows))
