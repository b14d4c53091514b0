"""Shared fixtures and tiny deterministic test doubles."""

from __future__ import annotations

import io
from typing import Optional, Sequence

import numpy as np
import pytest

from pivotflip import EmbeddingStore, load_vectors

# "fine" engineered to sit at cosine 0.9 from "great"; everything else far.
TOY_VECTORS = """great 1.0 0.0
fine 0.9 0.43588989435406705
shaping 0.0 1.0
one 0.1 0.99498743710662
character 0.05 0.9987492177719089
"""


def make_store(text: str) -> EmbeddingStore:
    return load_vectors(io.StringIO(text))


@pytest.fixture
def toy_store() -> EmbeddingStore:
    return make_store(TOY_VECTORS)


class ScriptedVictim:
    """Returns labels from a fixed script, ignoring the input tokens."""

    def __init__(self, labels: Sequence[Optional[int]]):
        self.labels = list(labels)
        self.calls = 0

    def classify(self, tokens) -> Optional[int]:
        label = self.labels[self.calls % len(self.labels)]
        self.calls += 1
        return label


class ConstantVictim:
    def __init__(self, label: int = 1):
        self.label = label

    def classify(self, tokens) -> int:
        return self.label


def bernoulli_sampler(mean: float, rng: np.random.Generator):
    return lambda: bool(rng.random() < mean)


def distinct_tokens(length: int, prefix: str = "tok") -> tuple[str, ...]:
    return tuple(f"{prefix}{i}" for i in range(length))
