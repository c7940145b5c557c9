"""Shared fixtures: a pinned environment and a few reusable objects."""

import pytest

from cbtest.config import reset_settings
from cbtest.distmodel import DistributionSpec, builtin_alternative, builtin_distribution
from cbtest.empirical import ColourBlindSample, LabeledSample

collect_ignore_glob = ["examples/*"]


@pytest.fixture(autouse=True)
def pinned_env(monkeypatch):
    """Every test sees the same settings regardless of the caller's shell."""
    monkeypatch.setenv("CBTEST_THREADS", "4")
    monkeypatch.setenv("CBTEST_SEED", "20240601")
    monkeypatch.setenv("CBTEST_REPS", "200")
    monkeypatch.setenv("CBTEST_LOG_LEVEL", "WARNING")
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def uniform():
    return DistributionSpec.uniform()


@pytest.fixture
def mixture():
    return builtin_distribution("mixture")


@pytest.fixture
def example_alt():
    return builtin_alternative("example-4-2")


@pytest.fixture
def two_pairs():
    return LabeledSample([0.2, 0.5], [0.7, 0.1])


@pytest.fixture
def two_pairs_blind():
    return ColourBlindSample([0.7, 0.5], [0.2, 0.1])

