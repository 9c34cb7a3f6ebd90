"""
Shared pytest fixtures
Provides small hand-checkable score sets, seeded generators and file writers
"""

import pytest
import numpy as np
import sys
import os

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.scores import ScoreSet, write_scores
from src.shiftsim import GeneratorSpec, generate_synthetic


# ============================================================================
# SMALL FIXED SCORE SETS
# ============================================================================

@pytest.fixture
def tiny_val():
    """Ten labelled records at t=0.5 with both prediction sides and both classes per side"""
    scores = [0.95, 0.85, 0.75, 0.65, 0.55, 0.45, 0.35, 0.25, 0.15, 0.05]
    labels = [1, 1, 1, 0, 1, 0, 1, 0, 0, 0]
    return ScoreSet.from_arrays(scores, labels=labels, ids=[f"v{i}" for i in range(10)])


@pytest.fixture
def tiny_test():
    """Eight unlabelled records with a shifted score distribution"""
    scores = [0.9, 0.8, 0.6, 0.52, 0.48, 0.3, 0.2, 0.1]
    return ScoreSet.from_arrays(scores, ids=[f"t{i}" for i in range(8)])


@pytest.fixture
def grouped_set():
    """Labelled set with majority and minority tags"""
    rng = np.random.default_rng(7)
    scores = rng.random(60)
    labels = (rng.random(60) < scores).astype(int)
    groups = ["majority"] * 40 + ["minority"] * 20
    return ScoreSet.from_arrays(scores, labels=labels, groups=groups)


# ============================================================================
# SYNTHETIC DATA FACTORIES
# ============================================================================

@pytest.fixture
def synthetic():
    """Factory for generator-backed labelled score sets"""
    def _make(n=2000, seed=1, **kwargs):
        return generate_synthetic(GeneratorSpec(n=n, seed=seed, **kwargs))
    return _make


@pytest.fixture(scope="session")
def calibrated_pair():
    """Calibrated i.i.d. validation and test sets (uniform latent, n=4000 each)"""
    val = generate_synthetic(GeneratorSpec(n=4000, seed=101))
    test = generate_synthetic(GeneratorSpec(n=4000, seed=202))
    return val, test


@pytest.fixture
def rng():
    """Seeded generator for fuzz tests"""
    return np.random.default_rng(12345)


# ============================================================================
# FILE FIXTURES
# ============================================================================

@pytest.fixture
def score_file(tmp_path):
    """Write a ScoreSet to a CSV file and return its path"""
    def _write(score_set, name="scores.csv"):
        return write_scores(score_set, tmp_path / name)
    return _write
