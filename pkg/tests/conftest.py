"""Shared fixtures: small synthetic banks sized for fast tests."""

import pytest

from protorestore.synthgen import SynthSpec, generate


@pytest.fixture(scope="session")
def small_spec():
    return SynthSpec(
        n_classes=10,
        dim=8,
        per_class=30,
        cluster_std=1.0,
        center_scale=1.0,
        outlier_frac=0.3,
        outlier_offset=6.0,
        seed=7,
        split_counts=(4, 2, 4),
    )


@pytest.fixture(scope="session")
def small_bank(small_spec):
    bank, _ = generate(small_spec)
    return bank


@pytest.fixture(scope="session")
def small_truth(small_spec):
    _, truth = generate(small_spec)
    return truth
