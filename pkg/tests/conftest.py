import sys
from pathlib import Path

import pytest

# Make the sibling _oracles module importable from any test file.
sys.path.insert(0, str(Path(__file__).parent))

from declink.preprocess import SynthConfig, generate_synthetic


@pytest.fixture(scope="session")
def synth_default():
    """The standard planted dataset: 5 clusters x 40 drugs x 12 diseases."""
    return generate_synthetic(SynthConfig())


@pytest.fixture(scope="session")
def synth_small():
    """A fast, fully observed variant for training-loop tests."""
    cfg = SynthConfig(
        n_clusters=3,
        drugs_per_cluster=20,
        diseases_per_cluster=8,
        feature_dim=16,
        noise_sigma=0.35,
        missing_rate=0.0,
        seed=11,
    )
    return generate_synthetic(cfg)
