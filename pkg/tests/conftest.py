import numpy as np
import pytest

from rankfair.fairopt import FeatureMatrix


def biased_feature_matrix(seed: int = 7) -> FeatureMatrix:
    """100 rows, 4 features, 30 protected. Features and scores are shifted
    against the protected group, so the score-induced ranking puts most
    protected items near the bottom (rKL of that ranking is well above 0.2
    for this seed; asserted where it matters)."""
    rng = np.random.default_rng(seed)
    n, m = 100, 4
    prot = np.zeros(n, dtype=bool)
    prot[:30] = True
    shift = np.where(prot, -0.35, 0.35)[:, None] * np.array([1, 1, 0.5, 0.5])
    x = np.clip(rng.normal(0.5, 0.15, (n, m)) + shift, 0, 1)
    raw = x.mean(axis=1) + rng.normal(0, 0.03, n)
    y = (raw - raw.min()) / (raw.max() - raw.min())
    return FeatureMatrix(
        x=x, protected=prot, y=y, ids=tuple(f"i{j:03d}" for j in range(n))
    )


@pytest.fixture
def biased_features() -> FeatureMatrix:
    return biased_feature_matrix()
