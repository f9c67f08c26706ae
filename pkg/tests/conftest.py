import numpy as np
import pytest

from contexture import DiscreteDistribution, FiniteContext


@pytest.fixture
def two_state():
    """Noisy 2-state channel with uniform marginal: s = (1, 0.8)."""
    return FiniteContext(np.array([[0.9, 0.1], [0.1, 0.9]]),
                         DiscreteDistribution.uniform(2),
                         label="channel", same_support=True)


@pytest.fixture
def independent_context():
    """Rows all equal to the context marginal: only the constant mode."""
    base = np.array([0.2, 0.3, 0.5])
    rows = np.tile(base, (4, 1))
    return FiniteContext(rows, DiscreteDistribution.uniform(4),
                         label="independent")


@pytest.fixture
def identity_context():
    return FiniteContext(np.eye(2), DiscreteDistribution.uniform(2),
                         label="identity", same_support=True)
