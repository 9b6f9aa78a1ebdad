import numpy as np
import pytest

from multiendpoint.bayes import SymmetricDiscretePrior
from multiendpoint.model import IntraclassModel


def random_atom(rng, k, allow_zero=True):
    """Nonnegative mean with a random zero pattern; positive entries in [0.3, 3]."""
    mu = rng.uniform(0.3, 3.0, size=k)
    if allow_zero:
        mu[rng.random(k) < 0.5] = 0.0
    return tuple(np.round(mu, 3))


def random_prior(rng, k, beta=None):
    """A symmetrised finite prior; xi_1 always carries at least one atom with a zero."""
    if beta is None:
        beta = float(rng.uniform(0.05, 0.95))
    atoms0 = [(rng.uniform(0.5, 2.0), random_atom(rng, k)) for _ in range(rng.integers(1, 4))]
    atoms1 = [(rng.uniform(0.5, 2.0), random_atom(rng, k)) for _ in range(rng.integers(1, 4))]
    zero_one = np.zeros(k)
    zero_one[1:] = rng.uniform(0.3, 3.0, size=k - 1)
    atoms1.append((rng.uniform(0.5, 2.0), tuple(np.round(zero_one, 3))))
    return SymmetricDiscretePrior.build(beta, atoms0, atoms1, k=k)


def random_model(rng, k):
    rho = float(rng.uniform(-0.9 / max(k - 1, 1), 0.8)) if k > 1 else 0.0
    return IntraclassModel(k, float(rng.uniform(0.5, 2.0)), rho)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
