"""Equicorrelated (intraclass) normal model.

Everything here uses the closed-form inverse and determinant of

    Sigma = sigma2 * [(1 - rho) I + rho 11']

so densities and precision products cost O(k) and never factor a matrix.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np
from scipy.special import ndtr, ndtri

ArrayLike = Union[Sequence[float], np.ndarray]

LOG_2PI = math.log(2.0 * math.pi)

# Draws are produced in fixed-size blocks, block i seeded from
# SeedSequence(seed).spawn(...)[i]; output never depends on how blocks are
# distributed over workers.
SUBSTREAM_SIZE = 1 << 16
GENERATOR_NAME = "numpy.random.PCG64/SeedSequence-substreams"


class DimensionError(ValueError):
    """Vector length does not match the model dimension."""


def norm_cdf(x):
    """Standard normal CDF (cephes ndtr, absolute error ~1e-16)."""
    return ndtr(x)


def norm_ppf(p):
    """Inverse standard normal CDF."""
    return ndtri(p)


@dataclass(frozen=True)
class IntraclassModel:
    k: int
    sigma2: float = 1.0
    rho: float = 0.0

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2!r}")
        lower = -1.0 if self.k == 1 else -1.0 / (self.k - 1)
        if not lower < self.rho < 1.0:
            raise ValueError(
                f"rho={self.rho!r} outside ({lower:g}, 1); Sigma is not positive definite"
            )

    @property
    def G(self) -> float:
        return self.rho / (1.0 + (self.k - 1) * self.rho)

    @property
    def scale(self) -> float:
        """sigma2 * (1 - rho): the diagonal scale of the precision matrix."""
        return self.sigma2 * (1.0 - self.rho)

    def log_det(self) -> float:
        k, rho = self.k, self.rho
        return k * math.log(self.sigma2) + (k - 1) * math.log1p(-rho) + math.log1p((k - 1) * rho)

    def covariance(self) -> np.ndarray:
        """Dense Sigma. Only used by callers that want an explicit matrix."""
        k = self.k
        return self.sigma2 * ((1.0 - self.rho) * np.eye(k) + self.rho * np.ones((k, k)))

    def check(self, x: ArrayLike, what: str = "vector") -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.k,):
            raise DimensionError(f"{what} has length {x.shape[-1:] or 'scalar'}, model has k={self.k}")
        return x


@dataclass(frozen=True)
class MeanVector:
    """A point of the parameter space: every coordinate nonnegative."""

    mu: tuple
    v: tuple = field(init=False)
    m: int = field(init=False)

    def __post_init__(self):
        mu = tuple(float(x) for x in np.ravel(self.mu))
        if not all(math.isfinite(x) for x in mu):
            raise ValueError(f"mean vector must be finite, got {mu}")
        if any(x < 0 for x in mu):
            raise ValueError(f"mean vector must be nonnegative, got {mu}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "v", tuple(int(x > 0) for x in mu))
        object.__setattr__(self, "m", sum(x > 0 for x in mu))

    @property
    def k(self) -> int:
        return len(self.mu)

    def array(self) -> np.ndarray:
        return np.array(self.mu, dtype=float)


def as_mean(mu) -> MeanVector:
    return mu if isinstance(mu, MeanVector) else MeanVector(tuple(np.ravel(mu)))


def precision_apply(model: IntraclassModel, x: ArrayLike) -> np.ndarray:
    """Sigma^{-1} x, along the last axis of x."""
    x = model.check(x)
    return (x - model.G * x.sum(axis=-1, keepdims=True)) / model.scale


def log_density(model: IntraclassModel, z: ArrayLike, mu) -> np.ndarray | float:
    """log N(z; mu, Sigma). ``z`` may be a single vector or an (n, k) batch."""
    z = model.check(z, "z")
    mu_arr = model.check(mu.array() if isinstance(mu, MeanVector) else mu, "mu")
    d = z - mu_arr
    quad = np.sum(d * precision_apply(model, d), axis=-1)
    out = -0.5 * (model.k * LOG_2PI + model.log_det() + quad)
    return float(out) if np.ndim(out) == 0 else out


def _sqrt_covariance(model: IntraclassModel) -> np.ndarray:
    # Symmetric root from the two eigenspaces of Sigma: span(1) and its complement.
    k = model.k
    lam_perp = model.sigma2 * (1.0 - model.rho)
    lam_one = model.sigma2 * (1.0 + (k - 1) * model.rho)
    J = np.ones((k, k)) / k
    return math.sqrt(lam_perp) * (np.eye(k) - J) + math.sqrt(lam_one) * J


def substream_seeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    blocks = -(-n // SUBSTREAM_SIZE)
    return np.random.SeedSequence(seed).spawn(blocks)


def _sample_block(model: IntraclassModel, mu: np.ndarray, size: int, ss) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(ss))
    k = model.k
    sigma = math.sqrt(model.sigma2)
    if model.rho >= 0:
        w0 = rng.standard_normal((size, 1))
        w = rng.standard_normal((size, k))
        noise = sigma * (math.sqrt(model.rho) * w0 + math.sqrt(1.0 - model.rho) * w)
    else:
        noise = rng.standard_normal((size, k)) @ _sqrt_covariance(model)
    return mu + noise


def iter_samples(model: IntraclassModel, mu, n: int, seed: int):
    """Yield successive blocks of draws; concatenated they equal ``sample``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    mu_arr = model.check(as_mean(mu).array(), "mu")
    for i, ss in enumerate(substream_seeds(seed, n)):
        size = min(SUBSTREAM_SIZE, n - i * SUBSTREAM_SIZE)
        yield _sample_block(model, mu_arr, size, ss)


def sample_block(model: IntraclassModel, mu, n: int, seed: int, block: int) -> np.ndarray:
    """Draws of substream ``block`` alone, for parallel workers."""
    mu_arr = model.check(as_mean(mu).array(), "mu")
    ss = substream_seeds(seed, n)[block]
    size = min(SUBSTREAM_SIZE, n - block * SUBSTREAM_SIZE)
    return _sample_block(model, mu_arr, size, ss)


def sample(model: IntraclassModel, mu, n: int, seed: int) -> np.ndarray:
    """``n`` i.i.d. draws from N(mu, Sigma), shape (n, k)."""
    return np.concatenate(list(iter_samples(model, mu, n, seed)), axis=0)


def conditional_z1_given_sum(model: IntraclassModel, mu, t: float) -> tuple[float, float]:
    """Mean and variance of Z1 given Z1 + Z2 = t (k = 2 only)."""
    if model.k != 2:
        raise DimensionError(f"conditional_z1_given_sum needs k=2, got k={model.k}")
    mu1, mu2 = as_mean(mu).mu
    return t / 2.0 + (mu1 - mu2) / 2.0, model.sigma2 * (1.0 - model.rho) / 2.0


# ---------------------------------------------------------------------------
# action lattice


def action_lattice(k: int) -> list[tuple[int, ...]]:
    """All 2^k action vectors, in lexicographic order."""
    return list(itertools.product((0, 1), repeat=k))


def validate_decision_mass(delta: Mapping[tuple, float]) -> dict[tuple, float]:
    if not delta:
        raise ValueError("decision mass is empty")
    k = len(next(iter(delta)))
    out = {}
    for a, w in delta.items():
        a = tuple(int(x) for x in a)
        if len(a) != k or any(x not in (0, 1) for x in a):
            raise ValueError(f"invalid action {a}")
        if w < 0:
            raise ValueError(f"negative mass {w} on action {a}")
        out[a] = out.get(a, 0.0) + float(w)
    total = sum(out.values())
    if abs(total - 1.0) > 1e-12:
        raise ValueError(f"decision mass sums to {total!r}, not 1")
    return out


def psi_from_delta(delta: Mapping[tuple, float]) -> np.ndarray:
    """Rejection probabilities psi_i = sum of delta over actions with a_i = 1."""
    delta = validate_decision_mass(delta)
    k = len(next(iter(delta)))
    psi = np.zeros(k)
    for a, w in delta.items():
        psi += w * np.asarray(a, dtype=float)
    return np.clip(psi, 0.0, 1.0)


# ---------------------------------------------------------------------------
# partial sums


def partial_sums(z: ArrayLike) -> np.ndarray:
    """t_j = z_j + ... + z_k along the last axis."""
    z = np.asarray(z, dtype=float)
    return np.flip(np.cumsum(np.flip(z, axis=-1), axis=-1), axis=-1)


def from_partial_sums(t: ArrayLike) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    nxt = np.concatenate([t[..., 1:], np.zeros_like(t[..., :1])], axis=-1)
    return t - nxt


def in_region_s(t: ArrayLike) -> bool | np.ndarray:
    """Membership in S: t_k > t_{k-1} - t_k > ... > t_1 - t_2.

    Equivalent to strictly ascending z.
    """
    z = from_partial_sums(t)
    out = np.all(np.diff(z, axis=-1) > 0, axis=-1)
    return bool(out) if np.ndim(out) == 0 else out
