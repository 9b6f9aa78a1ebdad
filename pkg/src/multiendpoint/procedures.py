"""Nonrandomized decision procedures.

Every rule maps observations of shape (k,) or (n, k) to 0/1 actions of the
same shape; a 1 in position i means H_i is rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .model import DimensionError, norm_cdf

BISECTION_MAX_ITER = 200
BISECTION_TOL = 1e-12


class StripDomainError(ValueError):
    """t lies outside the open strip (2 C1, C1 + C2)."""


@dataclass(frozen=True)
class CriticalValues:
    c: tuple

    def __post_init__(self):
        c = tuple(float(x) for x in np.ravel(self.c))
        if not c:
            raise ValueError("need at least one critical value")
        if any(b <= a for a, b in zip(c, c[1:])):
            raise ValueError(f"critical values must be strictly increasing, got {c}")
        object.__setattr__(self, "c", c)

    @property
    def k(self) -> int:
        return len(self.c)

    def array(self) -> np.ndarray:
        return np.array(self.c)


def as_critical(c) -> CriticalValues:
    return c if isinstance(c, CriticalValues) else CriticalValues(tuple(np.ravel(c)))


@dataclass(frozen=True)
class ProcedureSpec:
    """A named, deterministic rule.

    ``equivariant`` declares that rule(gz) = g rule(z) for every coordinate
    permutation g; the admissibility scanner spot-checks the claim.
    """

    name: str
    rule: Callable[[np.ndarray], np.ndarray]
    k: int | None = None
    equivariant: bool = True

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.k is not None and z.shape[-1:] != (self.k,):
            raise DimensionError(f"{self.name} expects k={self.k}, got shape {z.shape}")
        if z.ndim == 1:
            return self.rule(z[None, :])[0]
        return self.rule(z)


def _as_batch(z) -> tuple[np.ndarray, bool]:
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        return z[None, :], True
    return z, False


def step_up(c, z) -> np.ndarray:
    """Step-up procedure.

    Order statistics are compared with C_1 < ... < C_k from the smallest
    upward. At the first j with Z_(j) > C_j the hypotheses of
    Z_(j), ..., Z_(k) are rejected; the ones below are accepted. Z_(j) = C_j
    counts as acceptance. Ties among observations are ordered by index.
    """
    cv = as_critical(c).array()
    zb, single = _as_batch(z)
    if zb.shape[-1] != cv.size:
        raise DimensionError(f"z has length {zb.shape[-1]}, got {cv.size} critical values")
    order = np.argsort(zb, axis=-1, kind="stable")
    zs = np.take_along_axis(zb, order, axis=-1)
    reject_sorted = np.logical_or.accumulate(zs > cv, axis=-1)
    out = np.empty(zb.shape, dtype=np.int8)
    np.put_along_axis(out, order, reject_sorted.astype(np.int8), axis=-1)
    return out[0] if single else out


def marginal(c: float, z) -> np.ndarray:
    """Reject H_i iff z_i > c, coordinate by coordinate."""
    return (np.asarray(z, dtype=float) > c).astype(np.int8)


# ---------------------------------------------------------------------------
# the k = 2 procedure that improves on step-up inside the strip


@dataclass(frozen=True)
class StripImprovement:
    c1: float
    c2: float
    rho: float = 0.0
    sigma2: float = 1.0

    def __post_init__(self):
        if not self.c1 < self.c2:
            raise ValueError(f"need c1 < c2, got {self.c1}, {self.c2}")
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho}")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")

    @property
    def s(self) -> float:
        """sqrt(2 sigma2 (1 - rho)); P(Z1 < x | Z1 + Z2 = t) = Phi((2x - t)/s) at mu1 = mu2."""
        return math.sqrt(2.0 * self.sigma2 * (1.0 - self.rho))

    @property
    def lo(self) -> float:
        return 2.0 * self.c1

    @property
    def hi(self) -> float:
        return self.c1 + self.c2

    def inside(self, t):
        t = np.asarray(t, dtype=float)
        return (t > self.lo) & (t < self.hi)

    def _check(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if not np.all(self.inside(t)):
            raise StripDomainError(f"t must lie in ({self.lo}, {self.hi})")
        return t


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def d_of_t(s: StripImprovement, t):
    """D(t) = P(t - C1 < Z1 < C2 | t) - P(t/2 < Z1 < t - C1 | t) at mu1 = mu2."""
    t = s._check(t)
    d = norm_cdf((2 * s.c2 - t) / s.s) - 2 * norm_cdf((t - 2 * s.c1) / s.s) + 0.5
    return _scalar(d)


def c_star_residual(s: StripImprovement, t, cstar):
    t = np.asarray(t, dtype=float)
    return _scalar(norm_cdf((2 * np.asarray(cstar) - t) / s.s) - 0.5 - np.abs(d_of_t(s, t)))


def c_star(s: StripImprovement, t):
    """Solve Phi((2C* - t)/s) - 1/2 = |D(t)| for C* >= t/2 by bisection.

    The left side rises strictly from 0 toward 1/2 on [t/2, inf) and
    |D(t)| < 1/2, so [t/2, t/2 + 10 s] brackets a unique root. Works
    elementwise on arrays.
    """
    t = s._check(t)
    target = np.abs(np.asarray(d_of_t(s, t)))
    lo = t / 2.0
    hi = lo + 10.0 * s.s
    for _ in range(BISECTION_MAX_ITER):
        mid = 0.5 * (lo + hi)
        below = norm_cdf((2 * mid - t) / s.s) - 0.5 < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= BISECTION_TOL):
            break
    return _scalar(0.5 * (lo + hi))


def psi_star_on_line(z1, t, cstar, d_positive):
    """Actions of the improved rule on the line z1 + z2 = t inside the strip.

    Returns (a1, a2) arrays. Boundary points go to the region with smaller
    z1; with D(t) = 0 (cstar = t/2) the middle region is empty.
    """
    z1 = np.asarray(z1, dtype=float)
    low = z1 <= t - cstar
    high = z1 > cstar
    middle = ~(low | high)
    mid_action = np.where(d_positive, 0, 1)
    a1 = np.where(high, 1, np.where(middle, mid_action, 0)).astype(np.int8)
    a2 = np.where(low, 1, np.where(middle, mid_action, 0)).astype(np.int8)
    return a1, a2


def psi_star(s: StripImprovement, z) -> np.ndarray:
    """Step-up off the strip 2 C1 < z1 + z2 < C1 + C2, modified on it via C*(t)."""
    zb, single = _as_batch(z)
    if zb.shape[-1] != 2:
        raise DimensionError(f"psi_star is defined for k=2 only, got length {zb.shape[-1]}")
    out = step_up((s.c1, s.c2), zb)
    t = zb[:, 0] + zb[:, 1]
    idx = np.flatnonzero(s.inside(t))
    if idx.size:
        ts = t[idx]
        d = np.asarray(d_of_t(s, ts))
        cs = np.asarray(c_star(s, ts))
        a1, a2 = psi_star_on_line(zb[idx, 0], ts, cs, d > 0)
        out[idx, 0] = a1
        out[idx, 1] = a2
    return out[0] if single else out


def psi_star_direct(s: StripImprovement, z) -> np.ndarray:
    """Same rule as :func:`psi_star` without solving for C*.

    Phi((2x - t)/s) - 1/2 increases in x, so z1 > C* iff
    Phi((2 z1 - t)/s) - 1/2 > |D(t)|, and z1 <= t - C* iff the same holds
    with z1 replaced by z2 (ties aside). Used for bulk Monte Carlo.
    """
    zb, single = _as_batch(z)
    if zb.shape[-1] != 2:
        raise DimensionError(f"psi_star is defined for k=2 only, got length {zb.shape[-1]}")
    out = step_up((s.c1, s.c2), zb)
    t = zb[:, 0] + zb[:, 1]
    idx = np.flatnonzero(s.inside(t))
    if idx.size:
        ts = t[idx]
        d = np.asarray(d_of_t(s, ts))
        target = np.abs(d)
        high = norm_cdf((2 * zb[idx, 0] - ts) / s.s) - 0.5 > target
        low = norm_cdf((2 * zb[idx, 1] - ts) / s.s) - 0.5 >= target
        middle = ~(low | high)
        mid_action = np.where(d > 0, 0, 1)
        out[idx, 0] = np.where(high, 1, np.where(middle, mid_action, 0))
        out[idx, 1] = np.where(low, 1, np.where(middle, mid_action, 0))
    return out[0] if single else out


def w_value(z1: float, t: float, v, b: float, s: StripImprovement, cstar: float) -> float:
    """W(z; v) = (psi_SU(z) - psi*(z))'(1 - (b+1) v) at z = (z1, t - z1), D(t) > 0.

    Inside the usual layout t - C2 < C1 < t - C* < C* < t - C1 < C2 this
    reproduces the seven-row table of the construction. When C* >= t - C1 the
    rows (C*, t - C1) and (t - C1, C2) collapse and the value comes straight
    from the two procedures.
    """
    if not s.inside(t):
        raise StripDomainError(f"t={t} outside ({s.lo}, {s.hi})")
    if not d_of_t(s, t) > 0:
        raise ValueError("w_value needs D(t) > 0")
    if not cstar >= t / 2:
        raise ValueError(f"cstar={cstar} below t/2={t / 2}")
    if not b > 0:
        raise ValueError("b must be positive")
    v = np.asarray(v, dtype=float)
    su = step_up((s.c1, s.c2), np.array([z1, t - z1]))
    a1, a2 = psi_star_on_line(z1, t, cstar, True)
    diff = su - np.array([a1, a2], dtype=float)
    return float(diff @ (1.0 - (b + 1.0) * v))


# ---------------------------------------------------------------------------
# registry


def step_up_procedure(c) -> ProcedureSpec:
    cv = as_critical(c)
    return ProcedureSpec("step-up", lambda z: step_up(cv, z), k=cv.k)


def marginal_procedure(c: float, k: int | None = None) -> ProcedureSpec:
    return ProcedureSpec("marginal", lambda z: marginal(c, z), k=k)


def psi_star_procedure(s: StripImprovement) -> ProcedureSpec:
    return ProcedureSpec("psi-star", lambda z: psi_star(s, z), k=2)


def constant_procedure(k: int, reject: bool) -> ProcedureSpec:
    name = "always-reject" if reject else "always-accept"
    value = np.int8(1 if reject else 0)
    return ProcedureSpec(name, lambda z: np.full(np.shape(z), value, dtype=np.int8), k=k)


def strip_for(c: Sequence[float], rho: float, sigma2: float) -> StripImprovement:
    cv = as_critical(c)
    if cv.k != 2:
        raise DimensionError("psi-star needs exactly two critical values")
    return StripImprovement(cv.c[0], cv.c[1], rho=rho, sigma2=sigma2)
