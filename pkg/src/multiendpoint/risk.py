"""Vector risk (R0, R1) by Monte Carlo, and the exact k = 2 comparison.

R0 counts false rejections (rejected H_i with mu_i = 0), R1 false
acceptances (accepted H_i with mu_i > 0).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import IntraclassModel, as_mean, norm_cdf, sample_block, substream_seeds
from .procedures import (
    ProcedureSpec,
    StripImprovement,
    c_star,
    d_of_t,
    psi_star_direct,
    psi_star_on_line,
    step_up,
)
from .quadrature import integrate

MIN_DRAWS = 100


@dataclass(frozen=True)
class RiskReport:
    mu: tuple
    r0: float
    r1: float
    se0: float
    se1: float
    n: int
    seed: int


def _se(total: float, total_sq: float, n: int) -> float:
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * n / (n - 1)
    return math.sqrt(var / n)


def _blocks(model: IntraclassModel, mu, n: int, seed: int, fn, workers: int):
    """Apply ``fn`` to every substream block; results come back in block order."""
    count = len(substream_seeds(seed, n))

    def run(i):
        return fn(sample_block(model, mu, n, seed, i))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, range(count)))
    return [run(i) for i in range(count)]


def _decision_sums(proc: ProcedureSpec, v: np.ndarray):
    def fn(z):
        a = np.asarray(proc(z), dtype=float)
        x0 = a @ (1.0 - v)
        x1 = (1.0 - a) @ v
        return np.array([x0.sum(), (x0 * x0).sum(), x1.sum(), (x1 * x1).sum()]), a.sum(axis=0)

    return fn


def vector_risk_mc(
    proc: ProcedureSpec,
    model: IntraclassModel,
    mu,
    n: int,
    seed: int,
    workers: int = 1,
) -> RiskReport:
    """Estimate (R0, R1) from ``n`` draws with plug-in standard errors."""
    if n < MIN_DRAWS:
        raise ValueError(f"n must be at least {MIN_DRAWS}, got {n}")
    mean = as_mean(mu)
    v = np.array(mean.v, dtype=float)
    parts = _blocks(model, mean, n, seed, _decision_sums(proc, v), workers)
    s = np.sum([p[0] for p in parts], axis=0)
    r1 = float(s[2] / n) if mean.m else 0.0
    se1 = _se(s[2], s[3], n) if mean.m else 0.0
    return RiskReport(mean.mu, float(s[0] / n), r1, _se(s[0], s[1], n), se1, n, seed)


def component_risks(
    proc: ProcedureSpec,
    model: IntraclassModel,
    mu,
    n: int,
    seed: int,
    workers: int = 1,
) -> np.ndarray:
    """Per-endpoint risks (1 - v_i) E psi_i + v_i (1 - E psi_i) on the same draws as vector_risk_mc."""
    if n < MIN_DRAWS:
        raise ValueError(f"n must be at least {MIN_DRAWS}, got {n}")
    mean = as_mean(mu)
    v = np.array(mean.v, dtype=float)
    parts = _blocks(model, mean, n, seed, _decision_sums(proc, v), workers)
    reject_rate = np.sum([p[1] for p in parts], axis=0) / n
    return (1.0 - v) * reject_rate + v * (1.0 - reject_rate)


def linear_combo_risk(report: RiskReport, b: float) -> tuple[float, float]:
    """R0 + b R1 and its standard error (the two components treated as independent)."""
    if not b > 0:
        raise ValueError(f"b must be positive, got {b}")
    return report.r0 + b * report.r1, math.sqrt(report.se0**2 + (b * report.se1) ** 2)


# ---------------------------------------------------------------------------
# k = 2: exact conditional comparison of step-up and psi-star


def _line_terms(s: StripImprovement, mu1_minus_mu2: float, t: np.ndarray):
    """E[(psi_SU - psi*) | Z1 + Z2 = t] per coordinate, shape (m, 2).

    The z1-line is cut at t - C2, C1, t - C*, C*, t - C1, C2; both procedures
    are constant between cuts, so each piece contributes its normal mass
    times the difference of actions at the piece's midpoint.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    d = np.asarray(d_of_t(s, t))
    cs = np.asarray(c_star(s, t))
    cuts = np.sort(np.stack([t - s.c2, np.full_like(t, s.c1), t - cs, cs, t - s.c1, np.full_like(t, s.c2)], axis=1), axis=1)
    lo = np.concatenate([np.full((t.size, 1), -np.inf), cuts], axis=1)
    hi = np.concatenate([cuts, np.full((t.size, 1), np.inf)], axis=1)
    mid = np.where(np.isinf(lo), hi - 1.0, np.where(np.isinf(hi), lo + 1.0, 0.5 * (lo + hi)))

    tt = np.broadcast_to(t[:, None], mid.shape)
    su = step_up((s.c1, s.c2), np.stack([mid, tt - mid], axis=-1).reshape(-1, 2)).reshape(mid.shape + (2,))
    a1, a2 = psi_star_on_line(mid, tt, cs[:, None], (d > 0)[:, None])
    diff = su.astype(float) - np.stack([a1, a2], axis=-1)

    centre = t / 2.0 + mu1_minus_mu2 / 2.0
    sd = s.s / 2.0  # sqrt(sigma2 (1 - rho) / 2)
    mass = norm_cdf((hi - centre[:, None]) / sd) - norm_cdf((lo - centre[:, None]) / sd)
    return np.einsum("mj,mjc->mc", mass, diff)


def conditional_w_expectation(s: StripImprovement, b, mu, t, v=None):
    """E_mu[W(Z; v) | Z1 + Z2 = t] with W = (psi_SU - psi*)'(1 - (b+1) v).

    ``v`` defaults to the pattern of ``mu``; passing it explicitly evaluates
    the expectation for a pattern other than mu's own (e.g. every v at
    mu1 = mu2). Vectorised over ``t`` and ``b``.
    """
    mean = as_mean(mu)
    if mean.k != 2:
        raise ValueError("conditional_w_expectation needs a length-2 mean")
    b_arr = np.asarray(b, dtype=float)
    if np.any(b_arr <= 0):
        raise ValueError("b must be positive")
    vv = np.asarray(mean.v if v is None else v, dtype=float)
    t_arr = s._check(t)
    terms = _line_terms(s, mean.mu[0] - mean.mu[1], t_arr)  # (m, 2)
    plain = terms.sum(axis=1)
    along_v = terms @ vv
    out = plain[:, None] - (b_arr.reshape(-1)[None, :] + 1.0) * along_v[:, None]
    out = out.reshape(t_arr.shape + b_arr.shape)
    return float(out) if out.ndim == 0 else out


def d_zero(s: StripImprovement) -> float:
    """The unique t in the strip with D(t) = 0 (D decreases strictly)."""
    lo, hi = s.lo, s.hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if d_of_t(s, mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def risk_difference_quadrature(s: StripImprovement, b, mu, tol: float = 1e-8):
    """Delta(mu) = [R0 + b R1](step-up) - [R0 + b R1](psi*).

    Integrates the conditional expectation against the density of
    T = Z1 + Z2 ~ N(mu1 + mu2, 2 sigma2 (1 + rho)) over the strip, split at
    the sign change of D. Raises QuadratureError if ``tol`` is not reached.
    """
    mean = as_mean(mu)
    b_arr = np.atleast_1d(np.asarray(b, dtype=float))
    centre = mean.mu[0] + mean.mu[1]
    sd_t = math.sqrt(2.0 * s.sigma2 * (1.0 + s.rho))

    def integrand(t):
        dens = np.exp(-0.5 * ((t - centre) / sd_t) ** 2) / (sd_t * math.sqrt(2.0 * math.pi))
        return conditional_w_expectation(s, b_arr, mean, t) * dens[:, None]

    res = integrate(integrand, s.lo, s.hi, breakpoints=[d_zero(s)], tol=tol)
    value = np.asarray(res.value)
    return float(value[0]) if np.ndim(b) == 0 else value


def _mc_difference_sums(s: StripImprovement, z: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Per-block sums of W and W^2 for each row of ``weights`` (one per b)."""
    out = np.zeros((weights.shape[0], 2))
    t = z[:, 0] + z[:, 1]
    idx = np.flatnonzero(s.inside(t))
    if idx.size == 0:
        return out
    zs = z[idx]
    diff = (step_up((s.c1, s.c2), zs) - psi_star_direct(s, zs)).astype(float)
    w = diff @ weights.T
    out[:, 0] = w.sum(axis=0)
    out[:, 1] = (w * w).sum(axis=0)
    return out


def _b_weights(b_arr: np.ndarray, mean) -> np.ndarray:
    return 1.0 - (b_arr[:, None] + 1.0) * np.asarray(mean.v, dtype=float)[None, :]


def risk_difference_mc(s: StripImprovement, b, mu, n: int, seed: int, workers: int = 1):
    """Common-random-number estimate of Delta(mu): both rules see the same draws.

    Returns (delta, se), each shaped like ``b``.
    """
    if n < MIN_DRAWS:
        raise ValueError(f"n must be at least {MIN_DRAWS}, got {n}")
    mean = as_mean(mu)
    model = IntraclassModel(2, s.sigma2, s.rho)
    b_arr = np.atleast_1d(np.asarray(b, dtype=float))
    weights = _b_weights(b_arr, mean)
    tot = np.sum(_blocks(model, mean, n, seed, lambda z: _mc_difference_sums(s, z, weights), workers), axis=0)
    delta = tot[:, 0] / n
    se = np.array([_se(a, q, n) for a, q in tot])
    if np.ndim(b) == 0:
        return float(delta[0]), float(se[0])
    return delta, se


def risk_difference_mc_grid(s: StripImprovement, b, mus, n: int, seed: int):
    """risk_difference_mc over many means, drawing each noise block once.

    Draws are mu + noise with noise independent of mu, so every grid point
    sees exactly the draws its own risk_difference_mc call would. Returns
    arrays (delta, se) of shape (len(mus), len(b)).
    """
    if n < MIN_DRAWS:
        raise ValueError(f"n must be at least {MIN_DRAWS}, got {n}")
    means = [as_mean(m) for m in mus]
    model = IntraclassModel(2, s.sigma2, s.rho)
    b_arr = np.atleast_1d(np.asarray(b, dtype=float))
    weights = [_b_weights(b_arr, m) for m in means]
    tot = np.zeros((len(means), b_arr.size, 2))
    zero = (0.0, 0.0)
    for i in range(len(substream_seeds(seed, n))):
        noise = sample_block(model, zero, n, seed, i)
        for j, m in enumerate(means):
            tot[j] += _mc_difference_sums(s, m.array() + noise, weights[j])
    delta = tot[:, :, 0] / n
    se = np.vectorize(lambda a, q: _se(a, q, n))(tot[:, :, 0], tot[:, :, 1])
    return delta, se
