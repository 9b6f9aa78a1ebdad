"""Symmetric Bayes rules for finite discrete priors.

The prior puts mass beta on theta = 0 (mean law xi_0) and 1 - beta on
theta = 1 (mean law xi_1). Both laws are finite atom sets, closed under
coordinate permutations. With the loss L_theta (false rejections when
theta = 0, false acceptances when theta = 1) the Bayes rule rejects H_i iff

    Q_i(z) = sum_{mu_i = 0} f(z|mu) [beta xi_0 + (1-beta) xi_1]
             / sum f(z|mu) xi_1   <   1 - beta.
"""

from __future__ import annotations

import csv
from collections import Counter
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from .model import IntraclassModel, action_lattice, log_density, precision_apply

ORACLE_MAX_K = 12
WEIGHT_TOL = 1e-12


class NumericalError(ArithmeticError):
    """A posterior quantity could not be represented."""


class PriorFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _distinct_permutations(items: tuple) -> list[tuple]:
    """Each distinct rearrangement once; a constant vector gives one, not k!."""
    counts = Counter(items)
    values = sorted(counts)
    out: list[tuple] = []

    def grow(prefix: list) -> None:
        if len(prefix) == len(items):
            out.append(tuple(prefix))
            return
        for v in values:
            if counts[v]:
                counts[v] -= 1
                prefix.append(v)
                grow(prefix)
                prefix.pop()
                counts[v] += 1

    grow([])
    return out


def _symmetrize(atoms: Iterable[tuple[float, Sequence[float]]], k: int):
    acc: dict[tuple, float] = {}
    for w, mu in atoms:
        mu = tuple(float(x) for x in mu)
        if len(mu) != k:
            raise ValueError(f"atom {mu} has length {len(mu)}, expected {k}")
        # averaging over all k! permutations puts equal mass on each distinct one
        perms = _distinct_permutations(mu)
        share = float(w) / len(perms)
        for p in perms:
            acc[p] = acc.get(p, 0.0) + share
    if not acc:
        return np.zeros((0, k)), np.zeros(0)
    keys = sorted(acc)
    return np.array(keys, dtype=float).reshape(len(keys), k), np.array([acc[p] for p in keys])


@dataclass(frozen=True, eq=False)
class SymmetricDiscretePrior:
    """Use :meth:`build`; it normalises and orbit-symmetrises the atoms."""

    beta: float
    mus0: np.ndarray
    w0: np.ndarray
    mus1: np.ndarray
    w1: np.ndarray

    @classmethod
    def build(cls, beta: float, atoms0, atoms1, k: int | None = None) -> "SymmetricDiscretePrior":
        atoms0 = [(float(w), tuple(mu)) for w, mu in atoms0]
        atoms1 = [(float(w), tuple(mu)) for w, mu in atoms1]
        if k is None:
            sample = atoms0 or atoms1
            if not sample:
                raise ValueError("prior has no atoms")
            k = len(sample[0][1])
        for w, mu in atoms0 + atoms1:
            if not w > 0:
                raise ValueError(f"atom weights must be positive, got {w}")
            if any(x < 0 or not math.isfinite(x) for x in mu):
                raise ValueError(f"atom means must be finite and nonnegative, got {mu}")
        mus0, w0 = _symmetrize(atoms0, k)
        mus1, w1 = _symmetrize(atoms1, k)
        if w0.size:
            w0 = w0 / w0.sum()
        if w1.size:
            w1 = w1 / w1.sum()
        return cls(float(beta), mus0, w0, mus1, w1)

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        for name, w in (("xi_0", self.w0), ("xi_1", self.w1)):
            if w.size and abs(w.sum() - 1.0) > WEIGHT_TOL:
                raise ValueError(f"{name} weights sum to {w.sum()!r}")
        if self.beta < 1.0 and self.w1.size == 0:
            raise ValueError("xi_1 must have atoms when beta < 1")
        if self.beta > 0.0 and self.w0.size == 0:
            raise ValueError("xi_0 must have atoms when beta > 0")

    @property
    def k(self) -> int:
        return self.mus0.shape[1] if self.w0.size else self.mus1.shape[1]

    def is_symmetric(self) -> bool:
        for mus, w in ((self.mus0, self.w0), (self.mus1, self.w1)):
            table = {tuple(m): x for m, x in zip(mus, w)}
            for m, x in table.items():
                for p in _distinct_permutations(m):
                    if abs(table.get(p, -1.0) - x) > WEIGHT_TOL:
                        return False
        return True


@dataclass(frozen=True)
class PosteriorSummary:
    q: np.ndarray
    log_marginal: float
    p_theta1: float
    p_v0: np.ndarray


def _log_f(model: IntraclassModel, z: np.ndarray, mus: np.ndarray) -> np.ndarray:
    """log f(z|mu) for a batch of z (n, k) against atoms (A, k) -> (n, A)."""
    if mus.shape[0] == 0:
        return np.zeros((z.shape[0], 0))
    return log_density(model, z[:, None, :], mus[None, :, :]).reshape(z.shape[0], mus.shape[0])


def _lse(a: np.ndarray, b: np.ndarray, axis: int) -> np.ndarray:
    if a.shape[axis] == 0:
        shape = list(np.broadcast_shapes(a.shape, b.shape))
        del shape[axis]
        return np.full(shape, -np.inf)
    with np.errstate(divide="ignore"):
        return logsumexp(a, b=b, axis=axis)


def _log_terms(prior: SymmetricDiscretePrior, model: IntraclassModel, z: np.ndarray):
    """Log numerators (n, k), log denominator (n,), log theta=0 mass (n,)."""
    lf0 = _log_f(model, z, prior.mus0)
    lf1 = _log_f(model, z, prior.mus1)
    null0 = (prior.mus0 == 0).astype(float)
    null1 = (prior.mus1 == 0).astype(float)
    # log(beta * sum_{xi_0, mu_i=0} w f) and the xi_1 analogue, per coordinate i
    with np.errstate(divide="ignore"):
        lb0 = math.log(prior.beta) if prior.beta > 0 else -np.inf
        lb1 = math.log1p(-prior.beta) if prior.beta < 1 else -np.inf
    num0 = lb0 + _lse(lf0[:, :, None], (prior.w0[:, None] * null0)[None], axis=1)
    num1 = lb1 + _lse(lf1[:, :, None], (prior.w1[:, None] * null1)[None], axis=1)
    with np.errstate(invalid="ignore"):
        num = np.logaddexp(num0, num1)
    den = _lse(lf1, prior.w1[None, :], axis=1)
    tot0 = lb0 + _lse(lf0, prior.w0[None, :], axis=1)
    return num, den, tot0, lb1


def _q_from_logs(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    if np.any(np.isnan(num)) or np.any(np.isnan(den)):
        raise NumericalError("posterior log-sum is NaN")
    if np.any(np.isposinf(den)) or np.any(np.isposinf(num)):
        raise NumericalError("posterior log-sum overflowed")
    with np.errstate(over="ignore", invalid="ignore"):
        q = np.exp(num - den[:, None])
    # empty xi_1 (beta = 1): the ratio is +inf by convention
    q[np.isneginf(den)] = np.inf
    return q


def q_values(prior: SymmetricDiscretePrior, model: IntraclassModel, z) -> np.ndarray:
    """Q_i(z) for every coordinate. Batched: (k,) -> (k,), (n, k) -> (n, k)."""
    z = model.check(z, "z")
    single = z.ndim == 1
    zb = z[None, :] if single else z
    num, den, _, _ = _log_terms(prior, model, zb)
    q = _q_from_logs(num, den)
    return q[0] if single else q


def q_value(prior: SymmetricDiscretePrior, model: IntraclassModel, z, i: int) -> float:
    """Q for coordinate ``i`` (0-based). The Bayes comparison is q < 1 - beta."""
    z = model.check(z, "z")
    if not 0 <= i < model.k:
        raise IndexError(f"coordinate {i} out of range for k={model.k}")
    return float(q_values(prior, model, z)[i])


def bayes_rule(prior: SymmetricDiscretePrior, model: IntraclassModel, z) -> np.ndarray:
    """Reject H_i iff Q_i(z) < 1 - beta; equality accepts."""
    q = q_values(prior, model, z)
    return (q < 1.0 - prior.beta).astype(np.int8)


def posterior_summary(prior: SymmetricDiscretePrior, model: IntraclassModel, z) -> PosteriorSummary:
    z = model.check(z, "z")
    if z.ndim != 1:
        raise ValueError("posterior_summary takes a single observation")
    num, den, tot0, lb1 = _log_terms(prior, model, z[None, :])
    q = _q_from_logs(num, den)[0]
    log_f = float(np.logaddexp(tot0[0], lb1 + den[0]))
    if not math.isfinite(log_f):
        raise NumericalError(f"marginal log density is {log_f}")
    p_theta1 = math.exp(lb1 + den[0] - log_f) if prior.beta < 1 else 0.0
    p_v0 = np.exp(num[0] - log_f)
    return PosteriorSummary(q=q, log_marginal=log_f, p_theta1=p_theta1, p_v0=p_v0)


def bayes_procedure(prior: SymmetricDiscretePrior, model: IntraclassModel):
    from .procedures import ProcedureSpec

    return ProcedureSpec("bayes", lambda z: bayes_rule(prior, model, z), k=model.k)


# ---------------------------------------------------------------------------
# the z-dependent reweighting that turns the ratio into e^{z'mu} integrals


def tilted_weights(prior: SymmetricDiscretePrior, model: IntraclassModel, z):
    """Atom log-weights of xi*_0 and xi*_1 at z.

    log w* = log w - G (1'z)(1'mu) / (sigma2 (1 - rho)) - mu' Sigma^{-1} mu / 2.
    Depends on z only through 1'z.
    """
    z = model.check(z, "z")
    total = float(np.sum(z))
    out = []
    for mus, w in ((prior.mus0, prior.w0), (prior.mus1, prior.w1)):
        if w.size == 0:
            out.append(np.zeros(0))
            continue
        quad = np.sum(mus * precision_apply(model, mus), axis=1)
        out.append(np.log(w) - model.G * total * mus.sum(axis=1) / model.scale - 0.5 * quad)
    return out[0], out[1]


def q_values_tilted(prior: SymmetricDiscretePrior, model: IntraclassModel, z) -> np.ndarray:
    """Q_i(z) from the tilted measures with integrand exp(z'mu / (sigma2 (1 - rho)))."""
    z = model.check(z, "z")
    lw0, lw1 = tilted_weights(prior, model, z)
    e0 = prior.mus0 @ z / model.scale + lw0
    e1 = prior.mus1 @ z / model.scale + lw1
    with np.errstate(divide="ignore"):
        lb0 = math.log(prior.beta) if prior.beta > 0 else -np.inf
        lb1 = math.log1p(-prior.beta) if prior.beta < 1 else -np.inf
    num = np.logaddexp(
        lb0 + _lse(e0[:, None], (prior.mus0 == 0).astype(float), axis=0),
        lb1 + _lse(e1[:, None], (prior.mus1 == 0).astype(float), axis=0),
    )
    den = _lse(e1, np.ones_like(e1), axis=0)
    return _q_from_logs(num[None, :], np.atleast_1d(den))[0]


# ---------------------------------------------------------------------------
# brute-force check: minimise posterior expected loss over all 2^k actions


def posterior_oracle(prior: SymmetricDiscretePrior, model: IntraclassModel, z) -> np.ndarray:
    """Argmin over a in {0,1}^k of E[L_theta(a, mu) | z].

    Computes its own posterior from a dense-covariance density, independent
    of the closed-form path. Ties go to the action with fewer rejections.
    """
    z = model.check(z, "z")
    k = model.k
    if k > ORACLE_MAX_K:
        raise ValueError(f"enumeration over 2^{k} actions exceeds the k <= {ORACLE_MAX_K} bound")
    dist = multivariate_normal(mean=np.zeros(k), cov=model.covariance())
    logs, thetas, mus = [], [], []
    for theta, p, atoms, w in ((0, prior.beta, prior.mus0, prior.w0), (1, 1 - prior.beta, prior.mus1, prior.w1)):
        if p <= 0 or w.size == 0:
            continue
        logs.append(math.log(p) + np.log(w) + dist.logpdf(z[None, :] - atoms).reshape(-1))
        thetas.append(np.full(w.size, theta))
        mus.append(atoms)
    logp = np.concatenate(logs)
    post = np.exp(logp - logp.max())
    post /= post.sum()
    theta = np.concatenate(thetas)
    v = (np.concatenate(mus) > 0).astype(float)

    actions = np.array(sorted(action_lattice(k), key=lambda a: (sum(a), a)), dtype=float)
    false_rej = actions @ (1 - v).T  # (2^k, atoms)
    false_acc = (1 - actions) @ v.T
    loss = np.where(theta[None, :] == 0, false_rej, false_acc)
    risk = loss @ post
    return actions[int(np.argmin(risk))].astype(np.int8)


# ---------------------------------------------------------------------------
# prior files


def load_prior_csv(path) -> SymmetricDiscretePrior:
    """Read ``theta,weight,mu_1,...,mu_k`` rows.

    beta is the raw theta=0 weight over the total raw weight; each group is
    then normalised and symmetrised.
    """
    atoms = {0: [], 1: []}
    k = None
    with open(path, newline="") as fh:
        rows = [(n, r) for n, r in enumerate(csv.reader(fh), start=1)]
    rows = [(n, r) for n, r in rows if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise PriorFormatError("empty prior file", 1)
    header_line, header = rows[0]
    header = [h.strip() for h in header]
    if header[:2] != ["theta", "weight"] or len(header) < 3:
        raise PriorFormatError("header must be theta,weight,mu_1,...,mu_k", header_line)
    k = len(header) - 2
    expected = [f"mu_{i}" for i in range(1, k + 1)]
    if header[2:] != expected:
        raise PriorFormatError(f"expected mean columns {','.join(expected)}", header_line)
    for n, row in rows[1:]:
        if len(row) != k + 2:
            raise PriorFormatError(f"expected {k + 2} fields, got {len(row)}", n)
        try:
            theta = int(row[0])
            weight = float(row[1])
            mu = tuple(float(x) for x in row[2:])
        except ValueError as exc:
            raise PriorFormatError(str(exc), n) from None
        if theta not in (0, 1):
            raise PriorFormatError(f"theta must be 0 or 1, got {theta}", n)
        if not weight > 0 or not math.isfinite(weight):
            raise PriorFormatError(f"weight must be positive, got {weight}", n)
        if any(not math.isfinite(x) or x < 0 for x in mu):
            raise PriorFormatError(f"means must be finite and nonnegative, got {mu}", n)
        atoms[theta].append((weight, mu))
    raw0 = sum(w for w, _ in atoms[0])
    raw1 = sum(w for w, _ in atoms[1])
    if raw0 + raw1 == 0:
        raise PriorFormatError("prior has no atoms", header_line)
    try:
        return SymmetricDiscretePrior.build(raw0 / (raw0 + raw1), atoms[0], atoms[1], k=k)
    except ValueError as exc:
        raise PriorFormatError(str(exc)) from None


def write_prior_csv(prior: SymmetricDiscretePrior, path) -> None:
    """Write the symmetrised atoms; reloading gives back the same prior."""
    k = prior.k
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["theta", "weight"] + [f"mu_{i}" for i in range(1, k + 1)])
        for theta, scale, mus, w in ((0, prior.beta, prior.mus0, prior.w0), (1, 1 - prior.beta, prior.mus1, prior.w1)):
            if scale <= 0:
                continue
            for m, x in zip(mus, w):
                out.writerow([theta, repr(float(scale * x))] + [repr(float(y)) for y in m])
