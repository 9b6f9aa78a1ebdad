"""Line scans for the monotonicity condition every admissible symmetric rule obeys.

Work happens in the sorted frame z_1 < ... < z_k, through partial sums
t_j = z_j + ... + z_k. Along a line that moves only t_j, an admissible
symmetric rule's decision on the j-th smallest observation may switch
from accept to reject, never back. A finite scan can find violations; it
cannot certify admissibility.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import from_partial_sums, in_region_s, partial_sums
from .procedures import ProcedureSpec, as_critical, step_up

DEFAULT_RESOLUTION = 512


class ScanError(ValueError):
    pass


@dataclass(frozen=True)
class LineSpec:
    """Vary t_j (1-based j) over [lo, hi]; ``fixed`` holds the other k-1 partial sums in order."""

    j: int
    fixed: tuple
    lo: float
    hi: float
    resolution: int = DEFAULT_RESOLUTION

    def __post_init__(self):
        object.__setattr__(self, "fixed", tuple(float(x) for x in self.fixed))
        k = len(self.fixed) + 1
        if k < 2:
            raise ScanError("line scans need k >= 2")
        if not 2 <= self.j <= k:
            raise ScanError(f"j must lie in 2..{k}, got {self.j}")
        if not self.hi > self.lo:
            raise ScanError(f"empty range [{self.lo}, {self.hi}]")
        if self.resolution < 2:
            raise ScanError("resolution must be at least 2")

    @property
    def k(self) -> int:
        return len(self.fixed) + 1

    @classmethod
    def through(cls, z, j: int, lo: float, hi: float, resolution: int = DEFAULT_RESOLUTION) -> "LineSpec":
        """The line through ``z`` (sorted ascending first) that varies t_j."""
        t = partial_sums(np.sort(np.asarray(z, dtype=float)))
        fixed = tuple(np.delete(t, j - 1))
        return cls(j, fixed, lo, hi, resolution)

    def points(self) -> np.ndarray:
        """Partial-sum vectors along the line, shape (resolution, k)."""
        tj = np.linspace(self.lo, self.hi, self.resolution)
        base = np.insert(np.array(self.fixed), self.j - 1, 0.0)
        t = np.tile(base, (tj.size, 1))
        t[:, self.j - 1] = tj
        return t


@dataclass(frozen=True)
class Violation:
    j: int
    t_low: np.ndarray
    t_high: np.ndarray
    psi_low: int
    psi_high: int

    @property
    def z_low(self) -> np.ndarray:
        return from_partial_sums(self.t_low)

    @property
    def z_high(self) -> np.ndarray:
        return from_partial_sums(self.t_high)


def check_equivariance(proc: ProcedureSpec, k: int, trials: int = 64, seed: int = 0) -> None:
    """Spot-check rule(gz) = g rule(z) on random points; raise ScanError on failure."""
    if not proc.equivariant:
        raise ScanError(f"{proc.name} is not declared permutation-equivariant")
    rng = np.random.default_rng(seed)
    z = rng.normal(0.0, 2.0, size=(trials, k))
    perm = np.array([rng.permutation(k) for _ in range(trials)])
    a = np.asarray(proc(z))
    ga = np.asarray(proc(np.take_along_axis(z, perm, axis=1)))
    if not np.array_equal(ga, np.take_along_axis(a, perm, axis=1)):
        raise ScanError(f"{proc.name} failed a permutation-equivariance spot check")


def monotonicity_scan(proc: ProcedureSpec, line: LineSpec, check: bool = True) -> list[Violation]:
    """Every adjacent grid pair where the j-th decision drops from reject to accept."""
    if check:
        check_equivariance(proc, line.k)
    t = line.points()
    t = t[np.asarray(in_region_s(t))]
    if t.shape[0] < 2:
        raise ScanError("fewer than 2 grid points of the line lie in S")
    z = from_partial_sums(t)
    decisions = np.asarray(proc(z))[:, line.j - 1]
    drops = np.flatnonzero((decisions[:-1] == 1) & (decisions[1:] == 0))
    return [Violation(line.j, t[i].copy(), t[i + 1].copy(), 1, 0) for i in drops]


def recheck(proc: ProcedureSpec, v: Violation) -> bool:
    """Re-evaluate a reported violation from its two points."""
    lo = int(np.asarray(proc(np.sort(v.z_low)))[v.j - 1])
    hi = int(np.asarray(proc(np.sort(v.z_high)))[v.j - 1])
    return (lo, hi) == (1, 0) and v.t_low[v.j - 1] < v.t_high[v.j - 1]


# ---------------------------------------------------------------------------
# step-up counterexample


def step_up_violation_witness(c, epsilon: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Two points on one line that break monotonicity for step-up.

    z* = C - eps is accepted everywhere. z_bar keeps z*_1..z*_{k-2} and puts
    both of the last two coordinates at (C_{k-1} + C_k)/2 - eps: same
    z_{k-1} + z_k, smaller z_k, yet step-up rejects the top two there.
    """
    cv = as_critical(c)
    if cv.k < 2:
        raise ValueError("the witness needs k >= 2")
    gap = cv.c[-1] - cv.c[-2]
    if epsilon is None:
        epsilon = gap / 4.0
    if not 0.0 < epsilon < gap / 2.0:
        raise ValueError(f"epsilon must lie in (0, {gap / 2.0}), got {epsilon}")
    z_star = cv.array() - epsilon
    z_bar = z_star.copy()
    z_bar[-2:] = (cv.c[-1] + cv.c[-2]) / 2.0 - epsilon
    return z_star, z_bar


def corollary_line(z_star, resolution: int = DEFAULT_RESOLUTION) -> LineSpec:
    """Fix z_1..z_{k-2} and z_{k-1} + z_k of ``z_star``; move z_k from the midpoint up to z*_k."""
    z_star = np.asarray(z_star, dtype=float)
    if np.any(np.diff(z_star) <= 0):
        raise ScanError("z_star must be strictly ascending")
    k = z_star.size
    mid = (z_star[-1] + z_star[-2]) / 2.0
    return LineSpec.through(z_star, k, mid, z_star[-1], resolution)


def step_up_preset(c, epsilon: float | None = None, resolution: int = DEFAULT_RESOLUTION) -> LineSpec:
    z_star, _ = step_up_violation_witness(c, epsilon)
    return corollary_line(z_star, resolution)


def witness_decisions(c, epsilon: float | None = None):
    """Step-up actions at z*, at z_bar, and at a point of S just beside z_bar."""
    z_star, z_bar = step_up_violation_witness(c, epsilon)
    gap = as_critical(c).c[-1] - as_critical(c).c[-2]
    nudge = 1e-6 * gap
    near = z_bar.copy()
    near[-2] -= nudge
    near[-1] += nudge
    return step_up(c, z_star), step_up(c, z_bar), near, step_up(c, near)
