"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Runtime budgets count toward each criterion.
"""

import math
import time

import numpy as np
import pytest
from scipy import integrate
from scipy.special import ndtr

from conftest import random_model, random_prior
from multiendpoint.admissibility import (
    LineSpec,
    monotonicity_scan,
    step_up_preset,
    step_up_violation_witness,
    witness_decisions,
)
from multiendpoint.bayes import bayes_procedure, bayes_rule, posterior_oracle, q_values
from multiendpoint.cli import main
from multiendpoint.model import IntraclassModel, in_region_s, log_density, partial_sums, precision_apply, sample
from multiendpoint.procedures import (
    StripImprovement,
    c_star,
    c_star_residual,
    constant_procedure,
    d_of_t,
    marginal_procedure,
    step_up_procedure,
)
from multiendpoint.risk import (
    conditional_w_expectation,
    risk_difference_mc_grid,
    risk_difference_quadrature,
    vector_risk_mc,
)

PATTERNS = [(0, 0), (1, 0), (0, 1), (1, 1)]


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail, elapsed, budget):
        within = elapsed < budget
        status = "PASS" if ok and within else "FAIL"
        with capsys.disabled():
            print(f"\nCRITERION {number}: {status} | {detail} | {elapsed:.1f}s (budget {budget:.0f}s)")
        assert ok, detail
        assert within, f"runtime {elapsed:.1f}s over budget {budget}s"

    return emit


def sorted_suite(seed=101, n=1000, kmax=4, kmin=1):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        k = int(rng.integers(kmin, kmax + 1))
        yield k, random_prior(rng, k), random_model(rng, k), np.sort(rng.normal(1.0, 1.5, k))


def test_criterion_01_bayes_oracle(report):
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    checked = agree = skipped = 0
    for _ in range(1200):
        k = int(rng.integers(1, 4))
        prior, model = random_prior(rng, k), random_model(rng, k)
        z = rng.normal(1.0, 1.5, k)
        if np.any(np.abs(q_values(prior, model, z) - (1 - prior.beta)) <= 1e-9):
            skipped += 1
            continue
        checked += 1
        agree += np.array_equal(posterior_oracle(prior, model, z), bayes_rule(prior, model, z))
    ok = checked >= 1000 and agree == checked
    report(1, ok, f"bayes_rule == posterior_oracle on {agree}/{checked} (skipped {skipped} near-ties)", time.perf_counter() - start, 30)


def test_criterion_02_q_ordering(report):
    start = time.perf_counter()
    bad_order = bad_strict = cases = 0
    for k, prior, model, z in sorted_suite(kmin=2):
        q = q_values(prior, model, z)
        cases += 1
        bad_order += not np.all(q[:-1] >= q[1:] - 1e-10)
        gap = np.diff(z) > 1e-6
        bad_strict += not np.all(q[:-1][gap] > q[1:][gap])
    ok = cases >= 1000 and bad_order == 0 and bad_strict == 0
    report(2, ok, f"{cases} cases, {bad_order} order breaks, {bad_strict} missing strict drops", time.perf_counter() - start, 10)


def test_criterion_03_suffix_structure(report):
    start = time.perf_counter()
    exceptions = cases = 0
    for k, prior, model, z in sorted_suite():
        if np.any(np.diff(z) <= 0):
            continue
        a = bayes_rule(prior, model, z)
        r = k - int(a.sum())
        cases += 1
        exceptions += not np.array_equal(a, [0] * r + [1] * (k - r))
    report(3, exceptions == 0 and cases >= 1000, f"{cases} strictly sorted cases, {exceptions} non-suffix actions", time.perf_counter() - start, 10)


def test_criterion_04_step_up_inadmissible(report, capsys):
    start = time.perf_counter()
    found = {}
    for crit in ("1,2", "1,2,3"):
        assert main(["admcheck", "--crit", crit, "--preset", "corollary-4.4"]) == 0
        rows = [l for l in capsys.readouterr().out.splitlines() if l and not l.startswith("#")][1:]
        found[crit] = len(rows)
    witness_ok = True
    for c in ((1, 2), (1, 2, 3)):
        z_star, z_bar = step_up_violation_witness(c, 0.25)
        at_star, at_bar, near, at_near = witness_decisions(c, 0.25)
        top_two = [0] * (len(c) - 2) + [1, 1]
        witness_ok &= z_star[-2:].sum() == z_bar[-2:].sum() and z_bar[-1] < z_star[-1]
        witness_ok &= not at_star.any()
        witness_ok &= list(at_bar) == top_two and list(at_near) == top_two
        witness_ok &= bool(in_region_s(partial_sums(near)))
    ok = all(v >= 1 for v in found.values()) and witness_ok
    report(4, ok, f"violations k=2: {found['1,2']}, k=3: {found['1,2,3']}; witness decisions ok={witness_ok}", time.perf_counter() - start, 5)


def test_criterion_05_positive_controls(report):
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    violations = lines = 0

    def random_line(k):
        while True:
            z = np.sort(rng.normal(1.0, 1.5, k))
            j = int(rng.integers(2, k + 1))
            tj = partial_sums(z)[j - 1]
            line = LineSpec.through(z, j, tj - rng.uniform(0.5, 3), tj + rng.uniform(0.5, 3), resolution=256)
            if np.count_nonzero(in_region_s(line.points())) >= 2:
                return line

    for _ in range(100):
        k = int(rng.integers(2, 4))
        proc = bayes_procedure(random_prior(rng, k), random_model(rng, k))
        for line in (random_line(k), step_up_preset(tuple(range(1, k + 1)))):
            violations += len(monotonicity_scan(proc, line))
            lines += 1
    for k in (2, 3):
        proc = marginal_procedure(1.0, k)
        for line in [step_up_preset(tuple(range(1, k + 1)))] + [random_line(k) for _ in range(10)]:
            violations += len(monotonicity_scan(proc, line))
            lines += 1
    report(5, violations == 0, f"{violations} violations over {lines} scans (100 Bayes rules + marginal)", time.perf_counter() - start, 60)


def test_criterion_06_c_star(report):
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    worst = 0.0
    problems = []
    for _ in range(20):
        c1 = rng.uniform(-1, 2)
        s = StripImprovement(c1, c1 + rng.uniform(0.1, 3), rho=rng.uniform(-0.9, 0.9))
        t = np.linspace(s.lo, s.hi, 1002)[1:-1]
        worst = max(worst, float(np.max(np.abs(c_star_residual(s, t, c_star(s, t))))))
        d = d_of_t(s, t)
        if not np.all(np.abs(d) < 0.5):
            problems.append("|D| >= 1/2")
        if not (d[0] > 0 and d[-1] < 0):
            problems.append("endpoint signs")
        if np.count_nonzero(np.diff(np.sign(d))) != 1:
            problems.append("sign changes != 1")
    ok = worst <= 1e-10 and not problems
    report(6, ok, f"max residual {worst:.2e} over 20x1000 points; issues: {problems or 'none'}", time.perf_counter() - start, 5)


def test_criterion_07_conditional_identity(report):
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    tuples = 0
    while tuples < 100:
        c1 = rng.uniform(-1, 2)
        s = StripImprovement(c1, c1 + rng.uniform(0.1, 3), rho=rng.uniform(-0.9, 0.9))
        t = rng.uniform(s.lo, s.hi)
        if not s.inside(t):
            continue
        tuples += 1
        b, mu = rng.uniform(0.1, 5), rng.uniform(0, 3)
        for v in PATTERNS:
            worst = max(worst, abs(conditional_w_expectation(s, b, (mu, mu), t, v=v)))
    report(7, worst <= 1e-8, f"max |E[W | T=t]| at mu1=mu2: {worst:.2e} over 100 tuples x 4 patterns", time.perf_counter() - start, 5)


def test_criterion_08_domination(report):
    start = time.perf_counter()
    grid = [i * 0.25 for i in range(13)]
    mus = [(a, b) for a in grid for b in grid]
    bs = np.array([0.5, 1.0, 2.0])
    min_q, max_q = np.inf, -np.inf
    outside = []
    for rho in (0.0, 0.5):
        s = StripImprovement(1.0, 2.0, rho=rho, sigma2=1.0)
        quad = np.array([risk_difference_quadrature(s, bs, mu) for mu in mus])
        mc, se = risk_difference_mc_grid(s, bs, mus, 1_000_000, seed=0)
        min_q, max_q = min(min_q, quad.min()), max(max_q, quad.max())
        # where both estimates are exactly zero (no draws can differ) se is 0 too
        zscore = np.where(se > 0, (mc - quad) / np.where(se > 0, se, 1), 0.0)
        for i, j in zip(*np.nonzero(np.abs(zscore) > 3)):
            outside.append(f"rho={rho} mu={mus[i]} b={bs[j]} z={zscore[i, j]:+.2f}")
    ok = min_q >= -1e-8 and max_q > 1e-4 and not outside
    detail = f"quadrature min {min_q:.2e} max {max_q:.4f}; MC outside 3 SE at {len(outside)} of {2 * len(mus) * bs.size}"
    if outside:
        detail += ": " + "; ".join(outside)
    report(8, ok, detail, time.perf_counter() - start, 120)


def test_criterion_09_risk_sanity(report):
    start = time.perf_counter()
    rep = vector_risk_mc(step_up_procedure((1.0,)), IntraclassModel(1), (0.0,), 1_000_000, seed=0)
    tail_ok = abs(rep.r0 - (1 - ndtr(1.0))) < 3 * rep.se0
    exact_ok = True
    m = IntraclassModel(3, 1.0, 0.3)
    for mu in [(0.0, 0.0, 0.0), (0.0, 1.0, 2.0), (0.5, 1.0, 2.0)]:
        msum = sum(x > 0 for x in mu)
        rej = vector_risk_mc(constant_procedure(3, True), m, mu, 10_000, seed=1)
        acc = vector_risk_mc(constant_procedure(3, False), m, mu, 10_000, seed=1)
        exact_ok &= (rej.r0, rej.r1, acc.r0, acc.r1) == (3 - msum, 0, 0, msum)
    ok = tail_ok and exact_ok
    detail = f"r0={rep.r0:.5f} vs {1 - ndtr(1.0):.5f} (se {rep.se0:.1e}); constant procedures exact={exact_ok}"
    report(9, ok, detail, time.perf_counter() - start, 10)


def test_criterion_10_model_fidelity(report):
    start = time.perf_counter()
    rng = np.random.default_rng(10)
    checks = {}

    m1 = IntraclassModel(1, 1.5)
    norm1 = integrate.quad(lambda x: math.exp(log_density(m1, [x], [0.3])), 0.3 - 8 * math.sqrt(1.5), 0.3 + 8 * math.sqrt(1.5), epsabs=1e-12)[0]
    m2 = IntraclassModel(2, 1.0, 0.5)
    norm2 = integrate.dblquad(lambda y, x: math.exp(log_density(m2, [x, y], [1.0, 0.0])), -7, 9, -8, 8, epsabs=1e-10)[0]
    checks["normalisation"] = abs(norm1 - 1) < 1e-6 and abs(norm2 - 1) < 1e-6

    worst = 0.0
    for _ in range(60):
        k = int(rng.integers(2, 5))
        m = IntraclassModel(k, float(rng.uniform(0.3, 3)), float(rng.uniform(-0.9 / (k - 1), 0.9)))
        z, mu = rng.normal(0, 2, k), rng.uniform(0, 2, k)
        cov = m.covariance()
        d = z - mu
        dense = -0.5 * (k * math.log(2 * math.pi) + np.linalg.slogdet(cov)[1] + d @ np.linalg.inv(cov) @ d)
        worst = max(worst, abs(log_density(m, z, mu) - dense) / abs(dense))
        worst = max(worst, float(np.max(np.abs(precision_apply(m, d) - np.linalg.solve(cov, d)) / np.max(np.abs(np.linalg.solve(cov, d))))))
    checks["precision"] = worst <= 1e-10

    exch = True
    for _ in range(50):
        k = int(rng.integers(2, 6))
        m = random_model(rng, k)
        z, mu = rng.normal(size=k), rng.uniform(0, 2, k)
        g = rng.permutation(k)
        exch &= abs(log_density(m, z[g], mu[g]) - log_density(m, z, mu)) < 1e-12
    checks["exchangeability"] = exch

    n = 1_000_000
    mom = True
    for rho in (0.5, -0.3):
        m = IntraclassModel(3, 2.0, rho)
        mu = np.array([0.0, 1.0, 2.0])
        draws = sample(m, mu, n, seed=3)
        cov = m.covariance()
        mom &= bool(np.all(np.abs(draws.mean(axis=0) - mu) < 4 * np.sqrt(np.diag(cov) / n)))
        se = np.sqrt((cov**2 + np.outer(np.diag(cov), np.diag(cov))) / n)
        mom &= bool(np.all(np.abs(np.cov(draws.T) - cov) < 4 * se))
    checks["moments"] = mom

    report(10, all(checks.values()), ", ".join(f"{k}={v}" for k, v in checks.items()), time.perf_counter() - start, 60)
