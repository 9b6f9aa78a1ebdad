"""Command-line entry point. Every subcommand writes CSV.

Exit status: 0 on success (violations found by ``admcheck`` included),
2 on usage or configuration errors, 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import itertools
import sys
from contextlib import contextmanager

import numpy as np

from . import __version__
from .admissibility import (
    DEFAULT_RESOLUTION,
    LineSpec,
    ScanError,
    monotonicity_scan,
    step_up_preset,
    step_up_violation_witness,
)
from .bayes import NumericalError, PriorFormatError, bayes_procedure, bayes_rule, load_prior_csv, posterior_oracle, q_values
from .model import GENERATOR_NAME, DimensionError, IntraclassModel, MeanVector
from .procedures import (
    CriticalValues,
    marginal_procedure,
    psi_star_procedure,
    step_up,
    step_up_procedure,
    strip_for,
)
from .quadrature import QuadratureError
from .risk import risk_difference_mc_grid, risk_difference_quadrature, vector_risk_mc

EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    pass


def fmt(x) -> str:
    """Shortest round-trip decimal (never more than 17 significant digits)."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    r = repr(float(x))
    return r[:-2] if r.endswith(".0") else r


def parse_floats(text: str, what: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated decimals, got {text!r}") from None


def parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, steps = text.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError:
        raise UsageError(f"--grid: expected lo:hi:steps, got {text!r}") from None
    if steps < 1 or (steps > 1 and not hi > lo):
        raise UsageError(f"--grid: need steps >= 1 and hi > lo, got {text!r}")
    if steps == 1:
        return np.array([lo])
    n = steps - 1
    # (lo (n - i) + hi i) / n keeps round grid values exact, e.g. 1.2 on 0:3:31
    return np.array([(lo * (n - i) + hi * i) / n for i in range(steps)])


class Output:
    def __init__(self, path: str | None):
        self.path = path
        self.lines: list[str] = []

    def comment(self, text: str) -> None:
        self.lines.append(f"# {text}")

    def row(self, values) -> None:
        self.lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in values))

    def flush(self) -> None:
        text = "\n".join(self.lines) + "\n"
        if self.path in (None, "-"):
            sys.stdout.write(text)
        else:
            with open(self.path, "w") as fh:
                fh.write(text)


def _header(out: Output, args: argparse.Namespace, argv: list[str]) -> None:
    out.comment(f"multiendpoint {__version__} {args.command}")
    out.comment("argv: " + " ".join(argv))
    for key in sorted(vars(args)):
        if key in ("func", "out"):
            continue
        out.comment(f"{key}={getattr(args, key)}")
    out.comment(f"generator={GENERATOR_NAME}")


def _resolve_k(args) -> int:
    """--k if given, else the length of --crit for step-up, else 2."""
    if args.k is not None:
        return args.k
    if args.proc == "step-up" and args.crit is not None:
        return len(parse_floats(args.crit, "--crit"))
    return 2


def _model(args, k: int | None = None) -> IntraclassModel:
    k = _resolve_k(args) if k is None else k
    try:
        return IntraclassModel(k, args.sigma2, args.rho)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _procedure(args, model: IntraclassModel, prior=None):
    name = args.proc
    if name == "bayes":
        if prior is None:
            raise UsageError("--proc bayes needs --prior FILE")
        return bayes_procedure(prior, model)
    if args.crit is None:
        raise UsageError(f"--proc {name} needs --crit")
    crit = parse_floats(args.crit, "--crit")
    if name == "marginal":
        if len(crit) != 1:
            raise UsageError("--proc marginal takes a single cutoff in --crit")
        return marginal_procedure(crit[0], model.k)
    if len(crit) != model.k:
        raise UsageError(f"--crit has {len(crit)} values but k={model.k}")
    try:
        cv = CriticalValues(tuple(crit))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if name == "step-up":
        return step_up_procedure(cv)
    if model.k != 2:
        raise UsageError("--proc psi-star is defined for k=2 only")
    return psi_star_procedure(strip_for(cv.c, model.rho, model.sigma2))


def _load_prior(args, k: int | None):
    if not args.prior:
        return None
    prior = load_prior_csv(args.prior)
    if k is not None and prior.k != k:
        raise UsageError(f"prior has k={prior.k} but --k {k}")
    return prior


# ---------------------------------------------------------------------------
# subcommands


def cmd_region(args, out: Output) -> None:
    model = _model(args)
    if model.k != 2:
        raise UsageError("region export needs k=2")
    prior = _load_prior(args, 2)
    proc = _procedure(args, model, prior)
    grid = parse_grid(args.grid)
    z = np.array(list(itertools.product(grid, grid)))
    actions = np.asarray(proc(z))
    out.row(["z1", "z2", "a1", "a2"])
    for zi, ai in zip(z, actions):
        out.row([zi[0], zi[1], int(ai[0]), int(ai[1])])


def _mean_grid(args, k: int) -> list[MeanVector]:
    if args.mu:
        points = [parse_floats(m, "--mu") for m in args.mu]
    else:
        g = parse_grid(args.grid)
        points = [list(p) for p in itertools.product(g, repeat=k)]
    means = []
    for p in points:
        if len(p) != k:
            raise UsageError(f"mean {p} has length {len(p)}, expected k={k}")
        try:
            means.append(MeanVector(tuple(p)))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    return means


def cmd_risk(args, out: Output) -> None:
    model = _model(args)
    prior = _load_prior(args, model.k)
    proc = _procedure(args, model, prior)
    means = _mean_grid(args, model.k)
    _check_n(args.n)
    k = model.k
    out.row([f"mu_{i}" for i in range(1, k + 1)] + ["r0", "se0", "r1", "se1", "n", "seed"])
    for mean in means:
        rep = vector_risk_mc(proc, model, mean, args.n, args.seed, workers=args.workers)
        out.row(list(rep.mu) + [rep.r0, rep.se0, rep.r1, rep.se1, rep.n, rep.seed])


def _check_n(n: int) -> None:
    if n < 100:
        raise UsageError(f"--n must be at least 100, got {n}")


def cmd_dominate(args, out: Output) -> None:
    model = _model(args)
    if model.k != 2:
        raise UsageError("dominate needs k=2")
    if args.crit is None:
        raise UsageError("dominate needs --crit C1,C2")
    crit = parse_floats(args.crit, "--crit")
    if len(crit) != 2:
        raise UsageError("dominate needs exactly two critical values")
    try:
        strip = strip_for(crit, model.rho, model.sigma2)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    b = parse_floats(args.b, "--b")
    if not b or any(x <= 0 for x in b):
        raise UsageError("--b needs positive values")
    means = _mean_grid(args, 2)
    _check_n(args.n)
    quad = np.array([risk_difference_quadrature(strip, b, m, tol=args.tol) for m in means])
    mc, se = risk_difference_mc_grid(strip, b, means, args.n, args.seed)
    out.row(["mu_1", "mu_2", "b", "delta_quadrature", "delta_mc", "se_mc"])
    for i, m in enumerate(means):
        for j, bj in enumerate(b):
            out.row([m.mu[0], m.mu[1], bj, quad[i, j], mc[i, j], se[i, j]])
    out.comment(f"min_delta_quadrature={fmt(quad.min())}")
    out.comment(f"max_delta_quadrature={fmt(quad.max())}")
    out.comment(f"count_mc_below_minus_3se={int(np.sum(mc < -3 * se))}")
    out.comment(f"count_mc_quadrature_gap_over_3se={int(np.sum(np.abs(mc - quad) > 3 * se))}")


def cmd_bayes(args, out: Output) -> None:
    prior = _load_prior(args, args.k)
    if prior is None:
        raise UsageError("bayes needs --prior FILE")
    k = prior.k
    model = _model(args, k)
    if args.z:
        points = [parse_floats(z, "--z") for z in args.z]
        for p in points:
            if len(p) != k:
                raise UsageError(f"point {p} has length {len(p)}, prior has k={k}")
        z = np.array(points, dtype=float)
    elif args.grid:
        g = parse_grid(args.grid)
        z = np.array(list(itertools.product(g, repeat=k)))
    else:
        raise UsageError("bayes needs --z or --grid")
    q = q_values(prior, model, z)
    actions = bayes_rule(prior, model, z)
    header = [f"z_{i}" for i in range(1, k + 1)] + [f"q_{i}" for i in range(1, k + 1)] + ["threshold"]
    header += [f"a_{i}" for i in range(1, k + 1)]
    if args.oracle:
        header += [f"oracle_{i}" for i in range(1, k + 1)] + ["agree"]
    out.row(header)
    threshold = 1.0 - prior.beta
    for zi, qi, ai in zip(z, q, actions):
        row = list(zi) + list(qi) + [threshold] + [int(x) for x in ai]
        if args.oracle:
            oi = posterior_oracle(prior, model, zi)
            row += [int(x) for x in oi] + ["true" if np.array_equal(oi, ai) else "false"]
        out.row(row)


def _preset_crit(args, k: int) -> list[float]:
    """Step-up cutoffs that place the preset line: --preset-crit, else a k-long --crit, else 1..k."""
    if args.preset_crit:
        crit = parse_floats(args.preset_crit, "--preset-crit")
    elif args.crit and len(parse_floats(args.crit, "--crit")) == k:
        crit = parse_floats(args.crit, "--crit")
    else:
        crit = [float(i) for i in range(1, k + 1)]
    if len(crit) != k:
        raise UsageError(f"--preset-crit has {len(crit)} values but k={k}")
    return crit


def cmd_admcheck(args, out: Output) -> None:
    model = _model(args)
    k = model.k
    if k < 2:
        raise UsageError("admcheck needs k >= 2")
    prior = _load_prior(args, k)
    lines: list[LineSpec] = []
    if args.preset:
        lines.append(step_up_preset(_preset_crit(args, k), args.epsilon, args.resolution))
    if args.line:
        if not args.base:
            raise UsageError("--line needs --base z1,...,zk")
        base = parse_floats(args.base, "--base")
        if len(base) != k:
            raise UsageError(f"--base has {len(base)} values but k={k}")
        for item in args.line:
            try:
                j, lo, hi = item.split(":")
                lines.append(LineSpec.through(base, int(j), float(lo), float(hi), args.resolution))
            except ValueError as exc:
                raise UsageError(f"--line {item!r}: {exc}") from None
    if args.witness:
        if args.crit is None:
            raise UsageError("--witness needs --crit")
        crit = parse_floats(args.crit, "--crit")
        z_star, z_bar = step_up_violation_witness(crit, args.epsilon)
        out.comment("witness z_star=" + ",".join(fmt(x) for x in z_star)
                    + " step_up=" + ",".join(str(int(a)) for a in step_up(crit, z_star)))
        out.comment("witness z_bar=" + ",".join(fmt(x) for x in z_bar)
                    + " step_up=" + ",".join(str(int(a)) for a in step_up(crit, z_bar)))
    if not lines and not args.witness:
        raise UsageError("admcheck needs --preset, --line or --witness")
    proc = _procedure(args, model, prior) if lines else None
    out.row(["j", "tj_low", "tj_high"] + [f"z_low_{i}" for i in range(1, k + 1)]
            + [f"z_high_{i}" for i in range(1, k + 1)] + ["decision_low", "decision_high"])
    for line in lines:
        for v in monotonicity_scan(proc, line):
            out.row([v.j, v.t_low[v.j - 1], v.t_high[v.j - 1]] + list(v.z_low) + list(v.z_high)
                    + [v.psi_low, v.psi_high])


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--k", type=int, help="number of endpoints (default: from --crit, else 2)")
    shared.add_argument("--sigma2", type=float, default=1.0)
    shared.add_argument("--rho", type=float, default=0.0)
    shared.add_argument("--proc", choices=["step-up", "marginal", "psi-star", "bayes"], default="step-up")
    shared.add_argument("--crit", help="C1,...,Ck (one value for marginal)")
    shared.add_argument("--prior", metavar="FILE")
    shared.add_argument("--n", type=int, default=100_000)
    shared.add_argument("--seed", type=int, default=0)
    shared.add_argument("--out", metavar="FILE", help="default: stdout")

    parser = argparse.ArgumentParser(prog="multiendpoint", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("region", parents=[shared], help="decision regions on a k=2 grid")
    p.add_argument("--grid", default="-1:4:51", metavar="lo:hi:steps")
    p.set_defaults(func=cmd_region)

    p = sub.add_parser("risk", parents=[shared], help="(R0, R1) over a grid of means")
    p.add_argument("--grid", default="0:3:4", metavar="lo:hi:steps")
    p.add_argument("--mu", action="append", help="explicit mean mu_1,...,mu_k (repeatable)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("dominate", parents=[shared], help="risk difference step-up minus psi-star")
    p.add_argument("--grid", default="0:3:13", metavar="lo:hi:steps")
    p.add_argument("--mu", action="append", help="explicit mean mu_1,mu_2 (repeatable)")
    p.add_argument("--b", default="0.5,1,2", metavar="b1,b2,...")
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_dominate)

    p = sub.add_parser("bayes", parents=[shared], help="Q statistics and Bayes actions at given points")
    p.add_argument("--z", action="append", help="observation z_1,...,z_k (repeatable)")
    p.add_argument("--grid", metavar="lo:hi:steps")
    p.add_argument("--oracle", action="store_true", help="append the brute-force posterior-loss action")
    p.set_defaults(func=cmd_bayes)

    p = sub.add_parser("admcheck", parents=[shared], help="monotonicity line scans")
    p.add_argument("--preset", choices=["corollary-4.4"])
    p.add_argument("--line", action="append", metavar="j:lo:hi", help="vary t_j over [lo, hi] through --base")
    p.add_argument("--base", metavar="z1,...,zk")
    p.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION)
    p.add_argument("--preset-crit", metavar="C1,...,Ck", help="cutoffs placing the preset line (default: --crit or 1..k)")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--witness", action="store_true")
    p.set_defaults(func=cmd_admcheck)
    return parser


@contextmanager
def _errors():
    try:
        yield
    except (UsageError, PriorFormatError, DimensionError, ScanError) as exc:
        print(f"multiendpoint: error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    except (QuadratureError, NumericalError) as exc:
        print(f"multiendpoint: numerical failure: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_NUMERICAL)
    except ValueError as exc:
        print(f"multiendpoint: error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    out = Output(args.out)
    with _errors():
        _header(out, args, argv)
        args.func(args, out)
    out.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
