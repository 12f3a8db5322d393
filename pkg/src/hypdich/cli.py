"""Command line front end: ``python -m hypdich <subcommand> ...``.

Every run prints ``key=value`` lines, writes them to ``<prefix>-summary.txt``
and writes its tables to ``<prefix>-*.csv``.  Exit status is 0 on success,
1 on a domain failure (validation failed, no dichotomy, solver stalled) and
2 on a usage error (bad flags, unknown scenario, unreadable input).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .characteristics import trace
from .dichotomy import (DichotomyUnsupported, PreconditionError, auto_eps_list, detect_dichotomy,
                        robustness_sweep, segment_maps, verify_dichotomy)
from .evolution import SmoothingUnsupported, evolution_matrix, smoothing_analysis, smoothing_time
from .scenarios import ScenarioError, UnknownScenarioError, resolve_scenario, validate
from .solver import ConvergenceError, DEFAULT_MAX_ITER, DEFAULT_N, DEFAULT_TOL, solve_ibvp

REFERENCE_N = 100
VERIFY_PARTS = 8


class UsageError(Exception):
    pass


class DomainFailure(Exception):
    pass


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 2:
        raise argparse.ArgumentTypeError("must be >= 2")
    return v


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not np.isfinite(v) or v < 0:
        raise argparse.ArgumentTypeError("must be a finite number >= 0")
    return v


def _finite_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not np.isfinite(v):
        raise argparse.ArgumentTypeError("must be finite")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hypdich", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, grid_default=None):
        p.add_argument("--scenario", required=True, help="catalog name or path to a scenario JSON file")
        p.add_argument("--output", default=None, help="output prefix (default: hypdich-<subcommand>)")
        p.add_argument("--seed", type=int, default=0, help="seed for random test vectors")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                       help="upper bound on worker threads (recorded; computations are single-threaded)")
        if grid_default is not None:
            p.add_argument("--grid", type=_positive_int, default=grid_default, help="number of x cells N")

    p = sub.add_parser("validate", help="check the structural assumptions of a scenario")
    common(p)
    p.add_argument("--density", type=_positive_int, default=10)

    p = sub.add_parser("solve", help="solve the initial-boundary value problem")
    common(p, DEFAULT_N)
    p.add_argument("--eps", type=_nonneg_float, default=0.0)
    p.add_argument("--s", type=_finite_float, default=0.0)
    p.add_argument("--T", type=_nonneg_float, default=1.0)
    p.add_argument("--phi", default="sin", help="zero | sin | hat:i | path to CSV (component,xIndex,value)")
    p.add_argument("--tol", type=_nonneg_float, default=DEFAULT_TOL)
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    p.add_argument("--scheme", choices=("march", "path"), default="march")
    p.add_argument("--save-solution", action="store_true", help="also write <prefix>-solution.csv")

    p = sub.add_parser("evolve", help="assemble the evolution matrix U(t, s)")
    common(p, DEFAULT_N)
    p.add_argument("--eps", type=_nonneg_float, default=0.0)
    p.add_argument("--s", type=_finite_float, default=0.0)
    p.add_argument("--t", type=_finite_float, default=1.0)

    p = sub.add_parser("smoothing", help="smoothing degree, time d and roughness profile")
    common(p, DEFAULT_N)
    p.add_argument("--eps", type=_nonneg_float, default=0.0)
    p.add_argument("--s", type=_finite_float, default=0.0)

    p = sub.add_parser("dichotomy", help="spectral dichotomy of the period map")
    common(p, REFERENCE_N)
    p.add_argument("--eps", type=_nonneg_float, default=0.0)
    p.add_argument("--s", type=_finite_float, default=0.0)
    p.add_argument("--horizon", type=int, default=2, help="verification horizon in periods")

    p = sub.add_parser("sweep", help="robustness of the dichotomy under eps perturbations")
    common(p, REFERENCE_N)
    p.add_argument("--eps-list", default="auto", help="'auto' (eps0*2^-k, k=0..6) or comma-separated values")
    p.add_argument("--s", type=_finite_float, default=0.0)

    p = sub.add_parser("trace", help="export one backward characteristic as CSV")
    common(p)
    p.add_argument("--component", type=int, default=0)
    p.add_argument("--x", type=_finite_float, required=True)
    p.add_argument("--t", type=_finite_float, required=True)
    p.add_argument("--eps", type=_nonneg_float, default=0.0)
    p.add_argument("--s", type=_finite_float, default=0.0)
    return parser


# -- helpers ------------------------------------------------------------------

def _load(ref):
    try:
        return resolve_scenario(ref)
    except UnknownScenarioError as exc:
        raise UsageError(f"scenarios.catalog: {exc}") from None
    except ScenarioError as exc:
        raise UsageError(f"scenarios.load_scenario: {exc}") from None


def _check_eps(spec, eps):
    if eps > spec.eps0:
        raise UsageError(f"--eps {eps} exceeds eps0={spec.eps0} of {spec.name!r}")


def initial_data(spec, text, N) -> np.ndarray:
    """Named profile or CSV file (``component,xIndex,value``) on ``N+1`` nodes."""
    x = np.linspace(0.0, 1.0, N + 1)
    if text == "zero":
        return np.zeros((spec.n, N + 1))
    if text == "sin":
        return np.tile(np.sin(np.pi * x), (spec.n, 1))
    if text.startswith("hat:"):
        try:
            i = int(text[4:])
        except ValueError:
            raise UsageError(f"--phi {text!r}: expected hat:<flat node index>") from None
        if not 0 <= i < spec.n * (N + 1):
            raise UsageError(f"--phi hat index must lie in [0, {spec.n * (N + 1)})")
        phi = np.zeros(spec.n * (N + 1))
        phi[i] = 1.0
        return phi.reshape(spec.n, N + 1)
    path = Path(text)
    if not path.exists():
        raise UsageError(f"--phi {text!r}: not a profile name and no such file")
    data = np.genfromtxt(path, delimiter=",", names=True)
    try:
        comp, ix, val = data["component"], data["xIndex"], data["value"]
    except (ValueError, KeyError):
        raise UsageError("--phi CSV needs the header component,xIndex,value") from None
    phi = np.full((spec.n, N + 1), np.nan)
    phi[np.atleast_1d(comp).astype(int), np.atleast_1d(ix).astype(int)] = np.atleast_1d(val)
    if np.isnan(phi).any():
        raise UsageError(f"--phi CSV must cover {spec.n} components on {N + 1} nodes")
    return phi


class _Run:
    def __init__(self, args):
        self.prefix = args.output or f"hypdich-{args.command}"
        self.lines = [f"command={args.command}", f"scenario={args.scenario}",
                      f"seed={args.seed}", f"threads={args.threads}"]
        parent = Path(self.prefix).parent
        if str(parent) not in ("", "."):
            parent.mkdir(parents=True, exist_ok=True)

    def add(self, *lines):
        self.lines.extend(lines)

    def csv(self, name, text):
        path = f"{self.prefix}-{name}.csv"
        Path(path).write_text(text, encoding="utf-8")
        self.lines.append(f"{name}Csv={path}")

    def finish(self, status):
        self.lines.append(f"status={status}")
        text = "\n".join(self.lines) + "\n"
        Path(f"{self.prefix}-summary.txt").write_text(text, encoding="utf-8")
        sys.stdout.write(text)


# -- subcommands --------------------------------------------------------------

def _validate(args, run):
    spec = _load(args.scenario)
    report = validate(spec, args.density)
    run.add(f"name={spec.name}", *report.lines())
    rows = ["check,passed,value"] + [f"{c.name},{str(c.passed).lower()},{c.value:.17g}" for c in report.checks]
    run.csv("checks", "\n".join(rows) + "\n")
    if not report.passed:
        raise DomainFailure("scenarios.validate: failed " + ",".join(report.failures()))


def _solve(args, run):
    spec = _load(args.scenario)
    _check_eps(spec, args.eps)
    if args.T <= 0 or args.tol <= 0:
        raise UsageError("--T and --tol must be positive")
    phi = initial_data(spec, args.phi, args.grid)
    try:
        rep = solve_ibvp(spec, args.eps, args.s, args.T, phi, args.tol, args.max_iter, scheme=args.scheme)
    except ConvergenceError as exc:
        run.add(f"residual={exc.defect:.17g}")
        raise DomainFailure(str(exc)) from None
    run.add(*rep.lines())
    u = rep.solution
    final = ["component,xIndex,x,value"]
    for j in range(spec.n):
        for i, x in enumerate(u.grid.x):
            final.append(f"{j},{i},{x:.17g},{u.values[j, i, -1]:.17g}")
    run.csv("final", "\n".join(final) + "\n")
    if args.save_solution:
        run.csv("solution", u.to_csv())


def _evolve(args, run):
    spec = _load(args.scenario)
    _check_eps(spec, args.eps)
    if args.t < args.s:
        raise UsageError("--t must not be smaller than --s")
    U = evolution_matrix(spec, args.eps, args.s, args.t, args.grid)
    run.add(f"eps={args.eps:.17g}", f"s={args.s:.17g}", f"t={args.t:.17g}", f"N={args.grid}",
            f"dim={U.dim}", f"steps={U.meta['steps']}", f"normInf={U.norm():.17g}")
    run.csv("matrix", U.to_csv())


def _smoothing(args, run):
    spec = _load(args.scenario)
    _check_eps(spec, args.eps)
    try:
        rep = smoothing_analysis(spec, args.eps, args.s, args.grid)
    except SmoothingUnsupported as exc:
        raise DomainFailure(str(exc)) from None
    run.add(f"k={rep.k}", f"transitMax={rep.transit_max:.17g}", f"d={rep.d:.17g}",
            f"threshold={rep.threshold:.17g}",
            f"smoothTime={'none' if rep.smooth_time is None else f'{rep.smooth_time:.17g}'}",
            f"dropFactorAfterD={rep.drop_factor_after(args.s + rep.d):.17g}")
    run.csv("profile", rep.to_csv())


def dichotomy_report(spec, eps, s, N, horizon=2):
    """Period map, estimate and verification as used by the ``dichotomy`` subcommand."""
    d = smoothing_time(spec, eps, s)[2]
    maps = segment_maps(spec, eps, s, 2 * d, N, VERIFY_PARTS)
    T = np.linalg.multi_dot(maps[::-1]) if len(maps) > 1 else maps[0]
    est = detect_dichotomy(T, period_length=2 * d, segments=maps)
    if est is None:
        return d, T, None, None
    est.t0, est.N = s, N
    return d, T, est, verify_dichotomy(spec, eps, est, horizon, N, maps=maps)


def _dichotomy(args, run):
    spec = _load(args.scenario)
    _check_eps(spec, args.eps)
    try:
        d, T, est, ver = dichotomy_report(spec, args.eps, args.s, args.grid, args.horizon)
    except (SmoothingUnsupported, DichotomyUnsupported) as exc:
        raise DomainFailure(str(exc)) from None
    eig = np.linalg.eigvals(T)
    eig = eig[np.lexsort((eig.imag, -np.abs(eig)))]
    rows = ["index,real,imag,modulus"] + [f"{i},{z.real:.17g},{z.imag:.17g},{abs(z):.17g}"
                                          for i, z in enumerate(eig)]
    run.csv("eigenvalues", "\n".join(rows) + "\n")
    run.add(f"eps={args.eps:.17g}", f"N={args.grid}", f"d={d:.17g}")
    if est is None:
        run.add("found=false")
        raise DomainFailure("dichotomy.detect_dichotomy: spectrum too close to the unit circle")
    run.add("found=true", *est.lines(), *ver.lines(), f"verified={str(ver.passed()).lower()}")


def _sweep(args, run):
    spec = _load(args.scenario)
    if args.eps_list == "auto":
        eps_list = auto_eps_list(spec)
    else:
        try:
            eps_list = [float(v) for v in args.eps_list.split(",") if v.strip()]
        except ValueError:
            raise UsageError(f"--eps-list {args.eps_list!r}: expected 'auto' or numbers") from None
        if not eps_list:
            raise UsageError("--eps-list is empty")
        for e in eps_list:
            if not 0 <= e <= spec.eps0:
                raise UsageError(f"--eps-list value {e} outside [0, eps0={spec.eps0}]")
    try:
        table = robustness_sweep(spec, eps_list, args.s, args.grid)
    except (PreconditionError, SmoothingUnsupported) as exc:
        raise DomainFailure(str(exc)) from None
    k = table.threshold_index()
    run.add(f"N={args.grid}", f"rows={len(table.rows)}", f"baselineRank={table.baseline.rank}",
            f"baselineBeta={table.baseline.beta:.17g}", f"gapSlope={table.slope():.17g}",
            f"thresholdIndex={'none' if k is None else k}")
    run.csv("sweep", table.to_csv())


def _trace(args, run):
    spec = _load(args.scenario)
    _check_eps(spec, args.eps)
    if not 0 <= args.component < spec.n:
        raise UsageError(f"--component must lie in [0, {spec.n})")
    if not 0 <= args.x <= 1 or args.t < args.s:
        raise UsageError("need 0 <= x <= 1 and t >= s")
    path = trace(spec, args.component, args.x, args.t, args.eps, args.s)
    run.add(f"exit={path.exit}", f"exitAbscissa={path.exit_abscissa:.17g}",
            f"exitOrdinate={path.exit_ordinate:.17g}", f"samples={len(path.samples)}")
    run.csv("path", path.to_csv())


_COMMANDS = {"validate": _validate, "solve": _solve, "evolve": _evolve, "smoothing": _smoothing,
             "dichotomy": _dichotomy, "sweep": _sweep, "trace": _trace}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    run = _Run(args)
    try:
        _COMMANDS[args.command](args, run)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DomainFailure as exc:
        print(f"failure: {exc}", file=sys.stderr)
        run.finish("failed")
        return 1
    run.finish("ok")
    return 0
