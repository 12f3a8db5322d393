"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline;
they are also repeated in the terminal summary.
"""

import time

import numpy as np
import pytest

import oracles
from conftest import record_criterion, term
from hypdich.cli import dichotomy_report
from hypdich.characteristics import d_eps_exit, d_eps_intersection, d_omega
from hypdich.dichotomy import auto_eps_list, robustness_sweep
from hypdich.evolution import evolution_matrix, inf_norm, smoothing_analysis, smoothing_time
from hypdich.grid import default_grid
from hypdich.operators import assemble, nilpotency_check
from hypdich.scenarios import CATALOG_NAMES, spec_from_dict
from hypdich.solver import solve_ibvp

FD_STEP = 1e-5
FD_RTOL = 1e-6
SAMPLES = 50
REFERENCE_N = 100


def close(value, reference):
    return abs(value - reference) <= FD_RTOL * max(abs(reference), 1.0)


def central(fn, at):
    return (fn(at + FD_STEP) - fn(at - FD_STEP)) / (2 * FD_STEP)


# -- 1: characteristic derivatives ------------------------------------------------

def _omega_cases(specs, rng):
    names = list(CATALOG_NAMES)
    for i in range(SAMPLES):
        spec = specs[names[i % len(names)]]
        j = int(rng.integers(spec.n))
        xi, x = rng.uniform(0, 1, 2)
        t = rng.uniform(0, 4)
        eps = rng.uniform(0, spec.eps0 - FD_STEP)
        yield spec, j, xi, x, t, max(eps, FD_STEP)


def _exit_cases(specs, rng):
    names = list(CATALOG_NAMES)
    found = 0
    while found < SAMPLES:
        spec = specs[names[found % len(names)]]
        j, k = rng.permutation(spec.n)[:2]
        xi, x = rng.uniform(0.02, 0.98, 2)
        t, s = rng.uniform(0.2, 3.0), 0.0
        eps = rng.uniform(FD_STEP, spec.eps0 - FD_STEP)
        tau = oracles.omega(spec, j, xi, x, t, 0.0)
        exits = [oracles.exit_point(spec, k, xi, tau, e, s) for e in (eps - FD_STEP, eps + FD_STEP)]
        # keep floor exits well inside the interval so both shifted curves exit the same way
        if all(kind == "initial" and 1e-3 < ex < 1 - 1e-3 for ex, _, kind in exits):
            found += 1
            yield spec, j, k, xi, x, t, eps, s, exits


def _intersection_cases(specs, rng):
    names = list(CATALOG_NAMES)
    found = 0
    while found < SAMPLES:
        spec = specs[names[found % len(names)]]
        j, k = rng.permutation(spec.n)[:2]
        x, t = rng.uniform(0, 1), rng.uniform(0.5, 3.0)
        s = rng.uniform(0, t)
        eps = rng.uniform(FD_STEP, spec.eps0 - FD_STEP)
        crossings = [oracles.intersection(spec, j, k, x, t, e, s) for e in (eps - FD_STEP, eps + FD_STEP)]
        if all(c is not None and 1e-3 < c < 1 - 1e-3 for c in crossings):
            found += 1
            yield spec, j, k, x, t, eps, s, crossings


def test_criterion_1_derivative_oracle(specs):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = {}
    failures = 0
    for spec, j, xi, x, t, eps in _omega_cases(specs, rng):
        refs = {"x": central(lambda v: oracles.omega(spec, j, xi, v, t, eps), x),
                "t": central(lambda v: oracles.omega(spec, j, xi, x, v, eps), t),
                "eps": central(lambda v: oracles.omega(spec, j, xi, x, t, v), eps)}
        for which, ref in refs.items():
            value = d_omega(spec, j, xi, x, t, eps, which)
            worst[which] = max(worst.get(which, 0.0), abs(value - ref) / max(abs(ref), 1.0))
            failures += not close(value, ref)
    for spec, j, k, xi, x, t, eps, s, exits in _exit_cases(specs, rng):
        ref = (exits[1][0] - exits[0][0]) / (2 * FD_STEP)
        value = d_eps_exit(spec, j, k, xi, x, t, eps, s)
        worst["x_k"] = max(worst.get("x_k", 0.0), abs(value - ref) / max(abs(ref), 1.0))
        failures += not close(value, ref)
    for spec, j, k, x, t, eps, s, crossings in _intersection_cases(specs, rng):
        ref = (crossings[1] - crossings[0]) / (2 * FD_STEP)
        value = d_eps_intersection(spec, j, k, x, t, eps, s)
        worst["x_jk"] = max(worst.get("x_jk", 0.0), abs(value - ref) / max(abs(ref), 1.0))
        failures += not close(value, ref)
    elapsed = time.perf_counter() - start
    ok = failures == 0 and elapsed < 30
    detail = ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
    record_criterion(1, ok, f"max relative errors {detail}; {failures} failures; {elapsed:.1f}s")
    assert ok


# -- 2: transport exactness ----------------------------------------------------------

def test_criterion_2_transport_order(specs):
    spec = specs["decoupled-extinction"]
    s = 0.0
    start = time.perf_counter()
    errors = []
    for N in (20, 40):
        x = np.linspace(0.0, 1.0, N + 1)
        report = solve_ibvp(spec, 0.0, s, 1.0, np.tile(np.sin(np.pi * x), (2, 1)), scheme="path")
        grid = report.solution.grid
        X, T = np.meshgrid(grid.x, grid.t, indexing="ij")
        right = np.where(X >= T - s, np.sin(np.pi * (X - (T - s))), 0.0)
        left = np.where(X + (T - s) <= 1, np.sin(np.pi * (X + (T - s))), 0.0)
        errors.append(np.abs(report.solution.values - np.stack([right, left])).max())
    order = np.log2(errors[0] / errors[1])
    constants = [e * N**2 for e, N in zip(errors, (20, 40))]
    elapsed = time.perf_counter() - start
    ok = order >= 1.8 and elapsed < 60
    record_criterion(2, ok, f"errors {errors[0]:.2e}, {errors[1]:.2e}; order {order:.2f}; "
                            f"C = {constants[0]:.2f}, {constants[1]:.2f}; {elapsed:.1f}s")
    assert ok


# -- 3: nilpotency ------------------------------------------------------------------

def test_criterion_3_nilpotency(specs):
    feedback = specs["feedback-2x2"]
    reports = [nilpotency_check(feedback, eps, 0.0, 4) for eps in (0.0, feedback.eps0)]
    data = feedback.to_dict()
    data["q"] = [[[term(0.5)], []]]
    reflect = nilpotency_check(spec_from_dict(data), 0.0, 0.0, 4)
    ok = all((r.structural, r.numerical) == (2, 2) for r in reports) and \
        (reflect.structural, reflect.numerical) == (None, None)
    record_criterion(3, ok, f"feedback-2x2 (structural, numerical) = {[(r.structural, r.numerical) for r in reports]}; "
                            f"full reflection = ({reflect.structural}, {reflect.numerical})")
    assert ok


# -- 4: extinction -------------------------------------------------------------------

def test_criterion_4_extinction(specs):
    spec = specs["decoupled-extinction"]
    norms = []
    for eps in (0.0, spec.eps0):
        d = smoothing_time(spec, eps, 0.0)[2]
        norms.append(evolution_matrix(spec, eps, 0.0, 2 * d, 200).norm())
    ok = max(norms) <= 1e-9
    record_criterion(4, ok, f"||U(2d, 0)|| = {norms[0]:.1e} (eps=0), {norms[1]:.1e} (eps=eps0) at N=200")
    assert ok


# -- 5: cocycle ------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_5_cocycle(specs):
    worst = {}
    for N, limit in ((200, 0.02), (400, 0.01)):
        for name in CATALOG_NAMES:
            spec = specs[name]
            eps = spec.eps0 / 2
            whole = evolution_matrix(spec, eps, 0.0, 1.0, N)
            first = evolution_matrix(spec, eps, 0.0, 0.5, N)
            second = evolution_matrix(spec, eps, 0.5, 1.0, N)
            defect = inf_norm(whole.matrix - second.matrix @ first.matrix) / max(whole.norm(), 1e-300)
            worst[(N, name)] = (defect, limit)
    ok = all(d <= lim for d, lim in worst.values())
    top = {N: max(d for (n, _), (d, _) in worst.items() if n == N) for N in (200, 400)}
    record_criterion(5, ok, f"max relative cocycle defect {top[200]:.1e} (N=200), {top[400]:.1e} (N=400)")
    assert ok


# -- 6: smoothing ----------------------------------------------------------------------

def test_criterion_6_smoothing(specs):
    factors = {}
    for name in ("feedback-2x2", "kinetics-2x2"):
        spec = specs[name]
        for eps in (0.0, spec.eps0):
            report = smoothing_analysis(spec, eps, 0.0, 200)
            factors[(name, eps)] = report.drop_factor_after(report.d)
    ok = min(factors.values()) >= 10
    detail = ", ".join(f"{n}@{e:g}: {f:.0f}" for (n, e), f in factors.items())
    record_criterion(6, ok, f"roughness drop factors after d {detail}")
    assert ok


# -- 7: dichotomy detection -------------------------------------------------------------

@pytest.mark.slow
def test_criterion_7_dichotomy(specs):
    spec = specs["periodic-dichotomy"]
    results = []
    for eps in (0.0, spec.eps0):
        _, _, est, ver = dichotomy_report(spec, eps, 0.0, REFERENCE_N)
        results.append((eps, est, ver))
    ok = all(est is not None and est.gap >= 0.1 and ver.passed(0.05) for _, est, ver in results)
    detail = "; ".join(
        f"eps={eps:g}: none" if est is None else
        f"eps={eps:g}: gap {est.gap:.3f}, rank {est.rank}, defects "
        + ", ".join(f"{v:.1e}" for v in ver.defects.values())
        for eps, est, ver in results)
    record_criterion(7, ok, detail)
    assert ok


# -- 8: robustness sweep -------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_8_robustness(specs):
    spec = specs["periodic-dichotomy"]
    start = time.perf_counter()
    table = robustness_sweep(spec, auto_eps_list(spec), 0.0, REFERENCE_N)
    elapsed = time.perf_counter() - start
    slope = table.slope()
    k_star = table.threshold_index()
    base = table.baseline.beta
    last = table.rows[-1]
    beta_shift = abs(last.beta - base) / base if last.beta is not None else np.inf
    gaps = [r.gap for r in table.rows]
    monotone = all(a >= b for a, b in zip(gaps[:-1], gaps[1:]))
    ok = slope >= 0.9 and k_star is not None and k_star <= 3 and beta_shift <= 0.2 and elapsed < 300
    record_criterion(8, ok, f"gap slope {slope:.3f}; k* = {k_star}; |beta - beta0|/beta0 = {beta_shift:.1e}; "
                            f"gaps monotone {monotone}; {elapsed:.0f}s")
    assert ok and monotone


# -- 9: operator identity for the difference -----------------------------------------

def test_criterion_9_difference_identity(specs):
    spec = specs["kinetics-2x2"]
    eps, tol, N = spec.eps0 / 4, 1e-9, 20
    x = np.linspace(0.0, 1.0, N + 1)
    phi = np.vstack([0.8 * np.cos(np.pi * x / 2) + 0.3 * np.sin(np.pi * x), np.cos(np.pi * x / 2)])
    u = solve_ibvp(spec, 0.0, 0.0, 1.0, phi, tol=tol, scheme="path").solution
    v = solve_ibvp(spec, eps, 0.0, 1.0, phi, tol=tol, scheme="path").solution
    grid = u.grid
    ops0 = assemble(spec, 0.0, grid)
    opse = assemble(spec, eps, grid)
    w, vf, f = u.flat() - v.flat(), v.flat(), phi.ravel()
    rhs = (ops0.BS(w, np.zeros_like(f)) + (ops0.BS(vf, f) - opse.BS(vf, f))
           + ops0.D @ w + (ops0.D - opse.D) @ vf)
    residual = float(np.abs(w - rhs).max())
    ok = residual <= 10 * tol
    record_criterion(9, ok, f"residual {residual:.1e} vs 10*tol = {10 * tol:.0e} (eps = eps0/4, N={N})")
    assert ok


# -- 10: Volterra decay -----------------------------------------------------------------

def test_criterion_10_volterra_decay(specs):
    rng = np.random.default_rng(10)
    report = []
    ok = True
    for name in CATALOG_NAMES:
        spec = specs[name]
        grid = default_grid(spec, 16, 0.0, 1.0)
        D = assemble(spec, 0.0, grid).D
        v = rng.uniform(-1, 1, D.shape[0])
        v /= np.abs(v).max()
        norms = []
        for _ in range(6):
            v = D @ v
            norms.append(float(np.abs(v).max()))
        decreasing = all(b <= a for a, b in zip(norms[:-1], norms[1:]))
        ok &= decreasing and norms[0] < 1.0
        report.append(f"{name}: {norms[0]:.1e} -> {norms[-1]:.1e}")
    record_criterion(10, ok, "; ".join(report))
    assert ok
