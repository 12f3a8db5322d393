"""Discrete evolution operators ``U^eps(t, s)`` and the smoothing property.

Matrices act on nodal values at time ``s`` (``n*(N+1)`` entries, component
major) and return nodal values at time ``t``.  They are products of the slab
maps of :func:`hypdich.solver.slab_map`, which is column-for-column the same
as running :func:`hypdich.solver.solve_ibvp` (``scheme="march"``) from each
nodal hat function.  Norms are induced sup norms (maximum absolute row sum).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import lattice_rate, transit_max
from .operators import nilpotency_check
from .solver import slab_map

PROFILE_POINTS = 9
SMOOTH_FACTOR = 10.0


class SmoothingUnsupported(ValueError):
    """``B^eps R`` is not nilpotent, so no smoothing time exists."""


@dataclass(frozen=True)
class EvolutionMatrix:
    """``U^eps(t, s)`` on ``N+1`` uniform nodes per component."""

    matrix: np.ndarray
    spec_name: str
    eps: float
    s: float
    t: float
    N: int
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def norm(self) -> float:
        return inf_norm(self.matrix)

    def __matmul__(self, other):
        if isinstance(other, EvolutionMatrix):
            return EvolutionMatrix(self.matrix @ other.matrix, self.spec_name, self.eps,
                                   other.s, self.t, self.N)
        return self.matrix @ other

    def to_csv(self) -> str:
        rows = ["row,col,value"]
        nz = np.argwhere(self.matrix != 0.0)
        rows += [f"{i},{j},{self.matrix[i, j]:.17g}" for i, j in nz]
        return "\n".join(rows) + "\n"


def inf_norm(A) -> float:
    A = np.atleast_2d(A)
    return float(np.abs(A).sum(axis=1).max()) if A.size else 0.0


# -- time lattice ------------------------------------------------------------

def step_plan(spec, N, s, t):
    """``(steps, dt)`` covering ``[s, t]``; on the lattice of :func:`lattice_rate` when aligned."""
    span = t - s
    if span < 0:
        raise ValueError("evolution needs t >= s")
    if span == 0:
        return 0, 0.0
    rate = lattice_rate(spec, N)
    steps = span * rate
    if abs(steps - round(steps)) < 1e-7:
        return int(round(steps)), 1.0 / rate
    steps = math.ceil(steps)
    return steps, span / steps


def _propagate(spec, eps, N, s, steps, dt, U, h):
    """Apply ``steps`` slab maps starting at time ``s`` to the columns of ``U``."""
    if steps == 0:
        return U
    if spec.autonomous:
        A = slab_map(spec, eps, 0.0, dt, N, h).dense
        return np.linalg.matrix_power(A, steps) @ U
    for l in range(steps):
        U = slab_map(spec, eps, s + l * dt, dt, N, h).apply(U)
    return U


def evolution_matrix(spec, eps, s, t, N, h=None) -> EvolutionMatrix:
    """``U^eps(t, s)`` as a dense ``n(N+1) x n(N+1)`` matrix.

    ``t = s`` returns the identity exactly.
    """
    steps, dt = step_plan(spec, N, s, t)
    dim = spec.n * (N + 1)
    U = _propagate(spec, eps, N, s, steps, dt, np.eye(dim), h)
    return EvolutionMatrix(np.array(U), spec.name, float(eps), float(s), float(t), int(N),
                           {"steps": steps, "dt": dt})


def evolve(spec, eps, s, t, phi, h=None) -> np.ndarray:
    """``U^eps(t, s) phi`` for nodal data ``phi`` of shape ``(n, N+1)``; returns the same shape."""
    phi = np.asarray(phi, dtype=float)
    N = phi.shape[1] - 1
    steps, dt = step_plan(spec, N, s, t)
    u = phi.ravel()
    if spec.autonomous and steps:
        slab = slab_map(spec, eps, 0.0, dt, N, h)
        for _ in range(steps):
            u = slab.apply(u)
    else:
        u = _propagate(spec, eps, N, s, steps, dt, u, h)
    return np.asarray(u).reshape(phi.shape)


def bound_check(spec, eps, s_grid, N=64, h=None) -> float:
    """``max ||U^eps(s + r, s)||`` over ``s`` in ``s_grid`` and ``r`` in ``{0, 1/4, 1/2, 3/4, 1}``."""
    best = 0.0
    for s in s_grid:
        U = np.eye(spec.n * (N + 1))
        best = max(best, 1.0)
        for _ in range(4):
            steps, dt = step_plan(spec, N, 0.0, 0.25)
            U = _propagate(spec, eps, N, s, steps, dt, U, h)
            s += 0.25
            best = max(best, inf_norm(U))
    return best


# -- smoothing --------------------------------------------------------------

@dataclass
class SmoothingReport:
    """Smoothing degree, time ``d`` and the roughness profile of a rough datum.

    ``profile`` rows are ``(t, roughness, smooth_reference)``; roughness is
    the largest scaled second difference ``|u(x-h) - 2u(x) + u(x+h)| / h``.
    """

    k: int
    transit_max: float
    d: float
    profile: list
    threshold: float
    smooth_time: float | None

    @property
    def initial_roughness(self) -> float:
        return self.profile[0][1]

    def drop_factor_after(self, t_min) -> float:
        """``roughness(s) / max roughness(t)`` over profile times ``t >= t_min``."""
        late = [r for t, r, _ in self.profile if t >= t_min - 1e-12]
        worst = max(late)
        return math.inf if worst == 0 else self.initial_roughness / worst

    def to_csv(self) -> str:
        rows = ["t,roughness,smoothReference"]
        rows += [f"{t:.17g},{r:.17g},{ref:.17g}" for t, r, ref in self.profile]
        return "\n".join(rows) + "\n"


def roughness(u, dx) -> float:
    """Largest ``|second difference| / dx`` over components and interior nodes."""
    u = np.atleast_2d(u)
    if u.shape[1] < 3:
        return 0.0
    return float(np.abs(u[:, 2:] - 2 * u[:, 1:-1] + u[:, :-2]).max() / dx)


def rough_datum(spec, N) -> np.ndarray:
    """Hat of height 1 on ``[1/4, 3/4]`` plus 1/2: kinks inside, incompatible corners."""
    x = np.linspace(0.0, 1.0, N + 1)
    hat = np.clip(1.0 - np.abs(x - 0.5) / 0.25, 0.0, None)
    return np.tile(hat + 0.5, (spec.n, 1))


def smooth_datum(spec, N) -> np.ndarray:
    """``sin^2(pi x)``: C-infinity, zero with zero slope at both edges."""
    x = np.linspace(0.0, 1.0, N + 1)
    return np.tile(np.sin(np.pi * x) ** 2, (spec.n, 1))


def smoothing_time(spec, eps, s, k_max=None):
    """``(k, transit_max, d)`` with ``d = k * transit_max``.

    Raises
    ------
    SmoothingUnsupported
        If ``B^eps R`` is not nilpotent or the structural and numerical degrees differ.
    """
    k_max = k_max or spec.n + 1
    report = nilpotency_check(spec, eps, s, k_max)
    if report.structural is None or report.numerical is None:
        raise SmoothingUnsupported(
            f"evolution.smoothing_analysis: B^eps R is not nilpotent for {spec.name!r}")
    if not report.agree:
        raise SmoothingUnsupported(
            f"evolution.smoothing_analysis: structural k={report.structural} "
            f"disagrees with numerical k={report.numerical}")
    tm = transit_max(spec)
    return report.structural, tm, report.structural * tm


def smoothing_analysis(spec, eps, s, N, h=None) -> SmoothingReport:
    """Roughness of ``U(t,s) phi`` for a rough ``phi`` at ``t = s + j d/4``, ``j = 0..8``."""
    k, tm, d = smoothing_time(spec, eps, s)
    dx = 1.0 / N
    u, v = rough_datum(spec, N), smooth_datum(spec, N)
    times = [s + j * d / 4 for j in range(PROFILE_POINTS)]
    profile = [(s, roughness(u, dx), roughness(v, dx))]
    for t0, t1 in zip(times[:-1], times[1:]):
        u = evolve(spec, eps, t0, t1, u, h)
        v = evolve(spec, eps, t0, t1, v, h)
        profile.append((t1, roughness(u, dx), roughness(v, dx)))
    threshold = SMOOTH_FACTOR * max(ref for _, _, ref in profile)
    smooth_time = next((t for t, r, _ in profile if r <= threshold), None)
    return SmoothingReport(k, tm, d, profile, threshold, smooth_time)
