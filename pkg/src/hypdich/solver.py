"""Continuous solutions of the initial-boundary value problem via the integral system.

A continuous solution on the strip ``s <= t <= s+T`` is a fixed point of

    u = B^eps S u + D^eps u,

where ``S`` places the initial data on the floor and ``Ru`` on the inflow
edges.  Two discretizations of this fixed point are provided.

``"path"``
    One Picard iteration over the whole strip grid, every characteristic
    traced back to the floor or the inflow edge.  Interpolation happens only
    at the exit point, so transport is second-order accurate.  Cost grows
    with the square of the grid size when off-diagonal coupling is present.
``"march"``
    The same fixed point solved slab by slab: each time step ``[t_l, t_{l+1}]``
    is its own strip with floor data taken from the previous level.  This is
    the discrete evolution operator used by :mod:`hypdich.evolution`; it is
    first-order diffusive but composes exactly (``U(t,tau) = U(t,s) U(s,tau)``
    on the time lattice).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .characteristics import H_CHAR
from .grid import Grid, GridFunction, time_steps
from .operators import assemble, check_compatibility

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 200
DEFAULT_N = 200
COMPAT_TOL = 1e-12
SCHEMES = ("march", "path")


class ConvergenceError(RuntimeError):
    """Picard iteration did not reach the tolerance; carries the last defect."""

    def __init__(self, message, defect):
        super().__init__(message)
        self.defect = defect


@dataclass
class SolveReport:
    """Result of :func:`solve_ibvp`.

    Attributes
    ----------
    solution : GridFunction
    iterations : int
        Picard sweeps (for ``"march"`` the largest count over the slabs).
    residual : float
        Sup norm of the defect ``u - (B^eps S u + D^eps u)`` of the returned iterate.
    apriori_ratio : float
        ``sup|u| / sup|phi|`` (``nan`` for zero data).
    compatible : bool
        False when the corner conditions fail; the grid solution then
        approximates a discontinuous broad solution.
    """

    solution: GridFunction
    iterations: int
    residual: float
    apriori_ratio: float
    compatible: bool
    corner_residuals: np.ndarray
    scheme: str
    eps: float
    tol: float
    spec: object = None

    def lines(self) -> list[str]:
        g = self.solution.grid
        return [f"scheme={self.scheme}", f"eps={self.eps:.17g}", f"s={g.s:.17g}", f"T={g.T:.17g}",
                f"N={g.N}", f"M={g.M}", f"iterations={self.iterations}",
                f"residual={self.residual:.17g}", f"tol={self.tol:.17g}",
                f"aprioriRatio={self.apriori_ratio:.17g}", f"supNorm={self.solution.sup_norm():.17g}",
                f"compatible={str(self.compatible).lower()}",
                "cornerResiduals=" + ",".join(f"{r:.17g}" for r in self.corner_residuals)]


def _phi_array(spec, phi):
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 2 or phi.shape[0] != spec.n or phi.shape[1] < 2:
        raise ValueError(f"initial data must have shape (n={spec.n}, N+1)")
    if not np.all(np.isfinite(phi)):
        raise ValueError("initial data must be finite")
    return phi


def solve_ibvp(spec, eps, s, T, phi, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, *,
               scheme="march", M=None, h=None, initial=None) -> SolveReport:
    """Solve ``u = B^eps S u + D^eps u`` on ``[0,1] x [s, s+T]`` by successive approximation.

    Parameters
    ----------
    phi : array_like, shape (n, N+1)
        Initial data on the uniform ``x`` nodes; fixes ``N``.
    scheme : {"march", "path"}
        See the module docstring.
    M : int, optional
        Number of time steps; defaults to the lattice of :func:`hypdich.grid.time_steps`.
    h : float, optional
        Characteristic step; defaults to ``H_CHAR`` for ``"path"`` and to
        ``1/N`` (one or two steps per slab) for ``"march"``.
    initial : GridFunction, optional
        Starting iterate (``"path"`` only); the default extends ``phi`` constantly in ``t``.

    Raises
    ------
    ConvergenceError
        If ``max_iter`` sweeps do not bring successive iterates within ``tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    if not T > 0:
        raise ValueError("T must be positive")
    phi = _phi_array(spec, phi)
    N = phi.shape[1] - 1
    grid = Grid(N, M or time_steps(spec, N, T), float(s), float(T))
    corners = check_compatibility(spec, phi, s)
    compatible = bool(np.all(corners <= COMPAT_TOL))
    if not compatible:
        log.warning("solve_ibvp: initial data violate the corner conditions (max %.3g)", corners.max())

    if scheme == "path":
        h = H_CHAR if h is None else h
        values, iterations, residual = _solve_path(spec, eps, grid, phi, tol, max_iter, h, initial)
    else:
        values, iterations, residual = _solve_march(spec, eps, grid, phi, tol, max_iter, h)

    u = GridFunction(grid, values)
    peak = float(np.abs(phi).max())
    ratio = u.sup_norm() / peak if peak > 0 else float("nan")
    return SolveReport(u, iterations, residual, ratio, compatible, corners, scheme, float(eps), tol, spec)


def _solve_path(spec, eps, grid, phi, tol, max_iter, h, initial):
    ops = assemble(spec, eps, grid, h, with_D=True)
    f = phi.ravel()
    if initial is not None:
        u = initial.flat().copy()
    else:
        u = np.repeat(phi[:, :, None], grid.M + 1, axis=2).ravel()
    for it in range(1, max_iter + 1):
        new = ops.rep_rhs(u, f)
        change = float(np.abs(new - u).max())
        u = new
        if change <= tol:
            residual = float(np.abs(u - ops.rep_rhs(u, f)).max())
            return u.reshape(grid.shape(spec.n)), it, residual
    residual = float(np.abs(u - ops.rep_rhs(u, f)).max())
    raise ConvergenceError(f"solver.solve_ibvp: no convergence in {max_iter} sweeps (defect {residual:.3g})",
                           residual)


# -- slab maps --------------------------------------------------------------

class SlabMap:
    """One time step ``t_l -> t_{l+1}``: the new level ``z`` solves ``z = E u_l + G z``."""

    def __init__(self, E: sp.csr_matrix, G: sp.csr_matrix):
        self.E, self.G = E, G

    def picard(self, u_l, tol, max_iter):
        """Successive approximation from ``z = u_l``; returns ``(z, sweeps, defect)``."""
        z = u_l.copy()
        Eu = self.E @ u_l
        for it in range(1, max_iter + 1):
            new = Eu + self.G @ z
            change = float(np.abs(new - z).max())
            z = new
            if change <= tol:
                return z, it, float(np.abs(z - Eu - self.G @ z).max())
        defect = float(np.abs(z - Eu - self.G @ z).max())
        raise ConvergenceError(f"solver.solve_ibvp: slab iteration stalled (defect {defect:.3g})", defect)

    @cached_property
    def _lu(self):
        return spla.splu(sp.identity(self.G.shape[0], format="csc") - self.G.tocsc())

    def apply(self, U):
        """Exact fixed point ``(I - G)^{-1} E U`` for a vector or a matrix of columns."""
        rhs = self.E @ U
        if self.G.nnz == 0:
            return np.asarray(rhs)
        return self._lu.solve(np.asarray(rhs))

    @cached_property
    def dense(self) -> np.ndarray:
        return self.apply(np.eye(self.E.shape[1]))


def slab_map(spec, eps, t0, dt, N, h=None) -> SlabMap:
    """The slab operator for ``[t0, t0+dt]``; shared across ``t0`` for autonomous scenarios.

    ``h`` defaults to ``1/N``: a slab is crossed in one or two RK4 steps.
    """
    h = 1.0 / N if h is None else h
    if spec.autonomous:
        t0 = 0.0
    elif spec.period is not None:
        t0 = round(t0 % spec.period, 12) % spec.period
    return _slab_map_cached(spec, float(eps), float(t0), float(dt), int(N), float(h))


@lru_cache(maxsize=4096)
def _slab_map_cached(spec, eps, t0, dt, N, h):
    grid = Grid(N, 1, t0, dt)
    ops = assemble(spec, eps, grid, h, with_D=True)
    n = spec.n
    nodes = np.arange(n * (N + 1) * 2).reshape(n, N + 1, 2)
    lvl0, lvl1 = nodes[:, :, 0].ravel(), nodes[:, :, 1].ravel()
    B_edge = ops.B_edge[lvl1]
    R = ops.R.tocsc()
    E = ops.B_floor[lvl1] + B_edge @ R[:, lvl0]
    G = B_edge @ R[:, lvl1]
    if ops.D is not None and ops.D.nnz:
        D = ops.D[lvl1]
        E = E + D[:, lvl0]
        G = G + D[:, lvl1]
    E, G = E.tocsr(), G.tocsr()
    E.eliminate_zeros()
    G.eliminate_zeros()
    return SlabMap(E, G)


def _solve_march(spec, eps, grid, phi, tol, max_iter, h):
    n, N, M = spec.n, grid.N, grid.M
    values = np.empty(grid.shape(n))
    values[:, :, 0] = phi
    u = phi.ravel()
    sweeps = 0
    defect = 0.0
    t = grid.t
    for l in range(M):
        slab = slab_map(spec, eps, t[l], grid.dt, N, h)
        u, it, d = slab.picard(u, tol, max_iter)
        sweeps, defect = max(sweeps, it), max(defect, d)
        values[:, :, l + 1] = u.reshape(n, N + 1)
    return values, sweeps, defect


def apriori_check(report: SolveReport, T, cap=None) -> bool:
    """True iff ``sup|u| / sup|phi| <= C_cap(T)``.

    ``cap`` defaults to the value frozen in the scenario's catalog metadata
    (``meta["aprioriCap"]``, keyed by horizon); zero data pass vacuously.
    """
    ratio = report.apriori_ratio
    if not np.isfinite(ratio):
        return True
    if cap is None:
        cap = apriori_cap(report.spec, T)
    return bool(ratio <= cap)


def apriori_cap(spec, T) -> float:
    """Frozen ``C_cap(T)`` from the catalog metadata (largest recorded horizon >= T)."""
    caps = spec.meta.get("aprioriCap", {})
    horizons = sorted(float(k) for k in caps)
    for hz in horizons:
        if hz >= T - 1e-12:
            return float(caps[_key(caps, hz)])
    raise KeyError(f"scenario {spec.name!r} records no a priori cap for T={T}")


def _key(caps, hz):
    for k in caps:
        if float(k) == hz:
            return k
    raise KeyError(hz)
