"""Discrete versions of the boundary, transport and integral operators.

On a :class:`~hypdich.grid.Grid` every operator is a sparse matrix acting on
flattened nodal values (C order of shape ``(n, N+1, M+1)``):

``R``
    nodal values -> boundary data ``(Ru)_j(t_l)``, shape ``(n*(M+1), nodes)``.
``B^eps``
    evaluation at the backward exit of each characteristic, times ``c_j``.
    Split into ``B_floor`` (exits through ``t = s``, reading a function of
    ``x``) and ``B_edge`` (exits through the inflow edge, reading a function
    of ``t``).
``D^eps``, ``F^eps``
    trapezoid quadrature along the characteristic, with the integrand read
    from the nodes by bilinear interpolation.

The row for a node is built by tracing its characteristic once
(:func:`hypdich.characteristics.march`); all rows of a component are traced
together.
"""

from __future__ import annotations

import graphlib
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .characteristics import H_CHAR, INITIAL, LATERAL, march
from .grid import BoundaryTrace, Grid, GridFunction, default_grid, transit_max

log = logging.getLogger(__name__)

NILPOTENT_ZERO = 1e-10


class _Coo:
    """Growing COO triplets, periodically folded into a CSR sum."""

    def __init__(self, shape, chunk=4_000_000):
        self.shape = shape
        self.chunk = chunk
        self.parts = []
        self.size = 0
        self.total = sp.csr_matrix(shape)

    def add(self, rows, cols, vals):
        self.parts.append((rows, cols, vals))
        self.size += rows.size
        if self.size > self.chunk:
            self._fold()

    def _fold(self):
        if self.parts:
            r = np.concatenate([p[0] for p in self.parts])
            c = np.concatenate([p[1] for p in self.parts])
            v = np.concatenate([p[2] for p in self.parts])
            self.total = self.total + sp.csr_matrix((v, (r, c)), shape=self.shape)
        self.parts, self.size = [], 0

    def csr(self):
        self._fold()
        out = self.total.tocsr()
        out.sum_duplicates()
        return out


def _bilinear(grid: Grid, xi, tau):
    """Flat ``(ix, it)`` corner offsets and weights of the bilinear stencil at ``(xi, tau)``."""
    fx = np.clip(xi * grid.N, 0.0, grid.N)
    ix = np.minimum(fx.astype(np.int64), grid.N - 1)
    wx = fx - ix
    ft = np.clip((tau - grid.s) / grid.dt, 0.0, grid.M)
    it = np.minimum(ft.astype(np.int64), grid.M - 1)
    wt = ft - it
    stride = grid.M + 1
    base = ix * stride + it
    offsets = (base, base + stride, base + 1, base + stride + 1)
    weights = ((1 - wx) * (1 - wt), wx * (1 - wt), (1 - wx) * wt, wx * wt)
    return offsets, weights


@dataclass
class StripOperators:
    """Sparse matrices of ``R``, ``B^eps``, ``D^eps`` and ``F^eps`` on one grid."""

    spec: object
    eps: float
    grid: Grid
    h: float
    R: sp.csr_matrix
    B_floor: sp.csr_matrix
    B_edge: sp.csr_matrix
    D: sp.csr_matrix | None
    F: sp.csr_matrix | None
    exit_kind: np.ndarray
    exit_xi: np.ndarray
    exit_tau: np.ndarray

    @property
    def nodes(self) -> int:
        return self.spec.n * (self.grid.N + 1) * (self.grid.M + 1)

    def BS(self, u_flat, phi_flat):
        """``(B^eps S u)`` as a flat vector (or matrix of column vectors)."""
        return self.B_floor @ phi_flat + self.B_edge @ (self.R @ u_flat)

    def rep_rhs(self, u_flat, phi_flat):
        """Right-hand side ``B^eps S u + D^eps u`` of the integral representation."""
        out = self.BS(u_flat, phi_flat)
        if self.D is not None:
            out = out + self.D @ u_flat
        return out


def boundary_matrix(spec, grid: Grid) -> sp.csr_matrix:
    """``R`` as a sparse matrix: nodal values -> ``(Ru)_j(t_l)`` at row ``j*(M+1)+l``."""
    n, N, M = spec.n, grid.N, grid.M
    t = grid.t
    rows, cols, vals = [], [], []
    stride_c = (N + 1) * (M + 1)
    lvl = np.arange(M + 1)
    for j in range(n):
        for k in range(n):
            coef = spec.boundary_coef(j, k)
            if coef.is_zero():
                continue
            ix = 0 if spec.outflow_edge(k) == 0.0 else N
            rows.append(j * (M + 1) + lvl)
            cols.append(k * stride_c + ix * (M + 1) + lvl)
            vals.append(np.broadcast_to(coef.value(0.0, t), lvl.shape).astype(float))
    if not rows:
        return sp.csr_matrix((n * (M + 1), n * stride_c))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n * (M + 1), n * stride_c))


def assemble(spec, eps, grid: Grid, h=H_CHAR, with_D=True, with_F=False) -> StripOperators:
    """Assemble the operator matrices of ``spec`` at ``eps`` on ``grid``."""
    return _assemble_cached(spec, float(eps), grid, float(h), bool(with_D), bool(with_F))


@lru_cache(maxsize=8)
def _assemble_cached(spec, eps, grid, h, with_D, with_F):
    n, N, M = spec.n, grid.N, grid.M
    per = (N + 1) * (M + 1)
    nodes = n * per
    X, T = np.meshgrid(grid.x, grid.t, indexing="ij")
    X, T = X.ravel(), T.ravel()
    s = grid.s

    floor_r, floor_c, floor_v = [], [], []
    edge_r, edge_c, edge_v = [], [], []
    kind_all = np.empty(nodes, dtype=np.int8)
    xi_all = np.empty(nodes)
    tau_all = np.empty(nodes)
    coupled = with_D and spec.has_coupling()
    Dacc = _Coo((nodes, nodes)) if coupled else None
    Facc = _Coo((nodes, nodes)) if with_F else None

    for j in range(n):
        base = j * per
        a_j = spec.a[j]
        b_row = [(k, spec.b(j, k)) for k in range(n) if k != j and not spec.gamma[j][k].is_zero()]

        on_segment = None
        if Dacc is not None or Facc is not None:
            def on_segment(idx, xi0, tau0, lc0, xi1, tau1, lc1, dxi, base=base, a_j=a_j, b_row=b_row, j=j):
                rows = base + idx
                for xi, tau, lc in ((xi0, tau0, lc0), (xi1, tau1, lc1)):
                    wgt = 0.5 * dxi * np.exp(lc) / a_j.value(xi, tau, eps)
                    offsets, weights = _bilinear(grid, xi, tau)
                    if Dacc is not None:
                        for k, bjk in b_row:
                            wk = wgt * bjk.value(xi, tau, eps)
                            for off, cw in zip(offsets, weights):
                                Dacc.add(rows, k * per + off, wk * cw)
                    if Facc is not None:
                        for off, cw in zip(offsets, weights):
                            Facc.add(rows, base + off, -wgt * cw)

        ex, et, kind, lc = march(spec, j, X, T, eps, s, h, on_segment=on_segment)
        c = np.exp(lc)
        rows = base + np.arange(per)
        kind_all[rows], xi_all[rows], tau_all[rows] = kind, ex, et

        fl = kind == INITIAL
        fx = np.clip(ex[fl] * N, 0.0, N)
        ix = np.minimum(fx.astype(np.int64), N - 1)
        w = fx - ix
        floor_r += [rows[fl], rows[fl]]
        floor_c += [j * (N + 1) + ix, j * (N + 1) + ix + 1]
        floor_v += [c[fl] * (1 - w), c[fl] * w]

        lat = kind == LATERAL
        ft = np.clip((et[lat] - s) / grid.dt, 0.0, M)
        it = np.minimum(ft.astype(np.int64), M - 1)
        w = ft - it
        edge_r += [rows[lat], rows[lat]]
        edge_c += [j * (M + 1) + it, j * (M + 1) + it + 1]
        edge_v += [c[lat] * (1 - w), c[lat] * w]

    def csr(r, c, v, shape):
        m = sp.csr_matrix((np.concatenate(v), (np.concatenate(r), np.concatenate(c))), shape=shape)
        m.sum_duplicates()
        m.eliminate_zeros()
        return m

    return StripOperators(
        spec=spec, eps=eps, grid=grid, h=h,
        R=boundary_matrix(spec, grid),
        B_floor=csr(floor_r, floor_c, floor_v, (nodes, n * (N + 1))),
        B_edge=csr(edge_r, edge_c, edge_v, (nodes, n * (M + 1))),
        D=Dacc.csr() if Dacc is not None else (sp.csr_matrix((nodes, nodes)) if with_D else None),
        F=Facc.csr() if Facc is not None else None,
        exit_kind=kind_all, exit_xi=xi_all, exit_tau=tau_all,
    )


# -- boundary data -------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryData:
    """Output of ``S``: the floor carries ``phi``, the lateral boundary carries ``(Ru)(t)``.

    ``floor`` has shape ``(n, N+1)``, ``edge`` has shape ``(n, M+1)``.
    """

    grid: Grid
    floor: np.ndarray
    edge: np.ndarray


def apply_R(spec, trace: BoundaryTrace, t: float) -> np.ndarray:
    """``(Ru)(t)`` from edge values; row ``j`` reads each ``u_k`` at its outflow edge."""
    left, right = trace.at(t)
    out = np.zeros(spec.n)
    for j in range(spec.n):
        for k in range(spec.n):
            coef = spec.boundary_coef(j, k)
            if coef.is_zero():
                continue
            uk = left[k] if spec.outflow_edge(k) == 0.0 else right[k]
            out[j] += float(coef.value(0.0, t)) * uk
    return out


def _as_phi(phi, spec, grid) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (spec.n, grid.N + 1):
        raise ValueError(f"initial data must have shape {(spec.n, grid.N + 1)}, got {phi.shape}")
    return phi


def apply_S(spec, u: GridFunction, phi) -> BoundaryData:
    """Boundary/initial data field: ``phi`` on the floor, ``(Ru)(t)`` on the lateral edges."""
    phi = _as_phi(phi, spec, u.grid)
    Ru = boundary_matrix(spec, u.grid) @ u.flat()
    return BoundaryData(u.grid, phi.copy(), Ru.reshape(spec.n, u.grid.M + 1))


def apply_B(spec, v, eps, h=H_CHAR) -> GridFunction:
    """``(B^eps v)_j(x,t) = c_j(x_j, x, t, eps) v_j(x_j, omega_j(x_j))``.

    ``v`` is a :class:`GridFunction` (its edge columns and floor row are read)
    or the :class:`BoundaryData` produced by :func:`apply_S`.
    """
    grid = v.grid
    ops = assemble(spec, eps, grid, h, with_D=False)
    if isinstance(v, BoundaryData):
        floor, edge = v.floor, v.edge
    else:
        vals = v.values
        floor = vals[:, :, 0]
        edge = np.stack([vals[j, 0 if spec.inflow_edge(j) == 0.0 else -1, :] for j in range(spec.n)])
    out = ops.B_floor @ floor.ravel() + ops.B_edge @ edge.ravel()
    return GridFunction(grid, out.reshape(grid.shape(spec.n)))


def apply_D(spec, w: GridFunction, eps, h=H_CHAR) -> GridFunction:
    """``(D^eps w)_j = -int_{x_j}^x d_j sum_{k != j} b_jk w_k d xi`` along the characteristic."""
    ops = assemble(spec, eps, w.grid, h, with_D=True)
    return GridFunction(w.grid, (ops.D @ w.flat()).reshape(w.values.shape))


def apply_F(spec, f: GridFunction, eps, h=H_CHAR) -> GridFunction:
    """``(F^eps f)_j = int_{x_j}^x d_j f_j d xi`` along the characteristic."""
    ops = assemble(spec, eps, f.grid, h, with_D=False, with_F=True)
    return GridFunction(f.grid, (ops.F @ f.flat()).reshape(f.values.shape))


def check_compatibility(spec, phi, s) -> np.ndarray:
    """Corner residuals ``|phi_j(inflow edge) - (R phi)_j(s)|`` per component."""
    phi = np.asarray(phi, dtype=float)
    trace = BoundaryTrace(np.array([s]), phi[:, :1].copy(), phi[:, -1:].copy())
    Rphi = apply_R(spec, trace, s)
    inflow = np.array([phi[j, 0] if j < spec.m else phi[j, -1] for j in range(spec.n)])
    return np.abs(inflow - Rphi)


# -- nilpotency of B^eps R ----------------------------------------------------

@dataclass(frozen=True)
class NilpotencyReport:
    structural: int | None
    numerical: int | None
    strip_height: float

    @property
    def agree(self) -> bool:
        return self.structural == self.numerical

    @property
    def k(self) -> int | None:
        return self.numerical


def structural_nilpotency(spec) -> int | None:
    """Longest path + 1 in the boundary coupling digraph (edge ``k -> j`` iff ``R_jk != 0``); None if cyclic."""
    preds = {j: {k for k in range(spec.n) if not spec.boundary_coef(j, k).is_zero()}
             for j in range(spec.n)}
    try:
        order = list(graphlib.TopologicalSorter(preds).static_order())
    except graphlib.CycleError:
        return None
    longest = {}
    for j in order:
        longest[j] = max((longest[k] + 1 for k in preds[j]), default=0)
    return max(longest.values()) + 1


def nilpotency_check(spec, eps, s, k_max, N=16, h=H_CHAR) -> NilpotencyReport:
    """Structural and numerical degree of nilpotency of ``B^eps R``.

    The numerical check applies ``(B^eps R)^p`` to every nodal basis function
    of a strip of height ``2 * k_max * transit_max`` and returns the first ``p``
    whose images all have sup norm <= 1e-10 (exits through the floor read 0).
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    height = 2.0 * k_max * transit_max(spec)
    grid = default_grid(spec, N, s, height)
    ops = assemble(spec, eps, grid, h, with_D=False)
    K = (ops.R @ ops.B_edge).tocsr()
    W = ops.R.tocsr()
    numerical = None
    for p in range(1, k_max + 1):
        image = ops.B_edge @ W
        peak = float(abs(image).max()) if image.nnz else 0.0
        if peak <= NILPOTENT_ZERO:
            numerical = p
            break
        W = (K @ W).tocsr()
    report = NilpotencyReport(structural_nilpotency(spec), numerical, height)
    if not report.agree:
        log.warning("nilpotency: structural degree %s disagrees with numerical degree %s",
                    report.structural, report.numerical)
    return report


def nilpotency_degree(spec, eps, s, k_max, N=16, h=H_CHAR) -> int | None:
    """Numerical degree ``k`` with ``(B^eps R)^k = 0`` (None if not reached by ``k_max``)."""
    return nilpotency_check(spec, eps, s, k_max, N, h).numerical
