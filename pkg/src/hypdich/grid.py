"""Nodal surrogates for continuous functions on a space-time strip."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .scenarios import sample_points


@dataclass(frozen=True)
class Grid:
    """Uniform nodes ``x_i = i/N`` and ``t_l = s + l*T/M``."""

    N: int
    M: int
    s: float
    T: float

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.N + 1)

    @property
    def t(self) -> np.ndarray:
        return self.s + self.T * np.linspace(0.0, 1.0, self.M + 1)

    @property
    def dx(self) -> float:
        return 1.0 / self.N

    @property
    def dt(self) -> float:
        return self.T / self.M

    def shape(self, n: int) -> tuple:
        return (n, self.N + 1, self.M + 1)


def speed_bounds(spec, density: int = 33) -> tuple[float, float]:
    """Sampled ``(min |a|, max |a|)`` over ``[0,1] x time window x [0, eps0]``."""
    X, T, eps = sample_points(spec, density)
    lo, hi = np.inf, 0.0
    for j in range(spec.n):
        for e in eps:
            v = np.abs(spec.a[j].value(X, T, e))
            lo, hi = min(lo, float(v.min())), max(hi, float(v.max()))
    return lo, hi


def transit_max(spec, density: int = 33) -> float:
    """Upper estimate of the crossing time ``max_j int_0^1 dxi/|a_j|`` (sampled sup of ``1/|a_j|``)."""
    return 1.0 / speed_bounds(spec, density)[0]


def lattice_rate(spec, N: int) -> int:
    """Time steps per unit time: the smallest multiple of 8 with ``dt <= dx / max|a|``."""
    amax = speed_bounds(spec)[1]
    return 8 * math.ceil(N * amax / 8 - 1e-9)


def time_steps(spec, N: int, T: float) -> int:
    """Number of time steps covering a horizon ``T`` on the lattice of :func:`lattice_rate`."""
    return max(1, math.ceil(T * lattice_rate(spec, N) - 1e-7))


def default_grid(spec, N: int, s: float, T: float) -> Grid:
    return Grid(N, time_steps(spec, N, T), float(s), float(T))


class GridFunction:
    """``n`` components sampled on a :class:`Grid`; bilinear between nodes.

    ``values`` has shape ``(n, N+1, M+1)``.  Instances are treated as immutable.
    """

    def __init__(self, grid: Grid, values):
        values = np.array(values, dtype=float)
        if values.ndim != 3 or values.shape[1:] != (grid.N + 1, grid.M + 1):
            raise ValueError(f"values shape {values.shape} does not match grid {grid}")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function values must be finite")
        self.grid = grid
        self.values = values
        self.values.setflags(write=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @classmethod
    def zeros(cls, grid: Grid, n: int) -> "GridFunction":
        return cls(grid, np.zeros(grid.shape(n)))

    @classmethod
    def from_function(cls, grid: Grid, n: int, fn) -> "GridFunction":
        """Sample ``fn(j, X, T)`` (broadcast over the nodes) for each component."""
        X, T = np.meshgrid(grid.x, grid.t, indexing="ij")
        return cls(grid, np.stack([np.broadcast_to(fn(j, X, T), X.shape) for j in range(n)]))

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max()) if self.values.size else 0.0

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def at_time_index(self, l: int) -> np.ndarray:
        return self.values[:, :, l]

    def interp(self, j: int, xi, tau):
        """Bilinear value of component ``j`` at points ``(xi, tau)``."""
        g = self.grid
        xi = np.asarray(xi, dtype=float)
        tau = np.asarray(tau, dtype=float)
        fx = np.clip(xi * g.N, 0.0, g.N)
        ix = np.minimum(fx.astype(int), g.N - 1)
        wx = fx - ix
        ft = np.clip((tau - g.s) / g.dt, 0.0, g.M)
        it = np.minimum(ft.astype(int), g.M - 1)
        wt = ft - it
        v = self.values[j]
        return ((1 - wx) * (1 - wt) * v[ix, it] + wx * (1 - wt) * v[ix + 1, it]
                + (1 - wx) * wt * v[ix, it + 1] + wx * wt * v[ix + 1, it + 1])

    def __add__(self, other):
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, c):
        return GridFunction(self.grid, self.values * c)

    __rmul__ = __mul__

    # -- CSV ------------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("component,xIndex,tIndex,value\n")
        n, nx, nt = self.values.shape
        for j in range(n):
            for i in range(nx):
                for l in range(nt):
                    buf.write(f"{j},{i},{l},{self.values[j, i, l]:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, grid: Grid) -> "GridFunction":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows or set(rows[0]) != {"component", "xIndex", "tIndex", "value"}:
            raise ValueError("expected header component,xIndex,tIndex,value")
        n = 1 + max(int(r["component"]) for r in rows)
        vals = np.full(grid.shape(n), np.nan)
        for r in rows:
            vals[int(r["component"]), int(r["xIndex"]), int(r["tIndex"])] = float(r["value"])
        if np.isnan(vals).any():
            raise ValueError("CSV does not cover every node of the grid")
        return cls(grid, vals)


@dataclass(frozen=True)
class BoundaryTrace:
    """Edge values ``u_k(0, t_l)`` and ``u_k(1, t_l)``; arrays of shape ``(n, M+1)``."""

    t: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @classmethod
    def of(cls, u: GridFunction) -> "BoundaryTrace":
        return cls(u.grid.t, u.values[:, 0, :].copy(), u.values[:, -1, :].copy())

    def at(self, t: float):
        """Edge values at time ``t`` (linear in time between nodes)."""
        if t < self.t[0] - 1e-12 or t > self.t[-1] + 1e-12:
            raise ValueError(f"t={t} outside the trace range [{self.t[0]}, {self.t[-1]}]")
        left = np.array([np.interp(t, self.t, row) for row in self.left])
        right = np.array([np.interp(t, self.t, row) for row in self.right])
        return left, right
