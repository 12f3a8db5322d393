"""Characteristic curves ``tau = omega_j(xi; x, t, eps)`` and their derivatives.

The curve through ``(x, t)`` solves ``d omega / d xi = 1 / a_j(xi, omega, eps)``
with ``omega(x) = t``.  Curves are integrated with the classical fixed-step
fourth-order Runge-Kutta method in ``xi``; the backward exit from the strip
``0 <= x <= 1, tau >= s`` is located by landing exactly on the lateral edge
or by bisection in the step length when the floor ``tau = s`` is crossed.

Path integrals (the weights ``c_j``, ``d_j`` and the closed-form
derivatives of ``omega``) use the composite trapezoid rule on the RK4 nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

H_CHAR = 1.0 / 1024
BISECT_TOL = 1e-12

INITIAL = 0
LATERAL = 1


class SingularityError(ArithmeticError):
    """A closed-form derivative divides by a vanishing speed difference."""


class IntersectionError(ValueError):
    """More than one crossing of two characteristics on ``[0, 1]``."""


@dataclass(frozen=True)
class CharacteristicPath:
    """Sampled backward characteristic from ``anchor`` to its exit.

    ``samples`` holds rows ``(xi, tau)`` ordered by increasing ``xi``;
    ``log_c`` holds ``log c_j(xi, x, t, eps)`` on the same rows.
    """

    j: int
    anchor: tuple
    samples: np.ndarray
    log_c: np.ndarray
    exit: str
    exit_abscissa: float
    exit_ordinate: float
    strip_floor: float

    def to_csv(self) -> str:
        lines = ["xi,tau"]
        lines += [f"{xi:.17g},{tau:.17g}" for xi, tau in self.samples]
        return "\n".join(lines) + "\n"


def _rk4(a, xi, tau, h, eps, k1=None):
    """One RK4 step of ``dtau/dxi = 1/a`` with signed step ``h`` (arrays)."""
    if k1 is None:
        k1 = 1.0 / a.value(xi, tau, eps)
    k2 = 1.0 / a.value(xi + 0.5 * h, tau + 0.5 * h * k1, eps)
    k3 = 1.0 / a.value(xi + 0.5 * h, tau + 0.5 * h * k2, eps)
    k4 = 1.0 / a.value(xi + h, tau + h * k3, eps)
    return tau + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def march(spec, j, x, t, eps, s, h=H_CHAR, on_segment=None):
    """Trace many backward characteristics of component ``j`` at once.

    Parameters
    ----------
    x, t : array_like
        Anchors; ``t >= s`` is assumed.
    on_segment : callable, optional
        Called as ``on_segment(idx, xi0, tau0, lc0, xi1, tau1, lc1, dxi)`` for
        every trapezoid segment, ``idx`` indexing the anchors, ``lc`` the
        running ``log c_j`` and ``dxi`` the signed segment length.

    Returns
    -------
    exit_xi, exit_tau : ndarray
    kind : ndarray of int
        ``INITIAL`` (floor, including corners) or ``LATERAL``.
    log_c : ndarray
        ``log c_j`` at the exit.
    """
    a = spec.a[j]
    bjj = spec.b_diag[j]
    has_b = not bjj.is_zero()
    direction = -1.0 if j < spec.m else 1.0
    edge = 0.0 if j < spec.m else 1.0

    x = np.atleast_1d(np.asarray(x, dtype=float)).ravel().copy()
    t = np.atleast_1d(np.asarray(t, dtype=float)).ravel().copy()
    x, t = np.broadcast_arrays(x, t)
    size = x.size
    exit_xi = x.copy()
    exit_tau = t.copy()
    kind = np.full(size, INITIAL, dtype=np.int8)
    log_c = np.zeros(size)

    floor_now = t <= s
    at_edge = (np.abs(x - edge) <= 0.0) & ~floor_now
    kind[at_edge] = LATERAL
    idx = np.flatnonzero(~floor_now & ~at_edge)
    xi, tau = x[idx].copy(), t[idx].copy()
    lc = np.zeros(idx.size)
    av = a.value(xi, tau, eps)
    g = bjj.value(xi, tau, eps) / av if has_b else np.zeros(idx.size)

    while idx.size:
        dist = np.abs(xi - edge)
        step = np.minimum(h, dist)
        hs = direction * step
        tau_new = _rk4(a, xi, tau, hs, eps, k1=1.0 / av)
        crossed = tau_new <= s
        if crossed.any():
            # bisection on the step length: tau(sigma) = s
            lo = np.zeros(crossed.sum())
            hi = step[crossed]
            xs, ts = xi[crossed], tau[crossed]
            k1 = 1.0 / av[crossed]
            while np.max(hi - lo) > BISECT_TOL:
                mid = 0.5 * (lo + hi)
                below = _rk4(a, xs, ts, direction * mid, eps, k1=k1) <= s
                hi = np.where(below, mid, hi)
                lo = np.where(below, lo, mid)
            step = step.copy()
            step[crossed] = hi
            hs = direction * step
            tau_new = tau_new.copy()
            tau_new[crossed] = s
        xi_new = xi + hs
        landed = ~crossed & (step >= dist)
        xi_new[landed] = edge
        av_new = a.value(xi_new, tau_new, eps)
        g_new = bjj.value(xi_new, tau_new, eps) / av_new if has_b else g
        lc_new = lc + 0.5 * (g + g_new) * hs if has_b else lc
        if on_segment is not None:
            on_segment(idx, xi, tau, lc, xi_new, tau_new, lc_new, hs)
        done = crossed | landed
        if done.any():
            di = idx[done]
            exit_xi[di] = xi_new[done]
            exit_tau[di] = tau_new[done]
            log_c[di] = lc_new[done]
            kind[di] = np.where(crossed[done], INITIAL, LATERAL)
        keep = ~done
        idx, xi, tau, lc, av = idx[keep], xi_new[keep], tau_new[keep], lc_new[keep], av_new[keep]
        g = g_new[keep] if has_b else np.zeros(idx.size)
    return exit_xi, exit_tau, kind, log_c


def trace(spec, j, x, t, eps, s, h=H_CHAR) -> CharacteristicPath:
    """Backward characteristic of component ``j`` through ``(x, t)`` down to ``tau = s``."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if t < s:
        raise ValueError("t must not lie below the strip floor s")
    pts = [(x, t, 0.0)]

    def keep(idx, xi0, tau0, lc0, xi1, tau1, lc1, dxi):
        pts.append((float(xi1[0]), float(tau1[0]), float(lc1[0])))

    ex, et, kind, _ = march(spec, j, [x], [t], eps, s, h, on_segment=keep)
    arr = np.array(pts)
    if j < spec.m:
        arr = arr[::-1]
    if kind[0] == INITIAL:
        label = "initial-line"
    else:
        label = "lateral-left" if j < spec.m else "lateral-right"
    return CharacteristicPath(j, (float(x), float(t), float(eps)), arr[:, :2].copy(), arr[:, 2].copy(),
                              label, float(ex[0]), float(et[0]), float(s))


# -- curves on all of [0, 1] --------------------------------------------------

def curve(spec, j, x, t, eps, xi_end, h=H_CHAR):
    """Samples ``(xi, tau)`` of ``omega_j(.; x, t, eps)`` from ``xi = x`` to ``xi_end``.

    The curve is not cut at any floor.  The last step is shortened to land on
    ``xi_end`` exactly.  Rows are in integration order (starting at the anchor).
    """
    a = spec.a[j]
    length = abs(xi_end - x)
    nsteps = int(np.ceil(length / h - 1e-12))
    xi = np.empty(nsteps + 1)
    tau = np.empty(nsteps + 1)
    xi[0], tau[0] = x, t
    direction = 1.0 if xi_end >= x else -1.0
    for i in range(nsteps):
        step = min(h, abs(xi_end - xi[i]))
        tau[i + 1] = _rk4(a, np.array(xi[i]), np.array(tau[i]), direction * step, eps)
        xi[i + 1] = xi[i] + direction * step if i < nsteps - 1 else xi_end
    return xi, tau


def _trapz_cum(f, xi):
    """Cumulative trapezoid integral from the first sample (signed by ``xi`` order)."""
    out = np.zeros_like(f)
    out[1:] = np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(xi))
    return out


def weight_c(spec, j, xi, x, t, eps, h=H_CHAR) -> float:
    """``c_j(xi, x, t, eps) = exp int_x^xi (b_jj / a_j) d eta`` along the curve through ``(x, t)``."""
    xs, ts = curve(spec, j, x, t, eps, xi, h)
    g = spec.b_diag[j].value(xs, ts, eps) / spec.a[j].value(xs, ts, eps)
    return float(np.exp(_trapz_cum(g, xs)[-1]))


def weight_d(spec, j, xi, x, t, eps, h=H_CHAR) -> float:
    """``d_j = c_j / a_j`` evaluated at the curve point above ``xi``."""
    xs, ts = curve(spec, j, x, t, eps, xi, h)
    av = spec.a[j].value(xs, ts, eps)
    c = np.exp(_trapz_cum(spec.b_diag[j].value(xs, ts, eps) / av, xs)[-1])
    return float(c / av[-1])


def d_omega(spec, j, xi, x, t, eps, which, h=H_CHAR) -> float:
    """Closed-form partial derivative of ``omega_j(xi; x, t, eps)``.

    ``which`` is ``"x"``, ``"t"`` or ``"eps"``.  With ``g = (d_t a_j)/a_j**2``
    along the curve,

    * ``d_t omega = exp int_xi^x g``,
    * ``d_x omega = -exp(int_xi^x g) / a_j(x, t, eps)``,
    * ``d_eps omega = int_xi^x (d_eps a_j / a_j**2)(eta) exp(int_xi^eta g) d eta``.
    """
    a = spec.a[j]
    xs, ts = curve(spec, j, x, t, eps, xi, h)
    av = a.value(xs, ts, eps)
    g = a.dt(xs, ts, eps) / av**2
    # G[i] = int_x^{xs[i]} g ; hence int_xi^x g = -G[-1]
    G = _trapz_cum(g, xs)
    if which == "t":
        return float(np.exp(-G[-1]))
    if which == "x":
        return float(-np.exp(-G[-1]) / av[0])
    if which == "eps":
        # int_xi^eta g = G(eta) - G(xi)
        integrand = a.deps(xs, ts, eps) / av**2 * np.exp(G - G[-1])
        return float(-_trapz_cum(integrand, xs)[-1])
    raise ValueError(f"which must be 'x', 't' or 'eps', got {which!r}")


# -- exits and intersections ---------------------------------------------------

def exit_point(spec, j, x, t, eps, s, h=H_CHAR):
    """``(abscissa, ordinate, kind)`` of the backward exit of one characteristic."""
    ex, et, kind, _ = march(spec, j, [x], [t], eps, s, h)
    return float(ex[0]), float(et[0]), int(kind[0])


def _curve_on_grid(spec, j, x0, t0, eps, h):
    """Values of ``omega_j(.; x0, t0, eps)`` on the uniform grid ``i*h`` of ``[0, 1]``."""
    K = int(round(1.0 / h))
    grid = np.linspace(0.0, 1.0, K + 1)
    out = np.empty(K + 1)
    i_lo = int(np.floor(x0 / h + 1e-12))
    i_lo = min(max(i_lo, 0), K)
    if abs(grid[i_lo] - x0) < 1e-15:
        out[i_lo] = t0
        start_r, start_l = i_lo, i_lo
    else:
        i_hi = i_lo + 1
        out[i_lo] = curve(spec, j, x0, t0, eps, grid[i_lo], h)[1][-1]
        out[i_hi] = curve(spec, j, x0, t0, eps, grid[i_hi], h)[1][-1]
        start_l, start_r = i_lo, i_hi
    a = spec.a[j]
    for i in range(start_r, K):
        out[i + 1] = _rk4(a, np.array(grid[i]), np.array(out[i]), grid[i + 1] - grid[i], eps)
    for i in range(start_l, 0, -1):
        out[i - 1] = _rk4(a, np.array(grid[i]), np.array(out[i]), grid[i - 1] - grid[i], eps)
    return grid, out


def _omega_from_grid(spec, j, grid, vals, eps, xi):
    i = min(int(np.floor(xi / (grid[1] - grid[0]))), len(grid) - 2)
    return float(_rk4(spec.a[j], np.array(grid[i]), np.array(vals[i]), xi - grid[i], eps))


def _launch_abscissa(spec, k):
    return 0.0 if k < spec.m else 1.0


def intersection_xjk(spec, j, k, x, t, eps, s, h=H_CHAR, eps_j=0.0):
    """Abscissa where the ``j``-curve through ``(x, t)`` meets the ``k``-curve launched at the floor.

    The ``j``-curve is taken at ``eps_j`` (default 0); the ``k``-curve starts
    from ``(0, s)`` when ``k < m`` and from ``(1, s)`` otherwise, at ``eps``.
    Returns ``None`` when ``omega_j - omega_k`` has no sign change on ``[0, 1]``.
    """
    if j == k:
        raise ValueError("intersection needs j != k")
    grid, wj = _curve_on_grid(spec, j, x, t, eps_j, h)
    _, wk = _curve_on_grid(spec, k, _launch_abscissa(spec, k), s, eps, h)
    f = wj - wk
    zero = np.flatnonzero(f == 0.0)
    flips = np.flatnonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0)
    roots = len(zero) + len(flips)
    if roots == 0:
        return None
    if roots > 1:
        raise IntersectionError(f"characteristics {j} and {k} cross {roots} times on [0, 1]")
    if len(zero):
        return float(grid[zero[0]])
    lo, hi = grid[flips[0]], grid[flips[0] + 1]
    flo = f[flips[0]]
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        fm = (_omega_from_grid(spec, j, grid, wj, eps_j, mid)
              - _omega_from_grid(spec, k, grid, wk, eps, mid))
        if fm == 0.0:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def omega(spec, j, xi, x, t, eps, h=H_CHAR) -> float:
    """``omega_j(xi; x, t, eps)``."""
    return float(curve(spec, j, x, t, eps, xi, h)[1][-1])


def d_eps_exit(spec, j, k, xi, x, t, eps, s, h=H_CHAR) -> float:
    """``d/d eps`` of the floor-exit abscissa of the ``k``-curve launched from the ``j``-curve.

    The launch point is ``(xi, omega_j(xi; x, t, 0))``; the ``k``-curve is taken
    at ``eps`` and must leave through the floor ``tau = s`` away from a corner.
    Evaluates ``-a_k(x_k, s, eps) * d_eps omega_k(x_k; xi, tau', eps)``.
    """
    tau1 = omega(spec, j, xi, x, t, 0.0, h)
    xk, tk, kind = exit_point(spec, k, xi, tau1, eps, s, h)
    if kind != INITIAL or xk in (0.0, 1.0):
        raise ValueError("the k-characteristic does not leave through the interior of the floor")
    dw = d_omega(spec, k, xk, xi, tau1, eps, "eps", h)
    return float(-spec.a[k].value(xk, s, eps) * dw)


def d_eps_intersection(spec, j, k, x, t, eps, s, h=H_CHAR) -> float:
    """``d/d eps`` of :func:`intersection_xjk` from the implicit-function identity.

    ``x_jk' * (a_k^eps - a_j)/(a_j a_k^eps) = d_eps omega_k(x_jk; launch, s, eps)``
    with ``a_j`` at ``eps = 0`` and ``a_k^eps`` at ``eps``, both evaluated at the crossing.
    """
    xjk = intersection_xjk(spec, j, k, x, t, eps, s, h)
    if xjk is None:
        raise ValueError("the characteristics do not intersect")
    tau = omega(spec, j, xjk, x, t, 0.0, h)
    aj = float(spec.a[j].value(xjk, tau, 0.0))
    ak = float(spec.a[k].value(xjk, tau, eps))
    if abs(ak - aj) <= 1e-12 * (abs(ak) + abs(aj)):
        raise SingularityError(f"a_{k} - a_{j} vanishes at the crossing x_jk={xjk:.6g}")
    dw = d_omega(spec, k, xjk, _launch_abscissa(spec, k), s, eps, "eps", h)
    return float(dw * aj * ak / (ak - aj))
