"""Exponential dichotomies of period maps and their robustness under perturbation.

In the autonomous and ``2d``-periodic cases the discrete dichotomy of the
sequence ``T_n = U(t0 + 2d(n+1), t0 + 2dn)`` reduces to hyperbolicity of one
matrix ``T``: its eigenvalues must stay away from the unit circle.  The
dichotomy projection is the spectral projection of ``T`` onto the invariant
subspace of the eigenvalues outside the unit circle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .evolution import EvolutionMatrix, evolution_matrix, inf_norm, smoothing_time

GAP_TOL = 0.05
ZERO_RADIUS = 1e-10
FIT_POWERS = 10
SPLIT_TOL = 1e-9
COND_LIMIT = 1e12
VERIFY_TOL = 0.05


class DichotomyUnsupported(ValueError):
    """The period maps differ, so the single-matrix criterion does not apply."""


class ConditioningError(ArithmeticError):
    """Inversion on the unstable subspace is too ill-conditioned to trust."""


@dataclass
class DichotomyEstimate:
    """Spectral splitting of a period map ``T`` anchored at ``t0``.

    Attributes
    ----------
    P : ndarray
        Projection onto the invariant subspace of eigenvalues with ``|lambda| > 1``.
    rank : int
    beta : float
        ``min |log|lambda|| / period_length`` over both sides of the split.
    M : float
        Smallest constant bounding ``||T^n (I-P)||`` and ``||(T|range P)^{-n}||``
        by ``M exp(-beta * n * period_length)`` for ``n = 0..10``.
    gap : float
        ``min |log|lambda||``; the margin of the spectrum at the unit circle.
    """

    P: np.ndarray
    rank: int
    beta: float
    M: float
    gap: float
    period_length: float
    eigenvalues: np.ndarray
    basis: np.ndarray
    t0: float = 0.0
    N: int | None = None
    meta: dict = field(default_factory=dict)

    def lines(self) -> list[str]:
        return [f"rank={self.rank}", f"beta={self.beta:.17g}", f"M={self.M:.17g}",
                f"gap={self.gap:.17g}", f"periodLength={self.period_length:.17g}",
                f"spectralRadius={float(np.abs(self.eigenvalues).max()):.17g}",
                f"idempotencyDefect={inf_norm(self.P @ self.P - self.P):.17g}"]


def monodromy_sequence(spec, eps, t0, count, N, h=None, d=None) -> list[EvolutionMatrix]:
    """``T_n = U^eps(t0 + 2d(n+1), t0 + 2dn)`` for ``n = 0..count-1``.

    Autonomous scenarios compute the map once; the copies are identical.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if d is None:
        d = smoothing_time(spec, eps, t0)[2]
    if spec.autonomous:
        T = evolution_matrix(spec, eps, t0, t0 + 2 * d, N, h)
        return [EvolutionMatrix(T.matrix, T.spec_name, T.eps, t0 + 2 * d * n, t0 + 2 * d * (n + 1), N)
                for n in range(count)]
    return [evolution_matrix(spec, eps, t0 + 2 * d * n, t0 + 2 * d * (n + 1), N, h) for n in range(count)]


def _as_matrix(T):
    return T.matrix if isinstance(T, EvolutionMatrix) else np.asarray(T, dtype=float)


def _spectral_split(T):
    """Ordered real Schur form with ``|lambda| > 1`` first; returns ``(P, Q, rank, eigenvalues)``."""
    dim = T.shape[0]
    S, Q, rank = la.schur(T, output="real", sort="ouc")
    eig = la.eigvals(T)
    if rank == 0:
        return np.zeros_like(T), Q, 0, eig
    if rank == dim:
        return np.eye(dim), Q, dim, eig
    T11, T12, T22 = S[:rank, :rank], S[:rank, rank:], S[rank:, rank:]
    # T11 X - X T22 = T12 decouples the two blocks
    X = la.solve_sylvester(T11, -T22, T12)
    block = np.zeros_like(T)
    block[:rank, :rank] = np.eye(rank)
    block[:rank, rank:] = X
    return Q @ block @ Q.T, Q, rank, eig


def _fit_M(T, P, basis, rank, beta, period_length, powers=FIT_POWERS):
    dim = T.shape[0]
    stable = np.eye(dim) - P
    M = 1.0
    Tn_s = stable.copy()
    if rank:
        V = basis[:, :rank]
        Tu = V.T @ T @ V
        Tu_inv = np.linalg.inv(Tu)
        inv_n = np.eye(rank)
    for n in range(powers + 1):
        decay = np.exp(-beta * n * period_length)
        M = max(M, inf_norm(Tn_s) / decay)
        if rank:
            M = max(M, inf_norm(V @ inv_n @ V.T @ P) / decay)
            inv_n = Tu_inv @ inv_n
        Tn_s = T @ Tn_s
    return M


def detect_dichotomy(T, split_tol=SPLIT_TOL, gap_tol=GAP_TOL, period_length=None,
                     segments=None) -> DichotomyEstimate | None:
    """Spectral dichotomy test of a period map.

    Parameters
    ----------
    T : EvolutionMatrix, ndarray or list of them
        A list is accepted when all entries agree within ``split_tol``
        (relative, sup norm); the first is then used.
    period_length : float, optional
        Length ``2d`` of the period; read from ``T`` when it is an EvolutionMatrix.
    segments : list of ndarray, optional
        Maps over consecutive equal parts of the period (see :func:`segment_maps`)
        whose product is ``T``.  When given, ``M`` is fitted at every segment
        time over ten periods instead of at whole periods only.

    Returns
    -------
    DichotomyEstimate or None
        None when some ``|log|lambda|| < gap_tol``.
    """
    if isinstance(T, (list, tuple)):
        mats = [_as_matrix(x) for x in T]
        ref = mats[0]
        scale = max(inf_norm(ref), 1e-300)
        for i, other in enumerate(mats[1:], 1):
            if inf_norm(other - ref) > split_tol * scale and inf_norm(other - ref) > split_tol:
                raise DichotomyUnsupported(
                    f"dichotomy.detect_dichotomy: period map {i} differs from map 0; "
                    "only constant sequences are supported")
        T = T[0]
    if period_length is None:
        if not isinstance(T, EvolutionMatrix):
            raise ValueError("period_length is required for a bare matrix")
        period_length = T.t - T.s
    t0 = T.s if isinstance(T, EvolutionMatrix) else 0.0
    N = T.N if isinstance(T, EvolutionMatrix) else None
    A = _as_matrix(T)
    if not np.all(np.isfinite(A)):
        raise ArithmeticError("dichotomy.detect_dichotomy: non-finite period map")
    P, Q, rank, eig = _spectral_split(A)
    if not np.all(np.isfinite(eig)):
        raise ArithmeticError("dichotomy.detect_dichotomy: non-finite eigenvalues")
    logs = np.log(np.maximum(np.abs(eig), ZERO_RADIUS))
    gap = float(np.min(np.abs(logs)))
    if gap < gap_tol:
        return None
    rates = [r for r in (-logs[logs < 0].max() if (logs < 0).any() else None,
                         logs[logs > 0].min() if (logs > 0).any() else None) if r is not None]
    beta = float(min(rates)) / period_length
    if segments is None:
        M = _fit_M(A, P, Q, rank, beta, period_length)
    else:
        phases = _phase_splits(segments, rank)
        M = 1.0
        for _, _, _, ratio_s, ratio_u in _sampled_pairs(segments, phases, beta, period_length, FIT_POWERS):
            M = max(M, ratio_s, ratio_u)
    return DichotomyEstimate(P, rank, beta, M, gap, float(period_length), eig, Q, float(t0), N)


# -- verification of the four properties ------------------------------------

@dataclass
class DichotomyVerification:
    """Worst relative defects of the four dichotomy properties over sampled times.

    ``commutation`` is ``||U(t,s)P(s) - P(t)U(t,s)|| / ||U(t,s)||``;
    ``invertibility`` measures how far ``U(t,s) range P(s)`` leaves
    ``range P(t)``; ``stable_bound`` and ``unstable_bound`` are the relative
    excess of the observed norms over ``M exp(-beta (t-s))``.
    """

    commutation: float
    invertibility: float
    stable_bound: float
    unstable_bound: float
    times: np.ndarray
    condition: float

    @property
    def defects(self) -> dict:
        return {"i": self.commutation, "ii": self.invertibility,
                "iii": self.stable_bound, "iv": self.unstable_bound}

    def passed(self, tol=VERIFY_TOL) -> bool:
        return all(v <= tol for v in self.defects.values())

    def lines(self) -> list[str]:
        return [f"defect_{k}={v:.17g}" for k, v in self.defects.items()] + [
            f"subspaceCondition={self.condition:.17g}"]


def _cyclic(maps, start, count):
    """Product ``maps[start+count-1] ... maps[start]`` with cyclic indices."""
    out = np.eye(maps[0].shape[0])
    for i in range(start, start + count):
        out = maps[i % len(maps)] @ out
    return out


def segment_maps(spec, eps, t0, period_length, N, parts=4, h=None) -> list[np.ndarray]:
    """``U(t0 + (q+1)L/parts, t0 + qL/parts)`` for ``q = 0..parts-1``."""
    q = period_length / parts
    return [evolution_matrix(spec, eps, t0 + i * q, t0 + (i + 1) * q, N, h).matrix for i in range(parts)]


def _phase_splits(maps, rank):
    """Spectral projection and unstable basis of the period map anchored at every segment time."""
    out = []
    for q in range(len(maps)):
        P, Q, r, _ = _spectral_split(_cyclic(maps, q, len(maps)))
        if r != rank:
            raise ArithmeticError(f"dichotomy: rank {r} at phase {q} differs from {rank}")
        out.append((P, Q[:, :rank]))
    return out


def _sampled_pairs(maps, phases, beta, period_length, periods):
    """Yield ``(U, j, i, stable ratio, unstable ratio)`` for segment times ``t_j <= t_i``.

    ``t_j`` runs over one period, ``t_i - t_j`` up to ``periods`` periods.  The
    ratios divide ``||U(I - P_j)||`` and the norm of the inverse of ``U`` on
    ``range P_i`` by ``exp(-beta (t_i - t_j))``.
    """
    parts = len(maps)
    dim = maps[0].shape[0]
    eye = np.eye(dim)
    dt = period_length / parts
    for j in range(parts):
        Pj, Vj = phases[j]
        U = eye.copy()
        for i in range(j, j + parts * periods + 1):
            if i > j:
                U = maps[(i - 1) % parts] @ U
            Pi, Vi = phases[i % parts]
            decay = np.exp(-beta * (i - j) * dt)
            ratio_s = inf_norm(U @ (eye - Pj)) / decay
            ratio_u = 0.0
            if Vj.shape[1]:
                W = U @ Vj
                C = Vi.T @ W
                ratio_u = inf_norm(Vj @ np.linalg.solve(C, Vi.T @ Pi)) / decay
            yield U, j, i, ratio_s, ratio_u


def verify_dichotomy(spec, eps, est: DichotomyEstimate, horizon_periods=2, N=None, h=None,
                     maps=None, parts=8) -> DichotomyVerification:
    """Check properties (i)-(iv) of the dichotomy at ``parts`` sample times per period.

    ``P(t)`` at a sample time is the spectral projection of the period map
    anchored there, which equals the conjugate ``U(t,t0) P U(t,t0)^{-1}`` on
    the unstable subspace.  Property (ii) inverts ``U(t,s)`` on the
    ``rank``-dimensional subspace by least squares.  ``maps`` may pass
    precomputed :func:`segment_maps`.
    """
    N = N or est.N
    L = est.period_length
    if maps is None:
        maps = segment_maps(spec, eps, est.t0, L, N, parts, h)
    phases = _phase_splits(maps, est.rank)
    eye = np.eye(maps[0].shape[0])
    worst = dict(i=0.0, ii=0.0, iii=0.0, iv=0.0)
    cond = 1.0
    for U, j, i, ratio_s, ratio_u in _sampled_pairs(maps, phases, est.beta, L, horizon_periods):
        Pj, Vj = phases[j]
        Pi, Vi = phases[i % len(maps)]
        worst["i"] = max(worst["i"], inf_norm(U @ Pj - Pi @ U) / max(inf_norm(U), 1e-300))
        worst["iii"] = max(worst["iii"], ratio_s / est.M - 1.0)
        if est.rank:
            W = U @ Vj
            c = np.linalg.cond(W)
            cond = max(cond, c)
            if not c < COND_LIMIT:
                raise ConditioningError(
                    f"dichotomy.verify_dichotomy: subspace condition {c:.3g} exceeds {COND_LIMIT:g}")
            coef, *_ = np.linalg.lstsq(Vi, W, rcond=None)
            worst["ii"] = max(worst["ii"], inf_norm(W - Vi @ coef) / max(inf_norm(W), 1e-300))
            worst["iv"] = max(worst["iv"], ratio_u / est.M - 1.0)
    times = est.t0 + np.arange(len(maps) * horizon_periods + 1) * L / len(maps)
    return DichotomyVerification(worst["i"], worst["ii"], max(worst["iii"], 0.0), max(worst["iv"], 0.0),
                                 times, cond)


# -- robustness ----------------------------------------------------------------

def perturbation_gap(spec, eps, s, N, h=None, d=None, baseline=None) -> float:
    """``||U^0(s+2d, s) - U^eps(s+2d, s)||`` at a shared resolution."""
    if eps == 0:
        return 0.0
    if d is None:
        d = smoothing_time(spec, 0.0, s)[2]
    U0 = baseline if baseline is not None else evolution_matrix(spec, 0.0, s, s + 2 * d, N, h).matrix
    Ue = evolution_matrix(spec, eps, s, s + 2 * d, N, h).matrix
    return inf_norm(U0 - Ue)


class PreconditionError(ValueError):
    """The unperturbed system has no detectable dichotomy."""


@dataclass
class SweepRow:
    eps: float
    gap: float
    found: bool
    rank: int | None
    beta: float | None
    M: float | None


@dataclass
class SweepTable:
    rows: list
    baseline: DichotomyEstimate

    def threshold_index(self) -> int | None:
        """Smallest index ``k*`` such that every row from ``k*`` on keeps the baseline rank.

        Rows are ordered by decreasing ``eps``; None if even the last row fails.
        """
        ok = [r.found and r.rank == self.baseline.rank for r in self.rows]
        k = len(ok)
        while k > 0 and ok[k - 1]:
            k -= 1
        return k if k < len(ok) else None

    def slope(self) -> float:
        """Least-squares slope of ``log gap`` against ``log eps`` over rows with ``eps > 0``."""
        pts = [(np.log(r.eps), np.log(r.gap)) for r in self.rows if r.eps > 0 and r.gap > 0]
        if len(pts) < 2:
            return float("nan")
        x, y = np.array(pts).T
        return float(np.polyfit(x, y, 1)[0])

    def to_csv(self) -> str:
        out = ["eps,gap,found,rank,beta,M"]
        for r in self.rows:
            out.append(f"{r.eps:.17g},{r.gap:.17g},{str(r.found).lower()},"
                       f"{_optional(r.rank)},{_optional(r.beta)},{_optional(r.M)}")
        return "\n".join(out) + "\n"


def _optional(value) -> str:
    if value is None:
        return ""
    return str(value) if isinstance(value, int) else f"{value:.17g}"


def auto_eps_list(spec, levels=7) -> list[float]:
    """``eps0 * 2**-k`` for ``k = 0..levels-1``."""
    return [spec.eps0 * 2.0**-k for k in range(levels)]


def robustness_sweep(spec, eps_list, s, N, h=None, gap_tol=GAP_TOL) -> SweepTable:
    """Perturbation gap and dichotomy verdict for each ``eps``; rows sorted by decreasing ``eps``."""
    d = smoothing_time(spec, 0.0, s)[2]
    T0 = evolution_matrix(spec, 0.0, s, s + 2 * d, N, h)
    base = detect_dichotomy(T0, gap_tol=gap_tol)
    if base is None:
        raise PreconditionError(f"dichotomy.robustness_sweep: no dichotomy for {spec.name!r} at eps=0")
    rows = []
    for eps in sorted(set(float(e) for e in eps_list), reverse=True):
        if eps == 0:
            rows.append(SweepRow(0.0, 0.0, True, base.rank, base.beta, base.M))
            continue
        Te = evolution_matrix(spec, eps, s, s + 2 * d, N, h)
        est = detect_dichotomy(Te, gap_tol=gap_tol)
        gap = inf_norm(T0.matrix - Te.matrix)
        rows.append(SweepRow(eps, gap, est is not None, est.rank if est else None,
                             est.beta if est else None, est.M if est else None))
    return SweepTable(rows, base)
