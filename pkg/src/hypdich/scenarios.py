"""Problem instances: coefficient data, structural validation and the catalog.

A scenario describes the linear system

    u_t + a(x,t,eps) u_x + b(x,t,eps) u = 0,   0 < x < 1,

with ``a = diag(a_1..a_n)``, the first ``m`` speeds positive and the rest
negative, and the nonlocal boundary conditions

    u_j(0,t) = sum_k p_jk(t) u_k(e_k, t),   j < m
    u_j(1,t) = sum_k q_jk(t) u_k(e_k, t),   j >= m

where ``e_k`` is the outflow edge of component ``k`` (1 for ``k < m``, 0
otherwise).  Component indices are 0-based throughout the package.

Off-diagonal entries of ``b`` are never given directly.  They are defined as
``b_jk = gamma_jk * (a_k - a_j)`` so the factorization required of the
coupling holds exactly.  The companion factor ``beta_jk`` with
``b_jk(.,0) = beta_jk(.,eps) * (a_k(.,eps) - a_j(.,0))`` is derived in closed
form unless a scenario file supplies it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

from .series import ZERO, Coefficient, CoefficientSeries, Term

CATALOG_NAMES = ("decoupled-extinction", "feedback-2x2", "periodic-dichotomy", "kinetics-2x2")

_TOP_KEYS = {"name", "n", "m", "eps0", "a", "b", "gamma", "beta", "p", "q", "meta"}
_REQUIRED_KEYS = {"n", "m", "eps0", "a"}
_TERM_KEYS = {"cx", "ct", "kind", "coeff0", "coeffEps", "period"}

FACTOR_TOL = 1e-12


class ScenarioError(ValueError):
    """Malformed scenario data; the message names the offending field."""


class UnknownScenarioError(LookupError):
    pass


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    """Immutable coefficient description of one boundary value problem.

    Parameters
    ----------
    n, m : int
        Number of components and number of positive speeds.
    eps0 : float
        Upper end of the perturbation range ``[0, eps0]``.
    a : tuple of CoefficientSeries
        Diagonal speeds ``a_j(x,t,eps)``.
    b_diag : tuple of CoefficientSeries
        Diagonal zero-order coefficients ``b_jj``.
    gamma : tuple of tuples
        ``gamma[j][k]`` for ``j != k`` (``None`` on the diagonal).
    p, q : tuple of tuples of CoefficientSeries
        Boundary coefficients, ``m x n`` and ``(n-m) x n``; functions of ``t`` only.
    beta : tuple of tuples or None
        Optional user-supplied factors; derived in closed form when omitted.
    """

    n: int
    m: int
    eps0: float
    a: tuple
    b_diag: tuple
    gamma: tuple
    p: tuple
    q: tuple
    beta: tuple | None = None
    name: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n, m = self.n, self.m
        if not (isinstance(n, int) and n >= 1):
            raise ScenarioError(f"n: expected integer >= 1, got {n!r}")
        if not (isinstance(m, int) and 0 <= m <= n):
            raise ScenarioError(f"m: expected integer in [0, n], got {m!r}")
        if not self.eps0 > 0:
            raise ScenarioError(f"eps0: expected positive real, got {self.eps0!r}")
        _check_len("a", self.a, n)
        _check_len("b", self.b_diag, n)
        _check_matrix("gamma", self.gamma, n, n, diagonal_none=True)
        _check_matrix("p", self.p, m, n)
        _check_matrix("q", self.q, n - m, n)
        if self.beta is not None:
            _check_matrix("beta", self.beta, n, n, diagonal_none=True)
        for name, rows in (("p", self.p), ("q", self.q)):
            for r, row in enumerate(rows):
                for k, c in enumerate(row):
                    if c.depends_on_x() or c.depends_on_eps():
                        raise ScenarioError(f"{name}[{r}][{k}]: boundary coefficients depend on t only")

    # -- coefficient access -------------------------------------------------

    def b(self, j: int, k: int) -> Coefficient:
        """Zero-order coefficient ``b_jk``; off-diagonal entries are ``gamma_jk (a_k - a_j)``."""
        if j == k:
            return self.b_diag[j]
        return self._b_off[j][k]

    @cached_property
    def _b_off(self):
        out = []
        for j in range(self.n):
            row = []
            for k in range(self.n):
                g = self.gamma[j][k]
                row.append(None if j == k else (ZERO if g.is_zero() else g * (self.a[k] - self.a[j])))
            out.append(row)
        return out

    def beta_coef(self, j: int, k: int) -> Coefficient:
        """Factor ``beta_jk`` (user-supplied or the closed-form quotient)."""
        if j == k:
            raise ValueError("beta is defined off the diagonal only")
        if self.beta is not None:
            return self.beta[j][k]
        g = self.gamma[j][k]
        if g.is_zero():
            return ZERO
        return self.b(j, k).at_zero_eps() / (self.a[k] - self.a[j].at_zero_eps())

    def boundary_coef(self, j: int, k: int) -> CoefficientSeries:
        """Row ``j`` of the boundary operator: ``p_jk`` for ``j < m``, ``q_jk`` otherwise."""
        return self.p[j][k] if j < self.m else self.q[j - self.m][k]

    def has_coupling(self) -> bool:
        return any(not self.gamma[j][k].is_zero() for j in range(self.n) for k in range(self.n) if j != k)

    @cached_property
    def autonomous(self) -> bool:
        """True when no coefficient depends on ``t``."""
        return not any(c.depends_on_t() for c in self._all_series())

    @cached_property
    def period(self) -> float | None:
        """Common period of the trigonometric time dependence, if any."""
        periods = {c.period for c in self._all_series() if c.period is not None}
        if len(periods) > 1:
            raise ScenarioError(f"coefficients mix periods {sorted(periods)}")
        return periods.pop() if periods else None

    @cached_property
    def polynomial_in_t(self) -> bool:
        return any(tm.kind == "poly" and tm.ct > 0 for c in self._all_series() for tm in c.terms)

    def inflow_edge(self, j: int) -> float:
        """Abscissa where component ``j`` enters the strip (0 for positive speed)."""
        return 0.0 if j < self.m else 1.0

    def outflow_edge(self, j: int) -> float:
        return 1.0 if j < self.m else 0.0

    def _all_series(self):
        yield from self.a
        yield from self.b_diag
        for row in self.gamma:
            yield from (c for c in row if c is not None)
        for row in self.p:
            yield from row
        for row in self.q:
            yield from row
        if self.beta is not None:
            for row in self.beta:
                yield from (c for c in row if c is not None and isinstance(c, CoefficientSeries))

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        def mat(rows):
            return [[None if c is None else c.to_list() for c in row] for row in rows]

        n = self.n
        b = [[self.b_diag[j].to_list() if j == k else None for k in range(n)] for j in range(n)]
        out = {"name": self.name, "n": self.n, "m": self.m, "eps0": self.eps0,
               "a": [c.to_list() for c in self.a], "b": b, "gamma": mat(self.gamma),
               "p": mat(self.p), "q": mat(self.q)}
        if self.beta is not None:
            out["beta"] = mat(self.beta)
        if self.meta:
            out["meta"] = self.meta
        return out


def _check_len(name, seq, n):
    if len(seq) != n:
        raise ScenarioError(f"{name}: expected {n} entries, got {len(seq)}")


def _check_matrix(name, rows, nr, nc, diagonal_none=False):
    if len(rows) != nr:
        raise ScenarioError(f"{name}: expected {nr} rows, got {len(rows)}")
    for r, row in enumerate(rows):
        if len(row) != nc:
            raise ScenarioError(f"{name}[{r}]: expected {nc} columns, got {len(row)}")
        for k, c in enumerate(row):
            if diagonal_none and r == k:
                continue
            if c is None:
                raise ScenarioError(f"{name}[{r}][{k}]: missing entry")


# -- parsing ---------------------------------------------------------------

def _parse_series(obj, where: str) -> CoefficientSeries:
    if obj is None:
        return CoefficientSeries()
    if isinstance(obj, (int, float)):
        return CoefficientSeries.constant(float(obj))
    if not isinstance(obj, list):
        raise ScenarioError(f"{where}: expected a list of terms")
    terms = []
    for i, t in enumerate(obj):
        if not isinstance(t, dict):
            raise ScenarioError(f"{where}[{i}]: expected a term object")
        unknown = set(t) - _TERM_KEYS
        if unknown:
            raise ScenarioError(f"{where}[{i}]: unknown keys {sorted(unknown)}")
        try:
            terms.append(Term(int(t.get("cx", 0)), int(t.get("ct", 0)), t.get("kind", "poly"),
                              float(t.get("coeff0", 0.0)), float(t.get("coeffEps", 0.0)),
                              None if t.get("period") is None else float(t["period"])))
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"{where}[{i}]: {exc}") from None
    return CoefficientSeries(terms)


def _parse_matrix(obj, name, nr, nc, diagonal_none=False):
    if obj is None:
        return tuple(tuple(None if diagonal_none and r == k else CoefficientSeries()
                           for k in range(nc)) for r in range(nr))
    if not isinstance(obj, list) or len(obj) != nr:
        raise ScenarioError(f"{name}: expected {nr} rows")
    rows = []
    for r, row in enumerate(obj):
        if not isinstance(row, list) or len(row) != nc:
            raise ScenarioError(f"{name}[{r}]: expected {nc} columns")
        out = []
        for k, c in enumerate(row):
            if diagonal_none and r == k:
                if c not in (None, []):
                    raise ScenarioError(f"{name}[{r}][{k}]: diagonal entry must be empty")
                out.append(None)
            else:
                out.append(_parse_series(c, f"{name}[{r}][{k}]"))
        rows.append(tuple(out))
    return tuple(rows)


def spec_from_dict(data: dict) -> ScenarioSpec:
    """Build a :class:`ScenarioSpec` from the JSON scenario schema (see README)."""
    if not isinstance(data, dict):
        raise ScenarioError("scenario: expected an object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ScenarioError(f"scenario: unknown keys {sorted(unknown)}")
    missing = _REQUIRED_KEYS - set(data)
    if missing:
        raise ScenarioError(f"scenario: missing keys {sorted(missing)}")
    n, m = data["n"], data["m"]
    if not isinstance(n, int) or n < 1:
        raise ScenarioError(f"n: expected integer >= 1, got {n!r}")
    if not isinstance(m, int) or not 0 <= m <= n:
        raise ScenarioError(f"m: expected integer in [0, n], got {m!r}")
    a = data["a"]
    if not isinstance(a, list) or len(a) != n:
        raise ScenarioError(f"a: expected {n} series")
    a = tuple(_parse_series(c, f"a[{j}]") for j, c in enumerate(a))

    b_raw = data.get("b")
    if b_raw is None:
        b_diag = tuple(CoefficientSeries() for _ in range(n))
    else:
        if not isinstance(b_raw, list) or len(b_raw) != n:
            raise ScenarioError(f"b: expected {n} rows")
        b_diag = []
        for j, row in enumerate(b_raw):
            if not isinstance(row, list) or len(row) != n:
                raise ScenarioError(f"b[{j}]: expected {n} columns")
            for k, c in enumerate(row):
                if k != j and c not in (None, []):
                    raise ScenarioError(
                        f"b[{j}][{k}]: off-diagonal b is defined through gamma, direct entries are rejected")
            b_diag.append(_parse_series(row[j], f"b[{j}][{j}]"))
        b_diag = tuple(b_diag)

    return ScenarioSpec(
        n=n, m=m, eps0=float(data["eps0"]), a=a, b_diag=b_diag,
        gamma=_parse_matrix(data.get("gamma"), "gamma", n, n, diagonal_none=True),
        p=_parse_matrix(data.get("p"), "p", m, n),
        q=_parse_matrix(data.get("q"), "q", n - m, n),
        beta=None if data.get("beta") is None else _parse_matrix(data["beta"], "beta", n, n, True),
        name=str(data.get("name", "custom")),
        meta=dict(data.get("meta", {})),
    )


def load_scenario(path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: not valid JSON ({exc})") from None
    return spec_from_dict(data)


def dump_scenario(spec: ScenarioSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2) + "\n", encoding="utf-8")


# -- catalog ----------------------------------------------------------------

def _catalog_data() -> dict:
    text = resources.files("hypdich").joinpath("data/catalog.json").read_text(encoding="utf-8")
    return json.loads(text)


def catalog(name: str) -> ScenarioSpec:
    """Return a validated catalog scenario by name.

    Raises
    ------
    UnknownScenarioError
        If ``name`` is not one of :data:`CATALOG_NAMES`.
    """
    data = _catalog_data()
    if name not in data:
        raise UnknownScenarioError(f"unknown scenario {name!r}; choose from {', '.join(CATALOG_NAMES)}")
    spec = spec_from_dict(data[name])
    report = validate(spec)
    if not report.passed:
        raise ScenarioError(f"catalog entry {name!r} fails validation: {report.failures()}")
    return spec


def resolve_scenario(ref: str) -> ScenarioSpec:
    """Catalog name or path to a scenario file."""
    if ref in CATALOG_NAMES:
        return catalog(ref)
    p = Path(ref)
    if p.suffix == ".json" and p.exists():
        return load_scenario(p)
    raise UnknownScenarioError(f"unknown scenario {ref!r}: neither a catalog name nor a scenario file")


# -- validation ---------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    value: float
    detail: str = ""


@dataclass
class ValidationReport:
    """Per-assumption verdicts with the extremal sampled values."""

    checks: list
    grid: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def get(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def lines(self) -> list[str]:
        out = [f"{k}={v}" for k, v in self.grid.items()]
        out += [f"{c.name}={'pass' if c.passed else 'FAIL'} value={c.value:.17g}" for c in self.checks]
        out.append(f"overall={'pass' if self.passed else 'FAIL'}")
        return out


def time_window(spec: ScenarioSpec) -> tuple[float, float]:
    """Time window on which sup/inf bounds are sampled (one period when periodic)."""
    return (0.0, spec.period) if spec.period is not None else (0.0, 1.0)


def sample_points(spec: ScenarioSpec, density: int = 10, eps_samples: int = 3):
    t0, t1 = time_window(spec)
    x = np.linspace(0.0, 1.0, density)
    t = np.linspace(t0, t1, density)
    eps = np.linspace(0.0, spec.eps0, eps_samples)
    X, T = np.meshgrid(x, t, indexing="ij")
    return X, T, eps


def validate(spec: ScenarioSpec, sample_density: int = 10) -> ValidationReport:
    """Check the structural assumptions on a uniform sample grid.

    The grid is ``sample_density`` points in ``x`` on ``[0, 1]``, as many in
    ``t`` over :func:`time_window`, and ``eps`` in ``{0, eps0/2, eps0}``.
    """
    if sample_density < 2:
        raise ValueError("sample_density must be >= 2")
    X, T, eps_list = sample_points(spec, sample_density)
    n, m = spec.n, spec.m
    checks = []

    def over_eps(fn):
        return np.stack([np.asarray(fn(e), dtype=float) * np.ones_like(X) for e in eps_list])

    for j in range(n):
        aj = over_eps(lambda e: spec.a[j].value(X, T, e))
        if j < m:
            checks.append(Check(f"sign[{j}]", bool(aj.min() > 0), float(aj.min()), "a_j > 0"))
        else:
            checks.append(Check(f"sign[{j}]", bool(aj.max() < 0), float(aj.max()), "a_j < 0"))
        inf_abs = float(np.abs(aj).min())
        checks.append(Check(f"minSpeed[{j}]", inf_abs > 0, inf_abs))
        sup = max(float(np.abs(over_eps(lambda e, f=f: getattr(spec.a[j], f)(X, T, e))).max())
                  for f in ("value", "dx", "dt", "deps"))
        checks.append(Check(f"speedBounds[{j}]", bool(np.isfinite(sup)), sup))

    sup5 = 0.0
    for j in range(n):
        for k in range(n):
            bjk = spec.b(j, k)
            for f in ("value", "deps", "dt"):
                sup5 = max(sup5, float(np.abs(over_eps(lambda e: getattr(bjk, f)(X, T, e))).max()))
    for j in range(n):
        for k in range(n):
            sup5 = max(sup5, float(np.abs(spec.boundary_coef(j, k).value(0.0, T)).max()))
    checks.append(Check("coefficientBounds", bool(np.isfinite(sup5)), sup5))

    worst_b0 = worst_b = 0.0
    sup4 = 0.0
    for j in range(n):
        for k in range(n):
            if j == k:
                continue
            g, bjk, beta = spec.gamma[j][k], spec.b(j, k), spec.beta_coef(j, k)
            ak, aj = spec.a[k], spec.a[j]
            with np.errstate(divide="ignore", invalid="ignore"):
                for e in eps_list:
                    r0 = np.abs(bjk.value(X, T, 0.0) - beta.value(X, T, e) * (ak.value(X, T, e) - aj.value(X, T, 0.0)))
                    r1 = np.abs(bjk.value(X, T, e) - g.value(X, T, e) * (ak.value(X, T, e) - aj.value(X, T, e)))
                    worst_b0 = max(worst_b0, float(np.nan_to_num(r0, nan=np.inf).max()))
                    worst_b = max(worst_b, float(r1.max()))
                    for c in (beta, g):
                        for f in ("dx", "dt"):
                            v = np.abs(getattr(c, f)(X, T, e))
                            sup4 = max(sup4, float(np.nan_to_num(v, nan=np.inf).max()))
    checks.append(Check("factorization:beta", worst_b0 <= FACTOR_TOL, worst_b0, "b(.,0) = beta (a_k^eps - a_j^0)"))
    checks.append(Check("factorization:gamma", worst_b <= FACTOR_TOL, worst_b, "b(.,eps) = gamma (a_k^eps - a_j^eps)"))
    checks.append(Check("factorBounds", bool(np.isfinite(sup4)), sup4))

    t0, t1 = time_window(spec)
    grid = {"density": sample_density, "x_range": "[0, 1]", "t_range": f"[{t0:g}, {t1:g}]",
            "eps_samples": ",".join(f"{e:g}" for e in eps_list)}
    return ValidationReport(checks, grid)
