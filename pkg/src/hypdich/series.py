"""Closed-form coefficient functions of ``(x, t, eps)``.

Every coefficient of a scenario is a finite sum of separable terms
``coeff(eps) * x**cx * psi(t)`` with ``coeff(eps) = coeff0 + eps * coeff_eps``
and ``psi`` a power of ``t`` or a cosine/sine harmonic of a given period.
Evaluation and the three first partial derivatives are exact.

Derived coefficients (products, differences and quotients of series, or a
series frozen at ``eps = 0``) share the same small interface::

    value(x, t, eps), dx(x, t, eps), dt(x, t, eps), deps(x, t, eps)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

KINDS = ("poly", "cos", "sin")


@dataclass(frozen=True)
class Term:
    """One separable term ``(coeff0 + eps*coeff_eps) * x**cx * psi_ct(t)``."""

    cx: int
    ct: int
    kind: str = "poly"
    coeff0: float = 0.0
    coeff_eps: float = 0.0
    period: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"term kind must be one of {KINDS}, got {self.kind!r}")
        if int(self.cx) != self.cx or self.cx < 0 or int(self.ct) != self.ct or self.ct < 0:
            raise ValueError("term exponents cx, ct must be non-negative integers")
        if self.kind != "poly" and (self.period is None or not self.period > 0):
            raise ValueError(f"{self.kind} term needs a positive period")

    def _psi(self, t):
        if self.kind == "poly":
            return t**self.ct if self.ct else np.ones_like(t)
        w = 2.0 * np.pi * self.ct / self.period
        return np.cos(w * t) if self.kind == "cos" else np.sin(w * t)

    def _dpsi(self, t):
        if self.kind == "poly":
            return self.ct * t ** (self.ct - 1) if self.ct else np.zeros_like(t)
        w = 2.0 * np.pi * self.ct / self.period
        return -w * np.sin(w * t) if self.kind == "cos" else w * np.cos(w * t)

    def _phi(self, x):
        return x**self.cx if self.cx else np.ones_like(x)

    def _dphi(self, x):
        return self.cx * x ** (self.cx - 1) if self.cx else np.zeros_like(x)

    def to_dict(self) -> dict:
        out = {"cx": self.cx, "ct": self.ct, "kind": self.kind,
               "coeff0": self.coeff0, "coeffEps": self.coeff_eps}
        if self.period is not None:
            out["period"] = self.period
        return out


def _scalar_x(tm: Term, x: float, derivative: bool) -> float:
    if derivative:
        return tm.cx * x ** (tm.cx - 1) if tm.cx else 0.0
    return x**tm.cx if tm.cx else 1.0


def _scalar_t(tm: Term, t: float, derivative: bool) -> float:
    if tm.kind == "poly":
        if derivative:
            return tm.ct * t ** (tm.ct - 1) if tm.ct else 0.0
        return t**tm.ct if tm.ct else 1.0
    w = 2.0 * math.pi * tm.ct / tm.period
    if tm.kind == "cos":
        return -w * math.sin(w * t) if derivative else math.cos(w * t)
    return w * math.cos(w * t) if derivative else math.sin(w * t)


def _broadcast(x, t):
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    return np.broadcast_arrays(x, t)


class Coefficient:
    """Base class: arithmetic helpers shared by series and derived coefficients."""

    def __add__(self, other):
        return _Sum(self, other, 1.0)

    def __sub__(self, other):
        return _Sum(self, other, -1.0)

    def __mul__(self, other):
        return _Product(self, other)

    def __truediv__(self, other):
        return _Quotient(self, other)

    def at_zero_eps(self):
        """The same coefficient with ``eps`` frozen at 0."""
        return _FrozenEps(self)

    def __call__(self, x, t, eps=0.0):
        return self.value(x, t, eps)


class CoefficientSeries(Coefficient):
    """Finite sum of :class:`Term` objects; immutable."""

    def __init__(self, terms=()):
        self.terms = tuple(terms)

    @classmethod
    def constant(cls, c0: float, c_eps: float = 0.0) -> "CoefficientSeries":
        if c0 == 0.0 and c_eps == 0.0:
            return cls()
        return cls([Term(0, 0, "poly", float(c0), float(c_eps))])

    @property
    def period(self) -> float | None:
        periods = {tm.period for tm in self.terms if tm.kind != "poly"}
        if len(periods) > 1:
            raise ValueError(f"series mixes periods {sorted(periods)}")
        return periods.pop() if periods else None

    def is_zero(self) -> bool:
        return all(tm.coeff0 == 0.0 and tm.coeff_eps == 0.0 for tm in self.terms)

    def depends_on_t(self) -> bool:
        return any(tm.ct > 0 and (tm.coeff0 or tm.coeff_eps) for tm in self.terms)

    def depends_on_x(self) -> bool:
        return any(tm.cx > 0 and (tm.coeff0 or tm.coeff_eps) for tm in self.terms)

    def depends_on_eps(self) -> bool:
        return any(tm.coeff_eps != 0.0 for tm in self.terms)

    def _accumulate(self, x, t, eps, fx, ft, use_eps_coeff):
        if np.ndim(x) == 0 and np.ndim(t) == 0 and np.ndim(eps) == 0:
            return self._accumulate_scalar(float(x), float(t), float(eps), fx, ft, use_eps_coeff)
        x, t = _broadcast(x, t)
        out = np.zeros(x.shape)
        for tm in self.terms:
            c = tm.coeff_eps if use_eps_coeff else tm.coeff0 + eps * tm.coeff_eps
            if np.all(c == 0):
                continue
            out = out + c * getattr(tm, fx)(x) * getattr(tm, ft)(t)
        return out

    def _accumulate_scalar(self, x, t, eps, fx, ft, use_eps_coeff):
        # the characteristic integrators evaluate one point at a time
        total = 0.0
        for tm in self.terms:
            c = tm.coeff_eps if use_eps_coeff else tm.coeff0 + eps * tm.coeff_eps
            if c != 0.0:
                total += c * _scalar_x(tm, x, fx == "_dphi") * _scalar_t(tm, t, ft == "_dpsi")
        return np.float64(total)

    def value(self, x, t, eps=0.0):
        return self._accumulate(x, t, eps, "_phi", "_psi", False)

    def dx(self, x, t, eps=0.0):
        return self._accumulate(x, t, eps, "_dphi", "_psi", False)

    def dt(self, x, t, eps=0.0):
        return self._accumulate(x, t, eps, "_phi", "_dpsi", False)

    def deps(self, x, t, eps=0.0):
        return self._accumulate(x, t, eps, "_phi", "_psi", True)

    def to_list(self) -> list[dict]:
        return [tm.to_dict() for tm in self.terms]

    def __eq__(self, other):
        return isinstance(other, CoefficientSeries) and self.terms == other.terms

    def __hash__(self):
        return hash(self.terms)

    def __repr__(self):
        return f"CoefficientSeries({list(self.terms)!r})"


class _Sum(Coefficient):
    def __init__(self, f, g, sign):
        self.f, self.g, self.sign = f, g, sign

    def value(self, x, t, eps=0.0):
        return self.f.value(x, t, eps) + self.sign * self.g.value(x, t, eps)

    def dx(self, x, t, eps=0.0):
        return self.f.dx(x, t, eps) + self.sign * self.g.dx(x, t, eps)

    def dt(self, x, t, eps=0.0):
        return self.f.dt(x, t, eps) + self.sign * self.g.dt(x, t, eps)

    def deps(self, x, t, eps=0.0):
        return self.f.deps(x, t, eps) + self.sign * self.g.deps(x, t, eps)


class _Product(Coefficient):
    def __init__(self, f, g):
        self.f, self.g = f, g

    def value(self, x, t, eps=0.0):
        return self.f.value(x, t, eps) * self.g.value(x, t, eps)

    def _rule(self, name, x, t, eps):
        return (getattr(self.f, name)(x, t, eps) * self.g.value(x, t, eps)
                + self.f.value(x, t, eps) * getattr(self.g, name)(x, t, eps))

    def dx(self, x, t, eps=0.0):
        return self._rule("dx", x, t, eps)

    def dt(self, x, t, eps=0.0):
        return self._rule("dt", x, t, eps)

    def deps(self, x, t, eps=0.0):
        return self._rule("deps", x, t, eps)


class _Quotient(Coefficient):
    def __init__(self, f, g):
        self.f, self.g = f, g

    def value(self, x, t, eps=0.0):
        return self.f.value(x, t, eps) / self.g.value(x, t, eps)

    def _rule(self, name, x, t, eps):
        gv = self.g.value(x, t, eps)
        return (getattr(self.f, name)(x, t, eps) * gv
                - self.f.value(x, t, eps) * getattr(self.g, name)(x, t, eps)) / gv**2

    def dx(self, x, t, eps=0.0):
        return self._rule("dx", x, t, eps)

    def dt(self, x, t, eps=0.0):
        return self._rule("dt", x, t, eps)

    def deps(self, x, t, eps=0.0):
        return self._rule("deps", x, t, eps)


class _FrozenEps(Coefficient):
    def __init__(self, f):
        self.f = f

    def value(self, x, t, eps=0.0):
        return self.f.value(x, t, 0.0)

    def dx(self, x, t, eps=0.0):
        return self.f.dx(x, t, 0.0)

    def dt(self, x, t, eps=0.0):
        return self.f.dt(x, t, 0.0)

    def deps(self, x, t, eps=0.0):
        x, t = _broadcast(x, t)
        return np.zeros(x.shape)


ZERO = CoefficientSeries()
