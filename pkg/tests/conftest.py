import numpy as np
import pytest
from hypothesis import settings

from hypdich.scenarios import CATALOG_NAMES, catalog, spec_from_dict

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


def term(c0=0.0, ce=0.0, cx=0, ct=0, kind="poly", period=None):
    out = {"cx": cx, "ct": ct, "kind": kind, "coeff0": c0, "coeffEps": ce}
    if period is not None:
        out["period"] = period
    return out


def two_by_two(a1=(term(1.0),), a2=(term(-1.0),), b=None, gamma=None, p=None, q=None, eps0=0.2):
    """Small n=2, m=1 scenario from term lists; boundary rows default to zero."""
    data = {"n": 2, "m": 1, "eps0": eps0, "a": [list(a1), list(a2)]}
    if b is not None:
        data["b"] = b
    if gamma is not None:
        data["gamma"] = gamma
    if p is not None:
        data["p"] = p
    if q is not None:
        data["q"] = q
    return spec_from_dict(data)


@pytest.fixture(scope="session")
def specs():
    return {name: catalog(name) for name in CATALOG_NAMES}


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    """Print one pass/fail line and keep it for the terminal summary."""
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
