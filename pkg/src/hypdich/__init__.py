"""Operator toolkit for 1-D linear hyperbolic systems with smoothing boundary conditions."""

from .scenarios import catalog, load_scenario, resolve_scenario, validate

__all__ = ["catalog", "load_scenario", "resolve_scenario", "validate"]
__version__ = "0.1.0"
