"""Minimum-time backstepping boundary control and observers for coupled
linear first-order hyperbolic systems: kernel synthesis on the triangle
domain, output-injection observer design, upwind closed-loop simulation,
and a verification battery."""

from .system import GridSpec, HyperbolicSystem, min_control_time, validate

__all__ = ["GridSpec", "HyperbolicSystem", "min_control_time", "validate"]
__version__ = "0.1.0"
