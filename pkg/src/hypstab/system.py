"""Plant description and derived constants.

A heterodirectional linear hyperbolic system on the unit interval:

    u_t + Lambda+ u_x = Sigma++ u + Sigma+- v
    v_t - Lambda- v_x = Sigma-+ u + Sigma-- v
    u(t,0) = Q0 v(t,0),   v(t,1) = R1 u(t,1) + U(t)

with n rightward states u (diagonal speeds lambda, sorted non-decreasing)
and m leftward states v (diagonal speeds mu, sorted strictly increasing).
All coefficients are constant.  Every other module takes a validated
HyperbolicSystem; nothing here does I/O.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "HyperbolicSystem",
    "GridSpec",
    "ValidationReport",
    "InvalidSystemError",
    "validate",
    "require_valid",
    "min_control_time",
]


def _frozen_array(a, shape=None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if shape is not None and arr.shape != shape:
        # Shape errors are reported by validate(); keep the raw array so the
        # report can show what arrived.
        pass
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class HyperbolicSystem:
    """Constant-coefficient plant data.

    Parameters
    ----------
    lam : (n,) positive transport speeds of the rightward states, sorted
        non-decreasing (ties allowed).
    mu : (m,) positive transport speeds of the leftward states, sorted
        strictly increasing (ties rejected: kernel boundary values divide
        by mu_i - mu_j).
    sigma_pp, sigma_pm, sigma_mp, sigma_mm : coupling blocks of shapes
        (n,n), (n,m), (m,n), (m,m).
    q0 : (n,m) left-boundary reflection, u(t,0) = q0 v(t,0).
    r1 : (m,n) right-boundary reflection, v(t,1) = r1 u(t,1) + U(t).

    Instances are immutable (arrays are write-locked) and safe to share.
    """

    lam: np.ndarray
    mu: np.ndarray
    sigma_pp: np.ndarray
    sigma_pm: np.ndarray
    sigma_mp: np.ndarray
    sigma_mm: np.ndarray
    q0: np.ndarray
    r1: np.ndarray

    def __post_init__(self):
        for name in ("lam", "mu"):
            object.__setattr__(self, name, _frozen_array(np.atleast_1d(getattr(self, name))))
        for name in ("sigma_pp", "sigma_pm", "sigma_mp", "sigma_mm", "q0", "r1"):
            object.__setattr__(self, name, _frozen_array(np.atleast_2d(getattr(self, name))))

    @property
    def n(self) -> int:
        return self.lam.size

    @property
    def m(self) -> int:
        return self.mu.size

    @property
    def max_speed(self) -> float:
        return float(max(self.lam.max(), self.mu.max()))


@dataclass(frozen=True)
class GridSpec:
    """Numerical resolution knobs shared by the solvers and the simulator.

    nx          -- number of spatial cells of the simulation grid
    cfl         -- Courant number in (0, 1]
    kernel_nx   -- points per axis of the kernel triangle grid
    picard_tol  -- sup-norm stopping tolerance of successive approximations
    picard_max_iter -- iteration cap before a non-convergence diagnostic
    """

    nx: int = 400
    cfl: float = 0.9
    kernel_nx: int = 129
    picard_tol: float = 1e-10
    picard_max_iter: int = 200

    def __post_init__(self):
        if self.nx < 2:
            raise ValueError("nx must be >= 2")
        if self.kernel_nx < 2:
            raise ValueError("kernel_nx must be >= 2")
        if not (0.0 < self.cfl <= 1.0):
            raise ValueError("cfl must be in (0, 1]")
        if self.picard_tol <= 0.0:
            raise ValueError("picard_tol must be positive")

    @property
    def h(self) -> float:
        """Kernel-grid spacing 1/(kernel_nx - 1)."""
        return 1.0 / (self.kernel_nx - 1)

    @property
    def dx(self) -> float:
        return 1.0 / self.nx


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate(): ok flag plus the full list of violations."""

    violations: tuple = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations


class InvalidSystemError(ValueError):
    """Raised by solvers handed a system that fails validation."""

    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__("; ".join(report.violations))


def validate(system: HyperbolicSystem) -> ValidationReport:
    """Check the standing assumptions and return all violations at once.

    Deterministic and side-effect free.  Violations cover: empty state
    families, non-positive or mis-sorted speeds (lambda non-decreasing,
    mu strictly increasing), and coupling/boundary blocks whose shapes do
    not match (n, m).
    """
    v: list[str] = []
    n, m = system.n, system.m
    if n < 1:
        v.append("n must be >= 1")
    if m < 1:
        v.append("m must be >= 1")
    lam, mu = system.lam, system.mu
    if lam.ndim != 1:
        v.append("lambda must be a vector")
    if mu.ndim != 1:
        v.append("mu must be a vector")
    if lam.size and np.any(lam <= 0):
        v.append("lambda must be positive")
    if mu.size and np.any(mu <= 0):
        v.append("mu must be positive")
    if lam.size > 1 and np.any(np.diff(lam) < 0):
        v.append("lambda must be sorted non-decreasing")
    if mu.size > 1 and np.any(np.diff(mu) <= 0):
        v.append("mu must be strictly increasing")
    expected = {
        "sigma_pp": (n, n),
        "sigma_pm": (n, m),
        "sigma_mp": (m, n),
        "sigma_mm": (m, m),
        "q0": (n, m),
        "r1": (m, n),
    }
    for name, shape in expected.items():
        got = getattr(system, name).shape
        if got != shape:
            v.append(f"{name} shape must be {shape}, got {got}")
    return ValidationReport(tuple(v))


def require_valid(system: HyperbolicSystem) -> None:
    report = validate(system)
    if not report.ok:
        raise InvalidSystemError(report)


def min_control_time(system: HyperbolicSystem) -> float:
    """Theoretical lower bound for the stabilization time: 1/mu_1 + 1/lambda_1.

    The sum of the slowest transit times in each direction; depends only on
    the two slowest speeds.
    """
    require_valid(system)
    return 1.0 / float(system.mu[0]) + 1.0 / float(system.lam[0])
