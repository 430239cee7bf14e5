"""Target-system couplings fed by the solved control kernels.

The transformed dynamics carry two matrix fields on the triangle: C- acts
on the leftward target states and solves a second-kind Volterra equation
(for each x, the unknown appears under the integral over [0, x]); C+ acts
on the rightward states and follows explicitly once C- is known.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import ConvergenceError, KernelSolution
from .system import GridSpec, HyperbolicSystem
from .volterra import left_mul, picard_solve, volterra_product

__all__ = ["TargetCouplings", "solve_target_couplings", "c_minus_residual"]


@dataclass(frozen=True)
class TargetCouplings:
    """C- is (n, m, Nx, Nx); C+ is (n, n, Nx, Nx); both lower-triangular fields."""

    c_minus: np.ndarray
    c_plus: np.ndarray
    iterations_used: int
    final_increment: float


def solve_target_couplings(
    kernels: KernelSolution,
    system: HyperbolicSystem,
    grid: GridSpec | None = None,
    *,
    picard_tol: float | None = None,
    picard_max_iter: int | None = None,
) -> TargetCouplings:
    """Neumann-series solve of C- = Sigma_pm L + C- * L, then C+ explicitly."""
    tol = picard_tol if picard_tol is not None else (grid.picard_tol if grid else 1e-10)
    max_iter = picard_max_iter if picard_max_iter is not None else (
        grid.picard_max_iter if grid else 200
    )
    h = kernels.grid.h
    forcing = left_mul(system.sigma_pm, kernels.L)
    try:
        c_minus, history = picard_solve(forcing, kernels.L, h, tol=tol, max_iter=max_iter)
    except ValueError as exc:
        raise ConvergenceError(f"target coupling C-: {exc}", []) from exc
    c_plus = left_mul(system.sigma_pm, kernels.K) + volterra_product(c_minus, kernels.K, h)
    return TargetCouplings(
        c_minus=c_minus,
        c_plus=c_plus,
        iterations_used=len(history),
        final_increment=history[-1],
    )


def c_minus_residual(couplings: TargetCouplings, kernels: KernelSolution, system: HyperbolicSystem) -> float:
    """Sup-norm defect of the solved C- plugged back into its Volterra equation."""
    h = kernels.grid.h
    rhs = left_mul(system.sigma_pm, kernels.L) + volterra_product(
        couplings.c_minus, kernels.L, h
    )
    return float(np.abs(np.tril(couplings.c_minus - rhs)).max())
