"""Anti-collocated boundary observer: kernels M, N, coupling, and output-injection gains.

The observer copies the plant, measures the leftward state at x = 0, and
injects -P(x) times the output error.  Designing P+/P- so that the
estimation error dies in minimum time is the mirror image of the control
problem: transposing the couplings, swapping the boundary reflections
(qhat0 = Lambda+^{-1} R1^T Lambda-, rhat1 = 0) and reflecting the triangle
through (x, xi) -> (1 - xi, 1 - x) turns the observer kernel system into a
control kernel system, solved by the same characteristics + successive
approximations machinery.  The mapping back is a pure reindexing of grid
nodes plus a transpose.

Solved fields satisfy, on the triangle:

    lambda_i dM_ij/dx - mu_j dM_ij/dxi
        = sum_k spp_ik M_kj + sum_p spm_ip N_pj - sum_{p>=j} M_ip wbar_pj(xi)
    mu_i dN_ij/dx + mu_j dN_ij/dxi
        = sum_{p>=j} N_ip wbar_pj(xi) - sum_k smp_ik M_kj - sum_k smm_ik N_kj

with M_ij(x,x) = -spm_ij/(mu_j + lambda_i) on the whole diagonal,
N_ij(x,x) = -smm_ij/(mu_j - mu_i) imposed on the i < j half, the edge
condition N(1, xi) = R1 M(1, xi), and the lower-triangular coupling
wbar_ij(x) = (mu_j - mu_i) N_ij(x,x) + smm_ij for j <= i.  The gains are
P+(x) = -M(x,0) Lambda-, P-(x) = -N(x,0) Lambda-.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import ConvergenceError, KernelSolution, solve_control_kernels
from .system import GridSpec, HyperbolicSystem, require_valid
from .triangle import TriangleGrid
from .volterra import picard_solve, right_mul, volterra_product

__all__ = [
    "ObserverSolution",
    "auxiliary_control_system",
    "solve_observer_kernels",
    "target_couplings_observer",
]


@dataclass(frozen=True)
class ObserverSolution:
    """Observer kernels and gains on the triangle grid.

    M : (n, m, Nx, Nx) kernel acting on the leftward target error states
    N : (m, m, Nx, Nx)
    omega_bar : (m, m, Nx) lower-triangular coupling functions of x
    p_plus : (n, m, Nx) injection gains, rows of the u-estimator
    p_minus : (m, m, Nx) injection gains, rows of the v-estimator
    auxiliary : the control-kernel solution of the mirrored system the
        observer fields were mapped from (kept for verification).
    """

    grid: TriangleGrid
    M: np.ndarray
    N: np.ndarray
    omega_bar: np.ndarray
    p_plus: np.ndarray
    p_minus: np.ndarray
    auxiliary: KernelSolution
    iterations_used: tuple
    final_increment: float


def auxiliary_control_system(system: HyperbolicSystem) -> HyperbolicSystem:
    """The mirrored plant whose control kernels encode the observer design."""
    require_valid(system)
    return HyperbolicSystem(
        lam=system.lam,
        mu=system.mu,
        sigma_pp=system.sigma_pp.T,
        sigma_pm=system.sigma_mp.T,
        sigma_mp=system.sigma_pm.T,
        sigma_mm=system.sigma_mm.T,
        q0=(system.r1.T * system.mu[None, :]) / system.lam[:, None],
        r1=np.zeros((system.m, system.n)),
    )


def _reflect_transpose(field: np.ndarray) -> np.ndarray:
    """F(x, xi) = G(1 - xi, 1 - x) at grid nodes; lower triangle to lower triangle."""
    return field[::-1, ::-1].T.copy()


def solve_observer_kernels(
    system: HyperbolicSystem,
    grid: GridSpec | TriangleGrid,
    *,
    picard_tol: float | None = None,
    picard_max_iter: int | None = None,
) -> ObserverSolution:
    """Solve the observer kernel system and read off the injection gains."""
    require_valid(system)
    aux = solve_control_kernels(
        auxiliary_control_system(system),
        grid,
        picard_tol=picard_tol,
        picard_max_iter=picard_max_iter,
    )
    tri = aux.grid
    nx = tri.nx
    n, m = system.n, system.m

    M = np.zeros((n, m, nx, nx))
    for i in range(n):
        for j in range(m):
            M[i, j] = _reflect_transpose(aux.K[j, i])
    N = np.zeros((m, m, nx, nx))
    for i in range(m):
        for j in range(m):
            N[i, j] = _reflect_transpose(aux.L[j, i])

    omega_bar = np.zeros((m, m, nx))
    for j in range(m):
        for p in range(j, m):
            omega_bar[p, j] = aux.omega[j, p][::-1]

    p_plus = -system.mu[None, :, None] * M[:, :, :, 0]
    p_minus = -system.mu[None, :, None] * N[:, :, :, 0]

    return ObserverSolution(
        grid=tri,
        M=M,
        N=N,
        omega_bar=omega_bar,
        p_plus=p_plus,
        p_minus=p_minus,
        auxiliary=aux,
        iterations_used=aux.iterations_used,
        final_increment=aux.final_increment,
    )


def target_couplings_observer(
    observer: ObserverSolution,
    system: HyperbolicSystem,
    grid: GridSpec | None = None,
    *,
    picard_tol: float | None = None,
    picard_max_iter: int | None = None,
):
    """Couplings (D+, D-) of the estimation-error target dynamics.

    D- solves the second-kind Volterra equation
    D-(x,xi) = N(x,xi) Sigma_mp + int_xi^x N(x,s) D-(s,xi) ds
    (unknown under the integral); D+ then follows explicitly from M.
    Used to cross-check the error dynamics in verification only.
    """
    tol = picard_tol if picard_tol is not None else (grid.picard_tol if grid else 1e-10)
    max_iter = picard_max_iter if picard_max_iter is not None else (
        grid.picard_max_iter if grid else 200
    )
    h = observer.grid.h
    forcing = right_mul(observer.N, system.sigma_mp)
    try:
        d_minus, history = picard_solve(
            forcing, observer.N, h, tol=tol, max_iter=max_iter, side="right"
        )
    except ValueError as exc:
        raise ConvergenceError(f"observer coupling D-: {exc}", []) from exc
    d_plus = right_mul(observer.M, system.sigma_mp) + volterra_product(
        observer.M, d_minus, h
    )
    return d_plus, d_minus


def d_minus_residual(d_minus: np.ndarray, observer: ObserverSolution, system: HyperbolicSystem) -> float:
    """Sup-norm defect of D- plugged back into its Volterra equation."""
    h = observer.grid.h
    rhs = right_mul(observer.N, system.sigma_mp) + volterra_product(observer.N, d_minus, h)
    return float(np.abs(np.tril(d_minus - rhs)).max())
