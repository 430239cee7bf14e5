"""Discrete Volterra-kernel algebra on the triangle grid.

Matrix kernel fields F(x, xi) with triangular support (xi <= x) are stored
as (r, c, Nx, Nx) arrays.  The composition

    (A * B)(x, xi) = integral_xi^x A(x, s) B(s, xi) ds

is evaluated with the trapezoid rule on the shared axis; it is the building
block for the second-kind Volterra iterations (target couplings, observer
couplings, inverse-transformation resolvent).
"""

from __future__ import annotations

import numpy as np

__all__ = ["tril_field", "block_matmul", "volterra_product", "left_mul", "right_mul"]


def tril_field(F: np.ndarray) -> np.ndarray:
    """Zero the unused entries above the diagonal of the last two axes."""
    return np.tril(F)


def block_matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """C[r, t, a, b] = sum_{s, c} A[r, s, a, c] B[s, t, c, b] via one BLAS call."""
    r, s, nx, _ = A.shape
    s2, t, _, _ = B.shape
    assert s == s2
    A2 = A.transpose(0, 2, 1, 3).reshape(r * nx, s * nx)
    B2 = B.transpose(0, 2, 1, 3).reshape(s * nx, t * nx)
    C2 = A2 @ B2
    return C2.reshape(r, nx, t, nx).transpose(0, 2, 1, 3)


def volterra_product(A: np.ndarray, B: np.ndarray, h: float) -> np.ndarray:
    """Trapezoid discretization of (A * B)(x, xi) = int_xi^x A(x,s)B(s,xi) ds.

    Inputs and output are lower-triangular fields; the diagonal of the
    result is exactly zero (empty integration range).
    """
    Az = tril_field(A)
    Bz = tril_field(B)
    full = block_matmul(Az, Bz)
    Bdiag = np.diagonal(B, axis1=-2, axis2=-1)  # (s, t, Nx)
    Adiag = np.diagonal(A, axis1=-2, axis2=-1)
    corr_lo = np.einsum("rsab,stb->rtab", Az, Bdiag)
    corr_hi = np.einsum("rsa,stab->rtab", Adiag, Bz)
    return h * (full - 0.5 * (corr_lo + corr_hi))


def left_mul(M: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Pointwise constant-matrix product (M F)(x, xi)."""
    return np.einsum("ip,pjab->ijab", M, F)


def right_mul(F: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Pointwise constant-matrix product (F M)(x, xi)."""
    return np.einsum("ipab,pj->ijab", F, M)


def axis_trapezoid_weights(nx: int) -> np.ndarray:
    """W[a, b] with sum_b W[a, b] f(xi_b) ~ int_0^{x_a} f; trapezoid, W[0] = 0."""
    h = 1.0 / (nx - 1)
    W = np.tril(np.full((nx, nx), h))
    idx = np.arange(nx)
    W[idx, idx] = 0.5 * h
    W[:, 0] = 0.5 * h
    W[0, 0] = 0.0
    return W


def picard_solve(forcing: np.ndarray, kernel: np.ndarray, h: float, *, tol: float, max_iter: int, side: str = "left"):
    """Iterate C = forcing + C * kernel (side='left') or C = forcing + kernel * C.

    Returns (solution, increment_history); raises on non-convergence via
    ValueError so callers can wrap it in their diagnostic type.
    """
    C = np.zeros_like(forcing)
    history: list[float] = []
    for _ in range(max_iter):
        if side == "left":
            Cn = forcing + volterra_product(C, kernel, h)
        else:
            Cn = forcing + volterra_product(kernel, C, h)
        d = float(np.abs(Cn - C).max())
        history.append(d)
        C = Cn
        if d < tol:
            return C, history
    raise ValueError(
        f"Volterra iteration stalled at increment {history[-1]:.3e} after {len(history)} steps"
    )
