"""Resolvent kernel of the inverse state transformation.

The forward map is w -> w - int_0^x V(x,xi) w(xi) dxi with the block
lower-triangular kernel V = [[0, 0], [K, L]].  Being a second-kind Volterra
operator it is always invertible, and the inverse has the same form with
the resolvent S = -sum_{k>=1} V^{*k}; the top n rows of S vanish since the
rightward states pass through unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import ConvergenceError, KernelSolution
from .volterra import axis_trapezoid_weights, picard_solve, volterra_product

__all__ = ["Resolvent", "inverse_transform_resolvent", "transform_on_axis", "inverse_on_axis"]


@dataclass(frozen=True)
class Resolvent:
    """S is ((n+m), (n+m), Nx, Nx); block row u is identically zero."""

    s: np.ndarray
    n: int
    m: int
    iterations_used: int
    final_increment: float


def _block_kernel(kernels: KernelSolution) -> np.ndarray:
    m, n = kernels.K.shape[:2]
    nx = kernels.grid.nx
    V = np.zeros((n + m, n + m, nx, nx))
    V[n:, :n] = kernels.K
    V[n:, n:] = kernels.L
    return V


def inverse_transform_resolvent(
    kernels: KernelSolution,
    *,
    picard_tol: float = 1e-12,
    picard_max_iter: int = 200,
) -> Resolvent:
    """Neumann iteration S = -V + V * S for the inverse-transform kernel."""
    V = _block_kernel(kernels)
    h = kernels.grid.h
    try:
        S, history = picard_solve(-V, V, h, tol=picard_tol, max_iter=picard_max_iter, side="right")
    except ValueError as exc:
        raise ConvergenceError(f"inverse-transform resolvent: {exc}", []) from exc
    m, n = kernels.K.shape[:2]
    return Resolvent(
        s=S, n=n, m=m, iterations_used=len(history), final_increment=history[-1]
    )


def transform_on_axis(kernels: KernelSolution, u: np.ndarray, v: np.ndarray):
    """Apply the forward transformation to states sampled on the grid axis.

    u is (n, Nx), v is (m, Nx); returns (alpha, beta) with alpha = u
    unchanged and beta = v - int_0^x (K u + L v), trapezoid in xi.
    """
    W = axis_trapezoid_weights(kernels.grid.nx)
    beta = v - (
        np.einsum("ijab,ab,jb->ia", kernels.K, W, u, optimize=True)
        + np.einsum("ijab,ab,jb->ia", kernels.L, W, v, optimize=True)
    )
    return u.copy(), beta


def inverse_on_axis(resolvent: Resolvent, alpha: np.ndarray, beta: np.ndarray):
    """Undo the transformation: (u, v) = (alpha, beta) - int_0^x S (alpha, beta)."""
    nx = alpha.shape[-1]
    W = axis_trapezoid_weights(nx)
    w = np.concatenate([alpha, beta], axis=0)
    rec = w - np.einsum("ijab,ab,jb->ia", resolvent.s, W, w, optimize=True)
    return rec[: resolvent.n], rec[resolvent.n :]
