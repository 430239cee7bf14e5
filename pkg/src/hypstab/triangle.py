"""Triangle-domain grid, interpolation, and characteristic tracing.

The transformation kernels live on T = {0 <= xi <= x <= 1}.  Fields are
stored as (Nx, Nx) arrays F[a, b] ~ F(x_a, xi_b) on a uniform lattice with
spacing h = 1/(Nx-1); entries above the diagonal (b > a) are unused and
kept at zero.  Characteristics of the kernel equations are straight lines;
tracing returns arc length, endpoint, and a sampler for quadrature points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .system import HyperbolicSystem

__all__ = [
    "TriangleGrid",
    "CharacteristicK",
    "CharacteristicL",
    "trace_characteristic_K",
    "trace_characteristic_L",
    "tri_interp",
    "TriInterpPlan",
]


class TriangleGrid:
    """Uniform lattice on the closed triangle T.

    Nodes are the pairs (x_a, xi_b) with 0 <= b <= a <= kernel_nx - 1; the
    diagonal xi = x consists of grid points.  node_a/node_b flatten the
    triangle row by row for vectorized updates.
    """

    def __init__(self, kernel_nx: int):
        if kernel_nx < 2:
            raise ValueError("kernel_nx must be >= 2")
        self.nx = int(kernel_nx)
        self.h = 1.0 / (self.nx - 1)
        self.axis = np.linspace(0.0, 1.0, self.nx)
        a, b = np.tril_indices(self.nx)
        self.node_a = a
        self.node_b = b
        self.node_x = self.axis[a]
        self.node_xi = self.axis[b]

    @property
    def n_nodes(self) -> int:
        return self.node_a.size

    def empty_field(self) -> np.ndarray:
        return np.zeros((self.nx, self.nx))

    def scatter(self, values: np.ndarray) -> np.ndarray:
        """Place flat per-node values into a square field array."""
        f = self.empty_field()
        f[self.node_a, self.node_b] = values
        return f


def _inside(x, xi, tol=1e-12):
    return (xi >= -tol) & (x <= 1.0 + tol) & (xi <= x + tol)


@dataclass(frozen=True)
class CharacteristicK:
    """Line x(s) = x - mu_i s, xi(s) = xi + lambda_j s ending on the diagonal."""

    x: float
    xi: float
    mu_i: float
    lam_j: float
    s_f: float
    x_f: float

    def sample(self, s):
        s = np.asarray(s, dtype=float)
        return self.x - self.mu_i * s, self.xi + self.lam_j * s


@dataclass(frozen=True)
class CharacteristicL:
    """Line chi(nu) = x - mu_i nu, zeta(nu) = xi - mu_j nu.

    Terminates on the diagonal (hits_diagonal, only possible for j < i) or
    on the axis xi = 0.
    """

    x: float
    xi: float
    mu_i: float
    mu_j: float
    nu_f: float
    chi_f: float
    zeta_f: float
    hits_diagonal: bool

    def sample(self, nu):
        nu = np.asarray(nu, dtype=float)
        return self.x - self.mu_i * nu, self.xi - self.mu_j * nu


def trace_characteristic_K(system: HyperbolicSystem, i: int, j: int, x: float, xi: float) -> CharacteristicK:
    """Characteristic of the K_ij kernel equation through (x, xi).

    1-based indices: 1 <= i <= m, 1 <= j <= n.  The path stays inside T and
    terminates on the hypotenuse at arc length s_f = (x - xi)/(mu_i + lambda_j).
    """
    if not (1 <= i <= system.m and 1 <= j <= system.n):
        raise IndexError("kernel indices out of range")
    if not _inside(x, xi):
        raise ValueError(f"point ({x}, {xi}) outside the triangle domain")
    mu_i = float(system.mu[i - 1])
    lam_j = float(system.lam[j - 1])
    s_f = (x - xi) / (mu_i + lam_j)
    x_f = x - mu_i * s_f
    return CharacteristicK(x, xi, mu_i, lam_j, s_f, x_f)


def trace_characteristic_L(system: HyperbolicSystem, i: int, j: int, x: float, xi: float) -> CharacteristicL:
    """Characteristic of the L_ij kernel equation through (x, xi).

    Ends on the hypotenuse iff j < i and mu_i*xi - mu_j*x >= 0 (both
    coordinates shrink, the gap closes only when mu_j < mu_i); otherwise it
    exits through the axis xi = 0 at nu_f = xi / mu_j.
    """
    if not (1 <= i <= system.m and 1 <= j <= system.m):
        raise IndexError("kernel indices out of range")
    if not _inside(x, xi):
        raise ValueError(f"point ({x}, {xi}) outside the triangle domain")
    mu_i = float(system.mu[i - 1])
    mu_j = float(system.mu[j - 1])
    hits = (j < i) and (mu_i * xi - mu_j * x >= 0.0)
    if hits:
        nu_f = (x - xi) / (mu_i - mu_j)
        chi_f = x - mu_i * nu_f
        zeta_f = chi_f
    else:
        nu_f = xi / mu_j
        chi_f = x - mu_i * nu_f
        zeta_f = 0.0
    return CharacteristicL(x, xi, mu_i, mu_j, nu_f, chi_f, zeta_f, hits)


class TriInterpPlan:
    """Precomputed gather indices/weights for interpolating at fixed points.

    Bilinear inside cells fully below the diagonal; linear on the lower
    triangle of cells straddling the diagonal (the above-diagonal corner
    gets weight zero, so unused storage is never read with weight).
    Exact for linear fields.
    """

    def __init__(self, y, z, nx: int):
        h = 1.0 / (nx - 1)
        y = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)
        z = np.minimum(np.clip(np.asarray(z, dtype=float), 0.0, 1.0), y)
        a = np.clip((y / h).astype(np.int64), 0, nx - 2)
        b = np.clip((z / h).astype(np.int64), 0, nx - 2)
        # z <= y guarantees b <= a up to floating-point ties on the diagonal
        b = np.minimum(b, a)
        ty = y / h - a
        tz = z / h - b
        diag_cell = b >= a
        w00 = np.where(diag_cell, 1.0 - ty, (1.0 - ty) * (1.0 - tz))
        w10 = np.where(diag_cell, ty - tz, ty * (1.0 - tz))
        w01 = np.where(diag_cell, 0.0, (1.0 - ty) * tz)
        w11 = np.where(diag_cell, tz, ty * tz)
        self.a = a
        self.b = b
        self.w00, self.w10, self.w01, self.w11 = w00, w10, w01, w11
        # flat corner indices into field.ravel() for the fused fast path
        self.i00 = (a * nx + b).astype(np.int64)
        self.i10 = self.i00 + nx
        self.i01 = self.i00 + 1
        self.i11 = self.i00 + nx + 1

    def apply(self, field: np.ndarray) -> np.ndarray:
        """Interpolate; field may be (Nx, Nx) or a stack (..., Nx, Nx)."""
        a, b = self.a, self.b
        return (
            self.w00 * field[..., a, b]
            + self.w10 * field[..., a + 1, b]
            + self.w01 * field[..., a, b + 1]
            + self.w11 * field[..., a + 1, b + 1]
        )


def tri_interp(field: np.ndarray, y, z) -> np.ndarray:
    """One-shot triangle-aware bilinear interpolation of a square field."""
    plan = TriInterpPlan(y, z, field.shape[0])
    return plan.apply(field)


try:  # fused gather + field contraction; pure-numpy fallback below
    import numba as _nb

    @_nb.njit(cache=True)
    def _gather_contract_jit(flat, coef, i00, i10, i01, i11, w00, w10, w01, w11, out):  # pragma: no cover
        npts = out.size
        nf = flat.shape[0]
        for p in range(npts):
            acc = 0.0
            for f in range(nf):
                row = flat[f]
                acc += coef[f] * (
                    w00[p] * row[i00[p]]
                    + w10[p] * row[i10[p]]
                    + w01[p] * row[i01[p]]
                    + w11[p] * row[i11[p]]
                )
            out[p] = acc
        return out

    @_nb.njit(cache=True)
    def _gather_sided_jit(flat_lo, flat_hi, mask, i00, i10, i01, i11, w00, w10, w01, w11, out):  # pragma: no cover
        for p in range(out.size):
            row = flat_hi if mask[p] else flat_lo
            out[p] = (
                w00[p] * row[i00[p]]
                + w10[p] * row[i10[p]]
                + w01[p] * row[i01[p]]
                + w11[p] * row[i11[p]]
            )
        return out

    _HAVE_NUMBA = True
except Exception:  # pragma: no cover
    _HAVE_NUMBA = False


def gather_contract(plan: TriInterpPlan, fields: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """sum_f coef[f] * interp(fields[f]) at the plan's points, in one pass."""
    flat = np.ascontiguousarray(fields.reshape(fields.shape[0], -1))
    coef = np.ascontiguousarray(coef, dtype=float)
    if _HAVE_NUMBA:
        out = np.empty(plan.i00.size)
        return _gather_contract_jit(
            flat, coef, plan.i00, plan.i10, plan.i01, plan.i11,
            plan.w00, plan.w10, plan.w01, plan.w11, out,
        )
    return np.tensordot(coef, plan.apply(fields), axes=1)


def sided_extensions(field: np.ndarray, slope: float):
    """Smooth one-sided extensions of a field jumping across xi = slope * x.

    The discontinuity runs along a characteristic through the origin
    (index-space line b = slope * a, 0 < slope < 1).  Nodes with
    xi >= slope*x carry the upper branch.  Returns (lower, upper) copies
    where each branch is linearly extrapolated two cells across the line,
    so bilinear stencils never mix branches.
    """
    nx = field.shape[0]
    lower = field.copy()
    upper = field.copy()
    a = np.arange(nx)
    b0 = np.ceil(slope * a - 1e-12).astype(np.int64)  # first index on the upper branch
    # rows where both branches have at least two support nodes
    rows = a[(b0 >= 2) & (b0 + 1 <= a)]
    if rows.size == 0:
        return lower, upper
    f = field
    b = b0[rows]
    # extend the upper branch two cells below the line
    upper[rows, b - 1] = 2.0 * f[rows, b] - f[rows, b + 1]
    upper[rows, b - 2] = 3.0 * f[rows, b] - 2.0 * f[rows, b + 1]
    # extend the lower branch two cells above the line
    lower[rows, b] = 2.0 * f[rows, b - 1] - f[rows, b - 2]
    lower[rows, b + 1] = 3.0 * f[rows, b - 1] - 2.0 * f[rows, b - 2]
    return lower, upper


def gather_sided(plan: TriInterpPlan, lower: np.ndarray, upper: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Interpolate a jumping field: branch chosen per query point by mask."""
    if _HAVE_NUMBA:
        out = np.empty(plan.i00.size)
        return _gather_sided_jit(
            np.ascontiguousarray(lower.ravel()),
            np.ascontiguousarray(upper.ravel()),
            mask,
            plan.i00, plan.i10, plan.i01, plan.i11,
            plan.w00, plan.w10, plan.w01, plan.w11, out,
        )
    return np.where(mask, plan.apply(upper), plan.apply(lower))


def interp1d_uniform(values: np.ndarray, t) -> np.ndarray:
    """Linear interpolation of samples on linspace(0, 1, len(values))."""
    nx = values.shape[0]
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0) * (nx - 1)
    k = np.clip(t.astype(np.int64), 0, nx - 2)
    w = t - k
    return (1.0 - w) * values[k] + w * values[k + 1]
