"""Control-side transformation kernels by characteristics + successive approximations.

Solves the coupled Goursat system for the kernels K (m x n) and L (m x m)
on the triangle T, together with the upper-triangular coupling Omega(x).
Each kernel row i couples only to rows p >= i (through Omega), so rows are
solved in the cascade order i = m, ..., 1; within a row the fixed point is
linear and is iterated from zero.  Integrals along characteristics use the
composite trapezoid rule with step <= h, off-grid values by triangle-aware
bilinear interpolation.

Boundary values are imposed by the update formulas themselves: at diagonal
nodes the characteristic has zero length, so the solved fields match the
closed-form diagonal data to machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .system import GridSpec, HyperbolicSystem, require_valid
from .triangle import (
    TriangleGrid,
    TriInterpPlan,
    gather_contract,
    gather_sided,
    sided_extensions,
)

__all__ = [
    "KernelSolution",
    "ConvergenceError",
    "solve_control_kernels",
    "omega_from_L",
]


class ConvergenceError(RuntimeError):
    """Successive approximations failed to reach tolerance.

    Carries the recorded sup-norm increment history for diagnosis.
    """

    def __init__(self, message: str, history):
        super().__init__(message)
        self.history = list(history)


@dataclass(frozen=True)
class KernelSolution:
    """Gridded control kernels.

    K : (m, n, Nx, Nx) fields on the triangle grid
    L : (m, m, Nx, Nx)
    omega : (m, m, Nx) upper-triangular coupling functions of x
    iterations_used : per-row sweep counts, row order i = m..1
    increment_history : per-row lists of sup-norm Picard increments
    """

    grid: TriangleGrid
    K: np.ndarray
    L: np.ndarray
    omega: np.ndarray
    iterations_used: tuple
    increment_history: tuple
    final_increment: float


def omega_from_L(L: np.ndarray, system: HyperbolicSystem, grid: TriangleGrid) -> np.ndarray:
    """Coupling functions omega_ij(x) = (mu_i - mu_j) L_ij(x,x) + sigma_mm_ij for i <= j.

    Zero below the diagonal; on the diagonal the speed difference vanishes,
    so omega_ii(x) = sigma_mm_ii identically.
    """
    m = system.m
    nx = grid.nx
    omega = np.zeros((m, m, nx))
    for i in range(m):
        for j in range(i, m):
            diag = np.diagonal(L[i, j])
            omega[i, j] = (system.mu[i] - system.mu[j]) * diag + system.sigma_mm[i, j]
    return omega


class _Quadrature:
    """Per-(row, field) characteristic quadrature with frozen interpolation plans.

    Paths are Y(s) = x - speed_x*s, Z(s) = xi + speed_xi*s for s in
    [0, length], discretized with trapezoid step <= h.
    """

    def __init__(self, grid: TriangleGrid, x, xi, speed_x: float, speed_xi: float, lengths):
        nx = grid.nx
        # arc step <= h: the path moves hypot(speed_x, speed_xi) per unit s
        speed = math.hypot(speed_x, speed_xi)
        nq = max(2, int(math.ceil(float(lengths.max()) * speed / grid.h)) + 1)
        t = np.linspace(0.0, 1.0, nq)
        s = lengths[:, None] * t[None, :]
        self.Y = x[:, None] - speed_x * s
        self.Z = xi[:, None] + speed_xi * s
        tw = np.ones(nq)
        tw[0] = tw[-1] = 0.5
        self.w = (lengths / (nq - 1))[:, None] * tw[None, :]
        self.plan = TriInterpPlan(self.Y.ravel(), self.Z.ravel(), nx)
        self.shape = self.Y.shape
        self._mask_cache: dict[float, np.ndarray] = {}
        # 1D plan for evaluating functions of x (the Omega factors) along the path
        yk = np.clip(self.Y.ravel(), 0.0, 1.0) * (nx - 1)
        k = np.clip(yk.astype(np.int32), 0, nx - 2)
        self._diag_k = k
        self._diag_w = yk - k

    def gather(self, fields: np.ndarray) -> np.ndarray:
        """Interpolate a (..., Nx, Nx) field stack at all quadrature points."""
        vals = self.plan.apply(fields)
        return vals.reshape(fields.shape[:-2] + self.shape)

    def contract(self, fields: np.ndarray, coef: np.ndarray) -> np.ndarray:
        """Coefficient-weighted sum of interpolated fields, one fused pass."""
        return gather_contract(self.plan, fields, coef).reshape(self.shape)

    def side_mask(self, slope: float) -> np.ndarray:
        """Upper-branch flags of the quadrature points for xi = slope * x."""
        key = float(slope)
        if key not in self._mask_cache:
            self._mask_cache[key] = (
                self.Z.ravel() >= key * self.Y.ravel() - 1e-12
            )
        return self._mask_cache[key]

    def gather_branches(self, lower: np.ndarray, upper: np.ndarray, slope: float) -> np.ndarray:
        """Interpolate a jumping field from precomputed branch extensions."""
        return gather_sided(self.plan, lower, upper, self.side_mask(slope)).reshape(self.shape)

    def gather_jumped(self, field: np.ndarray, slope: float) -> np.ndarray:
        """Interpolate a field that jumps across xi = slope * x, branch-aware."""
        lower, upper = sided_extensions(field, slope)
        return self.gather_branches(lower, upper, slope)

    def gather_fn_of_x(self, samples: np.ndarray) -> np.ndarray:
        """Interpolate a function of x (sampled on the axis) along the path."""
        k, w = self._diag_k, self._diag_w
        return ((1.0 - w) * samples[k] + w * samples[k + 1]).reshape(self.shape)

    def integrate(self, integrand: np.ndarray) -> np.ndarray:
        return (self.w * integrand).sum(axis=1)


class _JumpCrossing:
    """Trapezoid correction for a path family crossing one jump line.

    When a characteristic crosses xi = slope * x at parameter s*, the
    composite trapezoid over the step containing s* errs by
    delta * (theta - 1/2) * (G_before - G_after) where theta is the
    fractional position of s* inside the step and G jumps by the crossing
    field's branch gap times its coefficient.  Without this term the
    whole region downstream of the line inherits O(h) oscillations.
    """

    def __init__(self, quad: "_Quadrature", x, xi, A: float, B: float, slope: float, lengths, nx: int):
        denom = slope * A + B
        self.active = abs(denom) > 1e-12
        if not self.active:
            return
        s_star = (slope * x - xi) / denom
        nq = quad.shape[1]
        step = lengths / (nq - 1)
        valid = (s_star > 1e-14) & (s_star < lengths - 1e-14) & (step > 0)
        self.active = bool(valid.any())
        if not self.active:
            return
        self.idx = np.nonzero(valid)[0]
        ys = x[valid] - A * s_star[valid]
        zs = xi[valid] + B * s_star[valid]
        self.plan = TriInterpPlan(ys, zs, nx)
        self.y_star = np.clip(ys, 0.0, 1.0)
        # branch on the node side of the line (the before-crossing branch)
        self.node_upper = xi[valid] >= slope * x[valid] - 1e-12
        # fractional crossing position inside the step between the last
        # before-branch quadrature point and the first after-branch one.
        # Points exactly on the line evaluate on the upper branch, so the
        # bracketing interval depends on which side the path starts from.
        sd = s_star[valid] / step[valid]
        tol = 1e-9
        last_before = np.where(
            self.node_upper, np.floor(sd + tol), np.ceil(sd - tol) - 1.0
        )
        theta = np.clip(sd - last_before, 0.0, 1.0)
        self.geom = step[valid] * (theta - 0.5)
        self.n_total = x.size

    def correction(self, lower: np.ndarray, upper: np.ndarray, coef) -> np.ndarray:
        """Per-node additive quadrature fix; coef may be scalar or per-crossing."""
        if not self.active:
            return 0.0
        gap = self.plan.apply(upper) - self.plan.apply(lower)
        signed = np.where(self.node_upper, gap, -gap)
        out = np.zeros(self.n_total)
        out[self.idx] = self.geom * signed * coef
        return out

    def omega_at_crossing(self, samples: np.ndarray) -> np.ndarray:
        """Evaluate an axis-sampled function at the crossing x-positions."""
        nx = samples.shape[0]
        t = self.y_star * (nx - 1)
        k = np.clip(t.astype(np.int64), 0, nx - 2)
        w = t - k
        return (1.0 - w) * samples[k] + w * samples[k + 1]


def _edge_interp(column: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Linear interpolation of a bottom-edge sample column at positions in [0,1]."""
    nx = column.shape[-1]
    t = np.clip(pos, 0.0, 1.0) * (nx - 1)
    k = np.clip(t.astype(np.int64), 0, nx - 2)
    w = t - k
    return (1.0 - w) * column[..., k] + w * column[..., k + 1]


def _solve_row(
    system: HyperbolicSystem,
    tri: TriangleGrid,
    i: int,
    K_solved: np.ndarray,
    L_solved: np.ndarray,
    tol: float,
    max_iter: int,
):
    """Fixed point for kernel row i given frozen rows p > i.

    Reads only K_solved[i+1:], L_solved[i+1:]; returns the row fields and
    the sweep increment history.  Updates the K fields first, then L
    against the fresh K (the axis boundary term and the sigma_pm coupling
    use the updated K within the same sweep).
    """
    n, m = system.n, system.m
    nx = tri.nx
    lam, mu = system.lam, system.mu
    spp, spm, smp, smm = system.sigma_pp, system.sigma_pm, system.sigma_mp, system.sigma_mm
    q0 = system.q0
    x, xi = tri.node_x, tri.node_xi

    kdiag = -smp[i] / (mu[i] + lam)  # (n,) diagonal data of row i of K

    quad_K = [
        _Quadrature(tri, x, xi, mu[i], lam[j], (x - xi) / (mu[i] + lam[j]))
        for j in range(n)
    ]
    deltas, nu_fs, chi_fs, quad_L, bval_diag = [], [], [], [], []
    for j in range(m):
        if j < i:
            delta = mu[i] * xi - mu[j] * x >= 0.0
            nu_f = np.where(delta, (x - xi) / (mu[i] - mu[j]), xi / mu[j])
        else:
            delta = np.zeros_like(x, dtype=bool)
            nu_f = xi / mu[j]
        deltas.append(delta)
        nu_fs.append(nu_f)
        chi_fs.append(np.clip(x - mu[i] * nu_f, 0.0, 1.0))
        quad_L.append(_Quadrature(tri, x, xi, mu[i], -mu[j], nu_f))
        bval_diag.append(-smm[i, j] / (mu[i] - mu[j]) if j < i else 0.0)

    # frozen gathers of already-solved rows p > i along this row's paths;
    # solved leftward kernels with a branch jump (column j < row p) are
    # interpolated branch-aware so stencils never straddle their line
    solved_branches = {
        (p, j): sided_extensions(L_solved[p, j], mu[j] / mu[p])
        for p in range(i + 1, m)
        for j in range(p)
    }

    def solved_gather(q, p, j):
        if j < p:
            return q.gather_branches(*solved_branches[(p, j)], mu[j] / mu[p])
        return q.gather(L_solved[p, j])

    solved_K = [quad_K[j].gather(K_solved[i + 1 :, j]) for j in range(n)]
    solved_L = [
        [solved_gather(quad_L[j], p, j) for p in range(i + 1, m)] for j in range(m)
    ]

    # trapezoid jump-split corrections: per target family, the crossings of
    # every discontinuity line carried by an integrand field.  Own-row
    # jumped fields L_ip (p < i) appear in all targets; solved jumped
    # fields L_pj only in the matching column j.
    jumped_own_slopes = {p: mu[p] / mu[i] for p in range(i)}
    solved_slopes = {(p, jj): mu[jj] / mu[p] for p in range(i + 1, m) for jj in range(p)}

    def build_crossings(q, j, B_speed, lengths, with_solved: bool):
        entries = []
        for p, slope in jumped_own_slopes.items():
            entries.append(("own", p, _JumpCrossing(q, x, xi, mu[i], B_speed, slope, lengths, nx)))
        if with_solved:
            for (p, jj), slope in solved_slopes.items():
                if jj == j:
                    entries.append(("solved", p, _JumpCrossing(q, x, xi, mu[i], B_speed, slope, lengths, nx)))
        return entries

    # K-target integrands carry own-row L fields only; L-target integrands
    # additionally carry the solved L_pj of the same column j
    cross_K = [
        build_crossings(quad_K[j], j, lam[j], (x - xi) / (mu[i] + lam[j]), False)
        for j in range(n)
    ]
    cross_L = [build_crossings(quad_L[j], j, -mu[j], nu_fs[j], True) for j in range(m)]

    # coefficient vectors over the stacked row fields [K_i1..K_in, L_i1..L_im];
    # the p = i self-coupling (-sigma_mm_ii) is folded in.  The row's own
    # jumped fields L_ip (p < i) leave the stack and are gathered
    # branch-aware with their full coefficients.
    jumped_own = list(range(i))
    coef_K = np.zeros((n, n + m))
    jump_coef_K = np.zeros((n, m))
    for j in range(n):
        coef_K[j, :n] = spp[:, j]
        coef_K[j, n:] = smp[:, j]
        coef_K[j, j] -= smm[i, i]
        for p in jumped_own:
            jump_coef_K[j, p] = coef_K[j, n + p]
            coef_K[j, n + p] = 0.0
    coef_L = np.zeros((m, n + m))
    jump_coef_L = np.zeros((m, m))
    for j in range(m):
        coef_L[j, :n] = spm[:, j]
        coef_L[j, n:] = smm[:, j]
        coef_L[j, n + j] -= smm[i, i]
        for p in jumped_own:
            jump_coef_L[j, p] = coef_L[j, n + p]
            coef_L[j, n + p] = 0.0

    Kcur = np.zeros((n, nx, nx))
    Lcur = np.zeros((m, nx, nx))
    history: list[float] = []
    for _ in range(max_iter):
        # omega_ip(x) samples for p > i from the current row-i L diagonals
        omega_rows = [
            (mu[i] - mu[p]) * np.diagonal(Lcur[p]) + smm[i, p] for p in range(i + 1, m)
        ]

        branches = {p: sided_extensions(Lcur[p], mu[p] / mu[i]) for p in jumped_own}

        stack = np.concatenate([Kcur, Lcur])
        Knew = np.empty_like(Kcur)
        for j in range(n):
            q = quad_K[j]
            integ = q.contract(stack, coef_K[j])
            for p in jumped_own:
                if jump_coef_K[j, p] != 0.0:
                    integ += jump_coef_K[j, p] * q.gather_branches(*branches[p], mu[p] / mu[i])
            for idx in range(m - i - 1):
                integ -= solved_K[j][idx] * q.gather_fn_of_x(omega_rows[idx])
            val = kdiag[j] + q.integrate(integ)
            for kind, p, cr in cross_K[j]:
                if kind == "own" and jump_coef_K[j, p] != 0.0:
                    val += cr.correction(*branches[p], jump_coef_K[j, p])
            Knew[j] = tri.scatter(val)

        stack = np.concatenate([Knew, Lcur])
        Lnew = np.empty_like(Lcur)
        for j in range(m):
            q = quad_L[j]
            integ = q.contract(stack, coef_L[j])
            for p in jumped_own:
                if jump_coef_L[j, p] != 0.0:
                    integ += jump_coef_L[j, p] * q.gather_branches(*branches[p], mu[p] / mu[i])
            for idx in range(m - i - 1):
                integ -= solved_L[j][idx] * q.gather_fn_of_x(omega_rows[idx])
            edge = np.zeros(tri.n_nodes)
            if not deltas[j].all():
                acc = np.zeros(tri.n_nodes)
                for k in range(n):
                    acc += lam[k] * q0[k, j] * _edge_interp(Knew[k][:, 0], chi_fs[j])
                edge = acc / mu[j]
            bval = np.where(deltas[j], bval_diag[j], edge)
            val = bval + q.integrate(integ)
            for kind, p, cr in cross_L[j]:
                if kind == "own":
                    if jump_coef_L[j, p] != 0.0:
                        val += cr.correction(*branches[p], jump_coef_L[j, p])
                else:
                    coef = -cr.omega_at_crossing(omega_rows[p - i - 1]) if cr.active else 0.0
                    val += cr.correction(*solved_branches[(p, j)], coef)
            Lnew[j] = tri.scatter(val)

        d = max(float(np.abs(Knew - Kcur).max()), float(np.abs(Lnew - Lcur).max()))
        history.append(d)
        Kcur, Lcur = Knew, Lnew
        if d < tol:
            return Kcur, Lcur, history

    raise ConvergenceError(
        f"kernel row {i + 1} did not converge: increment {history[-1]:.3e} "
        f"after {len(history)} sweeps (tol {tol:.1e})",
        history,
    )


def solve_control_kernels(
    system: HyperbolicSystem,
    grid: GridSpec | TriangleGrid,
    *,
    picard_tol: float | None = None,
    picard_max_iter: int | None = None,
) -> KernelSolution:
    """Solve the control kernel system on the triangle grid.

    Rows are processed i = m, ..., 1; row i sees rows p > i as frozen data
    (cascade), and its own unknowns enter linearly.  Within each Picard
    sweep the K fields are updated first and the L updates use the fresh K
    for both the axis boundary term and the in-domain coupling.

    Raises
    ------
    InvalidSystemError
        if the system fails validation.
    ConvergenceError
        if any row's sup-norm increment is still above tolerance at the
        iteration cap; the increment history rides on the exception.
    """
    require_valid(system)
    if isinstance(grid, GridSpec):
        tol = grid.picard_tol if picard_tol is None else picard_tol
        max_iter = grid.picard_max_iter if picard_max_iter is None else picard_max_iter
        tri = TriangleGrid(grid.kernel_nx)
    else:
        tri = grid
        tol = 1e-10 if picard_tol is None else picard_tol
        max_iter = 200 if picard_max_iter is None else picard_max_iter

    n, m = system.n, system.m
    nx = tri.nx

    K = np.zeros((m, n, nx, nx))
    L = np.zeros((m, m, nx, nx))
    iterations = []
    histories = []

    for i in range(m - 1, -1, -1):
        Krow, Lrow, history = _solve_row(system, tri, i, K, L, tol, max_iter)
        K[i] = Krow
        L[i] = Lrow
        iterations.append(len(history))
        histories.append(tuple(history))

    omega = omega_from_L(L, system, tri)
    return KernelSolution(
        grid=tri,
        K=K,
        L=L,
        omega=omega,
        iterations_used=tuple(iterations),
        increment_history=tuple(histories),
        final_increment=max(h[-1] for h in histories),
    )
