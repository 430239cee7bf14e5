"""Target couplings C-/C+ and the discrete Volterra algebra.

Covers: the composition rule against dense quadrature; zero forcing and
zero kernels give zero couplings; the solved C- satisfies its equation to
within 10x the iteration tolerance.
"""

from __future__ import annotations

import numpy as np

from hypstab.couplings import c_minus_residual, solve_target_couplings
from hypstab.kernels import solve_control_kernels
from hypstab.system import GridSpec, HyperbolicSystem
from hypstab.volterra import volterra_product

from conftest import demo_system


def test_volterra_product_against_dense_quadrature():
    # smooth 1x1 kernels: A = x + 2 xi, B = x * xi
    nx = 81
    ax = np.linspace(0, 1, nx)
    X, XI = np.meshgrid(ax, ax, indexing="ij")
    A = np.tril(X + 2 * XI)[None, None]
    B = np.tril(X * XI)[None, None]
    got = volterra_product(A, B, 1.0 / (nx - 1))[0, 0]
    # exact: int_xi^x (x + 2s)(s xi) ds
    def exact(x, xi):
        from numpy.polynomial import polynomial as P
        # integrand in s: xi*(x*s + 2 s^2)
        return xi * (x * (x**2 - xi**2) / 2 + 2 * (x**3 - xi**3) / 3)

    ref = np.tril(exact(X, XI))
    assert np.abs(got - ref).max() < 2e-4  # O(h^2) at h = 1/80


def test_zero_sigma_pm_gives_zero_couplings():
    base = demo_system()
    sys = HyperbolicSystem(
        lam=base.lam, mu=base.mu,
        sigma_pp=base.sigma_pp, sigma_pm=np.zeros((2, 2)),
        sigma_mp=base.sigma_mp, sigma_mm=base.sigma_mm,
        q0=base.q0, r1=base.r1,
    )
    kern = solve_control_kernels(sys, GridSpec(kernel_nx=33))
    tc = solve_target_couplings(kern, sys)
    assert np.all(tc.c_minus == 0.0)
    assert np.all(tc.c_plus == 0.0)


def test_zero_kernels_give_zero_couplings(demo):
    kern = solve_control_kernels(demo, GridSpec(kernel_nx=17))
    # forge zero kernels with the same grid
    from dataclasses import replace

    zeroed = replace(kern, K=np.zeros_like(kern.K), L=np.zeros_like(kern.L))
    tc = solve_target_couplings(zeroed, demo)
    assert np.all(tc.c_minus == 0.0)
    assert np.all(tc.c_plus == 0.0)


def test_demo_c_minus_residual(demo, demo_kernels_65):
    tol = 1e-10
    tc = solve_target_couplings(demo_kernels_65, demo, picard_tol=tol)
    assert c_minus_residual(tc, demo_kernels_65, demo) <= 10.0 * tol
    assert np.isfinite(tc.c_plus).all()
