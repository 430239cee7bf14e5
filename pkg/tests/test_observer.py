"""Observer kernels, coupling structure, and gains.

Covers: zero data gives the zero solution; diagonal data (all M entries,
the constructible half of N) matches the closed forms including the demo's
M_11(x,x) = -1/2; the x = 1 edge condition ties N to M through R1 (zero
edge when R1 = 0, corner excluded); the reflection is a pure reindexing of
the mirrored control solve; gains recompute bit-exactly from the kernels;
the nominally upper-triangular coupling formula evaluates to a diagonal
matrix while the stored lower-triangular coupling drives the dynamics;
D-/D+ zero cases and the D- Volterra residual.
"""

from __future__ import annotations

import numpy as np

from hypstab.observer import (
    auxiliary_control_system,
    d_minus_residual,
    solve_observer_kernels,
    target_couplings_observer,
)
from hypstab.system import GridSpec, HyperbolicSystem

from conftest import demo_system


def test_zero_data_zero_observer():
    z = np.zeros((2, 2))
    sys = HyperbolicSystem(
        lam=[1.0, 2.0], mu=[1.0, 2.0],
        sigma_pp=np.ones((2, 2)), sigma_pm=z, sigma_mp=np.ones((2, 2)), sigma_mm=z,
        q0=np.eye(2), r1=z,
    )
    obs = solve_observer_kernels(sys, GridSpec(kernel_nx=33))
    assert np.all(obs.M == 0.0)
    assert np.all(obs.N == 0.0)
    assert np.all(obs.p_plus == 0.0)
    assert np.all(obs.p_minus == 0.0)
    assert np.all(obs.omega_bar == 0.0)


def test_auxiliary_system_shape_and_validity():
    aux = auxiliary_control_system(demo_system())
    from hypstab.system import validate

    assert validate(aux).ok
    assert aux.sigma_pm.shape == (2, 2)
    # demo r1 = 0 makes the mirrored left reflection vanish
    assert np.all(aux.q0 == 0.0)


def test_observer_diagonal_data(demo, demo_observer_65):
    obs = demo_observer_65
    nxr = np.arange(obs.grid.nx)
    for i in range(demo.n):
        for j in range(demo.m):
            expected = -demo.sigma_pm[i, j] / (demo.mu[j] + demo.lam[i])
            assert np.abs(obs.M[i, j][nxr, nxr] - expected).max() < 1e-12
    # demo spot value: sigma_pm_11 = 1, mu_1 = lambda_1 = 1
    assert np.abs(obs.M[0, 0][nxr, nxr] + 0.5).max() < 1e-12
    # N diagonal on its imposed half i < j
    for i in range(demo.m):
        for j in range(i + 1, demo.m):
            expected = -demo.sigma_mm[i, j] / (demo.mu[j] - demo.mu[i])
            assert np.abs(obs.N[i, j][nxr, nxr] - expected).max() < 1e-12


def test_edge_condition_matches_r1(demo, demo_observer_65):
    # N(1, xi) = R1 M(1, xi); demo has R1 = 0, so the edge vanishes except
    # at the corner (1,1) where the diagonal datum wins.
    obs = demo_observer_65
    top = obs.grid.nx - 1
    for i in range(demo.m):
        for j in range(demo.m):
            edge = obs.N[i, j][top, :top]
            rhs = sum(demo.r1[i, k] * obs.M[k, j][top, :top] for k in range(demo.n))
            assert np.abs(edge - rhs).max() < 1e-12


def test_edge_condition_nonzero_r1():
    rng = np.random.default_rng(9)
    sys = HyperbolicSystem(
        lam=[1.0, 1.5], mu=[0.8, 1.7],
        sigma_pp=rng.normal(size=(2, 2)) * 0.4,
        sigma_pm=rng.normal(size=(2, 2)) * 0.4,
        sigma_mp=rng.normal(size=(2, 2)) * 0.4,
        sigma_mm=rng.normal(size=(2, 2)) * 0.4,
        q0=rng.normal(size=(2, 2)) * 0.5,
        r1=rng.normal(size=(2, 2)) * 0.5,
    )
    obs = solve_observer_kernels(sys, GridSpec(kernel_nx=33))
    top = obs.grid.nx - 1
    for i in range(2):
        for j in range(2):
            edge = obs.N[i, j][top, 1:top]
            rhs = sum(sys.r1[i, k] * obs.M[k, j][top, 1:top] for k in range(2))
            assert np.abs(edge - rhs).max() < 1e-12


def test_reflection_is_pure_reindexing(demo, demo_observer_65):
    obs = demo_observer_65
    aux = obs.auxiliary
    top = obs.grid.nx - 1
    rng = np.random.default_rng(2)
    for _ in range(60):
        a = rng.integers(0, obs.grid.nx)
        b = rng.integers(0, a + 1)
        i = rng.integers(0, demo.n)
        j = rng.integers(0, demo.m)
        assert obs.M[i, j][a, b] == aux.K[j, i][top - b, top - a]
        i2 = rng.integers(0, demo.m)
        assert obs.N[i2, j][a, b] == aux.L[j, i2][top - b, top - a]


def test_gain_consistency(demo, demo_observer_65):
    obs = demo_observer_65
    for i in range(demo.n):
        for j in range(demo.m):
            assert np.array_equal(obs.p_plus[i, j], -demo.mu[j] * obs.M[i, j][:, 0])
    for i in range(demo.m):
        for j in range(demo.m):
            assert np.array_equal(obs.p_minus[i, j], -demo.mu[j] * obs.N[i, j][:, 0])


def test_coupling_triangularity(demo, demo_observer_65):
    obs = demo_observer_65
    nxr = np.arange(obs.grid.nx)
    # stored coupling is lower-triangular with sigma_mm on the diagonal path
    for i in range(demo.m):
        for j in range(i + 1, demo.m):
            assert np.all(obs.omega_bar[i, j] == 0.0)
        assert np.allclose(obs.omega_bar[i, i], demo.sigma_mm[i, i])
    for i in range(demo.m):
        for j in range(i + 1):
            expected = (demo.mu[j] - demo.mu[i]) * obs.N[i, j][nxr, nxr] + demo.sigma_mm[i, j]
            assert np.allclose(obs.omega_bar[i, j], expected, atol=1e-13)
    # the above-diagonal version of the same formula vanishes identically:
    # the imposed N diagonal cancels sigma_mm there
    for i in range(demo.m):
        for j in range(i + 1, demo.m):
            formula = (demo.mu[j] - demo.mu[i]) * obs.N[i, j][nxr, nxr] + demo.sigma_mm[i, j]
            assert np.abs(formula).max() < 1e-12


def test_d_couplings_zero_cases(demo):
    # M = N = 0 forces D+ = D- = 0
    z = np.zeros((2, 2))
    sys = HyperbolicSystem(
        lam=[1.0, 2.0], mu=[1.0, 2.0],
        sigma_pp=np.ones((2, 2)), sigma_pm=z, sigma_mp=np.ones((2, 2)), sigma_mm=z,
        q0=np.eye(2), r1=z,
    )
    obs = solve_observer_kernels(sys, GridSpec(kernel_nx=17))
    dp, dm = target_couplings_observer(obs, sys)
    assert np.all(dp == 0.0) and np.all(dm == 0.0)

    # sigma_mp = 0 kills the forcing even with nonzero kernels
    sys2 = HyperbolicSystem(
        lam=[1.0, 2.0], mu=[1.0, 2.0],
        sigma_pp=np.ones((2, 2)), sigma_pm=np.ones((2, 2)),
        sigma_mp=z, sigma_mm=np.ones((2, 2)),
        q0=np.eye(2), r1=np.full((2, 2), 0.3),
    )
    obs2 = solve_observer_kernels(sys2, GridSpec(kernel_nx=17))
    assert np.abs(obs2.M).max() > 0.0
    dp2, dm2 = target_couplings_observer(obs2, sys2)
    assert np.all(dp2 == 0.0) and np.all(dm2 == 0.0)


def test_demo_d_minus_residual(demo, demo_observer_65):
    tol = 1e-10
    dp, dm = target_couplings_observer(demo_observer_65, demo, picard_tol=tol)
    assert d_minus_residual(dm, demo_observer_65, demo) <= 10.0 * tol
    assert np.isfinite(dp).all()
