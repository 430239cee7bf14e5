"""Characteristic tracing on the triangle.

Frozen expected values come from solving the straight-line ODEs by hand:
for K the path (x - mu_i s, xi + lambda_j s) meets xi = x at
s = (x - xi)/(mu_i + lambda_j); for L the path (x - mu_i nu, xi - mu_j nu)
meets the diagonal iff j < i and mu_i xi - mu_j x >= 0, else the axis at
nu = xi / mu_j.
"""

from __future__ import annotations

import numpy as np
import pytest

from hypstab.triangle import (
    TriangleGrid,
    trace_characteristic_K,
    trace_characteristic_L,
    tri_interp,
)

from conftest import demo_system


def test_trace_K_starts_on_diagonal():
    c = trace_characteristic_K(demo_system(), 2, 1, 0.7, 0.7)
    assert c.s_f == 0.0
    assert c.x_f == 0.7


def test_trace_K_demo_corner():
    # mu_1 = lambda_1 = 1, from (1, 0): meet at s = 0.5, x_f = 0.5
    c = trace_characteristic_K(demo_system(), 1, 1, 1.0, 0.0)
    assert c.s_f == pytest.approx(0.5)
    assert c.x_f == pytest.approx(0.5)


def test_trace_K_terminates_on_hypotenuse():
    sys = demo_system()
    rng = np.random.default_rng(3)
    for _ in range(50):
        x = rng.random()
        xi = x * rng.random()
        i = rng.integers(1, 3)
        j = rng.integers(1, 3)
        c = trace_characteristic_K(sys, i, j, x, xi)
        y, z = c.sample(c.s_f)
        assert abs(y - z) < 1e-14
        ys, zs = c.sample(np.linspace(0, c.s_f, 7))
        assert np.all(zs <= ys + 1e-14)
        assert np.all((ys <= 1 + 1e-14) & (zs >= -1e-14))


def test_trace_L_equal_indices_exit_axis():
    c = trace_characteristic_L(demo_system(), 2, 2, 0.8, 0.5)
    assert not c.hits_diagonal
    assert c.zeta_f == 0.0
    assert c.nu_f == pytest.approx(0.5 / 2.0)


def test_trace_L_demo_diagonal_hit():
    # i=2, j=1: mu_2*xi - mu_1*x = 0.8 - 0.5 >= 0 -> diagonal at nu = 0.1
    c = trace_characteristic_L(demo_system(), 2, 1, 0.5, 0.4)
    assert c.hits_diagonal
    assert c.nu_f == pytest.approx(0.1)
    assert c.chi_f == pytest.approx(0.3)
    assert c.zeta_f == pytest.approx(0.3)


def test_trace_L_demo_axis_exit():
    # i=2, j=1 from (0.9, 0.1): 0.2 - 0.9 < 0 -> axis at nu = 0.1, chi = 0.7
    c = trace_characteristic_L(demo_system(), 2, 1, 0.9, 0.1)
    assert not c.hits_diagonal
    assert c.nu_f == pytest.approx(0.1)
    assert c.chi_f == pytest.approx(0.7)
    assert c.zeta_f == 0.0


def test_trace_rejects_outside_domain():
    sys = demo_system()
    with pytest.raises(ValueError):
        trace_characteristic_K(sys, 1, 1, 0.3, 0.5)
    with pytest.raises(ValueError):
        trace_characteristic_L(sys, 1, 1, 1.2, 0.1)


def test_triangle_grid_nodes():
    g = TriangleGrid(5)
    assert g.h == 0.25
    assert g.n_nodes == 15
    assert np.all(g.node_xi <= g.node_x)
    # diagonal nodes present
    assert np.sum(g.node_a == g.node_b) == 5


def test_tri_interp_exact_for_linear():
    g = TriangleGrid(9)
    f = g.empty_field()
    a, b = np.tril_indices(9)
    f[a, b] = 2.0 + 3.0 * g.axis[a] - 1.5 * g.axis[b]
    rng = np.random.default_rng(11)
    y = rng.random(200)
    z = y * rng.random(200)
    got = tri_interp(f, y, z)
    assert np.allclose(got, 2.0 + 3.0 * y - 1.5 * z, atol=1e-13)
