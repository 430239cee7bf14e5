"""Shared fixtures: the 2+2 demo system and solved kernels at test resolutions."""

from __future__ import annotations

import numpy as np
import pytest

from hypstab.system import GridSpec, HyperbolicSystem


def demo_system() -> HyperbolicSystem:
    """The 2+2 demo plant: unit couplings, identity left reflection, free right end."""
    ones = np.ones((2, 2))
    return HyperbolicSystem(
        lam=[1.0, 2.0],
        mu=[1.0, 2.0],
        sigma_pp=ones,
        sigma_pm=ones,
        sigma_mp=ones,
        sigma_mm=ones,
        q0=np.eye(2),
        r1=np.zeros((2, 2)),
    )


@pytest.fixture(scope="session")
def demo():
    return demo_system()


@pytest.fixture(scope="session")
def demo_kernels_65(demo):
    from hypstab.kernels import solve_control_kernels

    return solve_control_kernels(demo, GridSpec(kernel_nx=65))


@pytest.fixture(scope="session")
def demo_kernels_129(demo):
    from hypstab.kernels import solve_control_kernels

    return solve_control_kernels(demo, GridSpec(kernel_nx=129))


@pytest.fixture(scope="session")
def demo_observer_65(demo):
    from hypstab.observer import solve_observer_kernels

    return solve_observer_kernels(demo, GridSpec(kernel_nx=65))


def random_system(
    rng: np.random.Generator, n: int, m: int, coupling: float = 1.0, min_mu_ratio: float = 1.0
) -> HyperbolicSystem:
    """Random validated system with sorted speeds and O(coupling) blocks.

    min_mu_ratio > 1 keeps the leftward speeds well separated; near-tied
    mu pairs are valid but make the kernels nearly singular (their jump
    magnitudes scale with 1/(mu_i - mu_j)).
    """
    lam = np.sort(rng.uniform(0.5, 3.0, size=n))
    mu = np.sort(rng.uniform(0.5, 3.0, size=m))
    while np.any(np.diff(mu) < 1e-3) or (
        m > 1 and np.any(mu[1:] / mu[:-1] < min_mu_ratio)
    ):
        mu = np.sort(rng.uniform(0.5, 3.0, size=m))
    u = lambda shape: rng.uniform(-coupling, coupling, size=shape)
    return HyperbolicSystem(
        lam=lam,
        mu=mu,
        sigma_pp=u((n, n)),
        sigma_pm=u((n, m)),
        sigma_mp=u((m, n)),
        sigma_mm=u((m, m)),
        q0=u((n, m)),
        r1=u((m, n)),
    )
