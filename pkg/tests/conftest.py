"""Shared builders for small random problems and solver states."""
from __future__ import annotations

import numpy as np
import pytest

from rsma_isac.scene import SystemConfig, default_radar_scene, generate_channel_set, make_rng
from rsma_isac.solver import Problem, SolverOptions, SolverState, _zero_state, sensing_anchor


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_problem(rng, n_tx=3, k=2, n_rf=None, common=True, gamma0=0.5, n_clutter=2,
                   power=1.0, fully_digital=False) -> Problem:
    """Normalised-units problem with O(1) channels and a rank-one target form."""
    n_rf = n_rf or min(n_tx, k + 1)
    a0 = crandn(rng, n_tx)
    phi = np.outer(a0, a0.conj())
    cl = crandn(rng, n_tx, n_clutter)
    omega = 0.3 * cl @ cl.conj().T
    return Problem(
        channels=crandn(rng, k, n_tx),
        noise=rng.uniform(0.5, 1.5, k),
        weights=rng.uniform(0.5, 1.5, k),
        power=power,
        phi=0.5 * (phi + phi.conj().T),
        omega=0.5 * (omega + omega.conj().T),
        gamma0=gamma0,
        echo_noise=0.2,
        n_rf=n_tx if fully_digital else n_rf,
        common=common,
        fully_digital=fully_digital,
    )


def random_state(problem: Problem, rng, rho=None, multipliers=True) -> SolverState:
    """Random, non-consensus state with current equalizers/weights filled in."""
    n_tx, k = problem.n_tx, problem.n_users
    analog = np.exp(2j * np.pi * rng.random((n_tx, problem.n_rf)))
    digital = 0.3 * crandn(rng, problem.n_rf, k + 1)
    if not problem.common:
        digital[:, 0] = 0.0
    state = _zero_state(problem, analog, digital, rho if rho is not None else rng.uniform(0.2, 1.0))
    state.X = state.X + 0.1 * crandn(rng, n_tx, k + 1)
    state.Y = state.X + 0.1 * crandn(rng, n_tx, k + 1)
    state.Z = state.X[None] + 0.1 * crandn(rng, state.Z.shape[0], n_tx, k + 1)
    state.q = rng.uniform(0.0, 0.5, state.q.shape)
    state.common_rates = rng.uniform(0.0, 0.5, k) if problem.common else np.zeros(k)
    if multipliers:
        state.lam_y = 0.1 * crandn(rng, n_tx, k + 1)
        state.lam_z = 0.1 * crandn(rng, *state.Z.shape)
        state.lam_f = 0.1 * crandn(rng, n_tx, k + 1)
        state.lam_q = 0.1 * rng.standard_normal(state.q.shape)
    state.eq_common = 0.5 * crandn(rng, k)
    state.eq_private = 0.5 * crandn(rng, k)
    state.wt_common = rng.uniform(0.5, 3.0, k)
    state.wt_private = rng.uniform(0.5, 3.0, k)
    state.anchor = sensing_anchor(problem) if np.isfinite(problem.power) else state.X.copy()
    return state


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def default_instance():
    """Default 32x32, K = 4 system with a HighCorrelation draw (seed 0)."""
    cfg = SystemConfig()
    scene = default_radar_scene(cfg)
    channels = generate_channel_set(cfg, "HighCorrelation", make_rng(0))
    return cfg, scene, channels


@pytest.fixture
def fast_opts():
    return SolverOptions()
