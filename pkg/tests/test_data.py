"""Excitation, exact simulation, the two sampling variants and the
sample-covariance pack."""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from ddlqi import data
from ddlqi.errors import DimensionError, DomainError

from helpers import random_plant


def test_random_excitation_shape_and_bounds():
    rng = np.random.default_rng(3)
    exc = data.random_excitation(2, 1.0, 0.02, 5.0, rng)
    assert exc.values.shape == (2, 50)
    assert exc.hold == 0.02
    assert np.all(np.abs(exc.values) <= 5.0)
    # duration not divisible by hold rounds the segment count up
    assert data.random_excitation(1, 0.05, 0.02, 1.0, rng).values.shape[1] == 3


def test_random_excitation_zero_amplitude_allowed():
    rng = np.random.default_rng(3)
    exc = data.random_excitation(1, 1.0, 0.1, 0.0, rng)
    np.testing.assert_array_equal(exc.values, np.zeros((1, 10)))
    with pytest.raises(DomainError):
        data.random_excitation(1, 1.0, 0.1, -1.0, rng)


def test_random_excitation_deterministic():
    a = data.random_excitation(2, 1.0, 0.05, 3.0, np.random.default_rng(42))
    b = data.random_excitation(2, 1.0, 0.05, 3.0, np.random.default_rng(42))
    np.testing.assert_array_equal(a.values, b.values)


def test_simulate_zoh_matches_ode_oracle():
    rng = np.random.default_rng(7)
    for _ in range(5):
        model = random_plant(rng, n=3, m=2)
        u = rng.normal(size=(2, 40))
        dt = 0.05
        states = data.simulate_zoh(model, u, dt)
        assert states.shape == (3, 41)

        def f(t, x):
            k = min(int(t / dt), u.shape[1] - 1)
            return model.a @ x + model.b @ u[:, k]

        sol = solve_ivp(f, (0.0, dt * u.shape[1]), np.zeros(3),
                        t_eval=np.arange(41) * dt, rtol=1e-11, atol=1e-11,
                        max_step=dt)
        np.testing.assert_allclose(states, sol.y, rtol=1e-6,
                                   atol=1e-7 * max(1, np.abs(states).max()))


def test_simulate_zoh_initial_state_and_validation():
    model = random_plant(np.random.default_rng(9), n=2, m=1)
    x0 = np.array([1.0, -2.0])
    states = data.simulate_zoh(model, np.zeros((1, 5)), 0.1, x0=x0)
    np.testing.assert_array_equal(states[:, 0], x0)
    with pytest.raises(DimensionError):
        data.simulate_zoh(model, np.zeros((3, 5)), 0.1)
    with pytest.raises(DomainError):
        data.simulate_zoh(model, np.zeros((1, 5)), -0.1)


def test_derivative_batch_satisfies_model_identity():
    # point samples must satisfy xp = A x + B u exactly (the collector
    # evaluates the true vector field at the sampling instants)
    rng = np.random.default_rng(13)
    for _ in range(8):
        model = random_plant(rng)
        exc = data.random_excitation(model.m, 2.0, 0.05, 2.0, rng)
        batch = data.collect_derivative_data(model, exc, 0.1)
        resid = batch.xp - (model.a @ batch.x + model.b @ batch.u)
        scale = 1.0 + np.abs(batch.xp).max()
        assert np.abs(resid).max() <= 1e-10 * scale
        np.testing.assert_allclose(batch.y, model.c @ batch.x, atol=1e-12)


def test_integral_batch_satisfies_model_identity():
    # window integrals must satisfy the increment identity
    # x(t+w) - x(t) = A int(x) + B int(u) exactly
    rng = np.random.default_rng(15)
    for _ in range(8):
        model = random_plant(rng)
        exc = data.random_excitation(model.m, 2.0, 0.05, 2.0, rng)
        batch = data.collect_integral_data(model, exc, 0.1, 0.1)
        resid = batch.xp - (model.a @ batch.x + model.b @ batch.u)
        scale = 1.0 + np.abs(batch.xp).max()
        assert np.abs(resid).max() <= 1e-9 * scale


def test_integral_batch_matches_fine_quadrature():
    # the stored regressors are true window integrals: compare one
    # window against dense trapezoidal quadrature of the state
    rng = np.random.default_rng(19)
    model = random_plant(rng, n=2, m=1)
    exc = data.random_excitation(model.m, 1.0, 0.1, 1.0, rng)
    batch = data.collect_integral_data(model, exc, 0.1, 0.1)
    fine = 2000
    dt = 0.1 / fine
    u_fine = np.repeat(exc.values, int(round(0.1 / dt)), axis=1)
    states = data.simulate_zoh(model, u_fine, dt)
    x_int = np.trapezoid(states[:, :fine + 1], dx=dt, axis=1)
    np.testing.assert_allclose(batch.x[:, 0], x_int, rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(batch.xp[:, 0],
                               states[:, fine] - states[:, 0],
                               rtol=1e-6, atol=1e-8)


def test_batch_validation():
    with pytest.raises(DomainError):
        data.DataBatch(np.zeros((2, 5)), np.zeros((1, 5)), np.zeros((2, 5)),
                       np.zeros((1, 5)), "bogus", 0.1, None)
    with pytest.raises(DimensionError):
        data.DataBatch(np.zeros((2, 5)), np.zeros((1, 4)), np.zeros((2, 5)),
                       np.zeros((1, 5)), "derivative", 0.1, None)
    with pytest.raises(DomainError):
        data.DataBatch(np.zeros((2, 5)), np.zeros((1, 5)), np.zeros((2, 5)),
                       np.zeros((1, 5)), "integral", 0.1, None)


def test_build_covariances_definition():
    rng = np.random.default_rng(29)
    model = random_plant(rng, n=2, m=1)
    exc = data.random_excitation(1, 2.0, 0.05, 2.0, rng)
    batch = data.collect_derivative_data(model, exc, 0.1)
    pack = data.build_covariances(batch)
    t = batch.num_samples
    stack = np.vstack([batch.u, batch.x])
    np.testing.assert_allclose(pack.xbar, batch.x @ stack.T / t, atol=1e-14)
    np.testing.assert_allclose(pack.ubar, batch.u @ stack.T / t, atol=1e-14)
    np.testing.assert_allclose(pack.xpbar, batch.xp @ stack.T / t,
                               atol=1e-14)
    np.testing.assert_allclose(pack.ybar, batch.y @ stack.T / t, atol=1e-14)
    assert pack.ns == model.n + model.m
    assert pack.num_samples == t


def test_pe_rank_pass_and_fail():
    rng = np.random.default_rng(31)
    model = random_plant(rng, n=2, m=1)
    good = data.random_excitation(1, 2.0, 0.05, 2.0, rng)
    pack = data.build_covariances(
        data.collect_derivative_data(model, good, 0.1))
    report = data.check_pe_rank(pack)
    assert report.ok and report.rank == report.required == 3
    assert report.condition >= 1.0

    silent = data.random_excitation(1, 2.0, 0.05, 0.0, rng)
    flat = data.build_covariances(
        data.collect_derivative_data(model, silent, 0.1))
    report = data.check_pe_rank(flat)
    assert not report.ok and report.rank < report.required


def test_pe_sample_bound():
    # at least n + m samples are necessary for the stacked covariance
    # to have full rank
    assert data.pe_sample_bound(2, 1) >= 3
    assert data.pe_sample_bound(4, 2) >= 6


def test_collection_deterministic():
    model = random_plant(np.random.default_rng(1), n=2, m=1)
    packs = []
    for _ in range(2):
        rng = np.random.default_rng(77)
        exc = data.random_excitation(1, 1.0, 0.02, 100.0, rng)
        packs.append(data.build_covariances(
            data.collect_integral_data(model, exc, 0.1, 0.1)))
    np.testing.assert_array_equal(packs[0].xbar, packs[1].xbar)
    np.testing.assert_array_equal(packs[0].xpbar, packs[1].xpbar)
