"""Dense linear-algebra kernels: abscissa, exponential, Lyapunov and
Riccati solvers, rank and pseudo-inverse utilities."""

import numpy as np
import pytest
import scipy.linalg

from ddlqi import linalg
from ddlqi.errors import DimensionError, DomainError

from helpers import random_hurwitz, random_plant


def test_spectral_abscissa_known_values():
    assert linalg.spectral_abscissa(np.diag([-1.0, -3.0])) == -1.0
    assert linalg.spectral_abscissa(np.array([[2.0]])) == 2.0
    # complex pair: eigenvalues -0.5 +- 2j
    m = np.array([[-0.5, 2.0], [-2.0, -0.5]])
    assert linalg.spectral_abscissa(m) == pytest.approx(-0.5)


def test_is_hurwitz_and_margin():
    assert linalg.is_hurwitz(np.diag([-1.0, -2.0]))
    assert not linalg.is_hurwitz(np.diag([-1.0, 0.0]))
    assert not linalg.is_hurwitz(np.diag([-1.0, 0.5]))
    assert linalg.is_hurwitz(np.diag([-1.0, -2.0]), margin=0.5)
    assert not linalg.is_hurwitz(np.diag([-0.3, -2.0]), margin=0.5)


def test_matrix_exponential_rotation():
    # exp(t * [[0, 1], [-1, 0]]) is the rotation by angle t
    gen = np.array([[0.0, 1.0], [-1.0, 0.0]])
    t = 0.7
    expected = np.array([[np.cos(t), np.sin(t)],
                         [-np.sin(t), np.cos(t)]])
    np.testing.assert_allclose(linalg.matrix_exponential(gen, t), expected,
                               atol=1e-14)


def test_matrix_exponential_matches_scipy():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(1, 7))
        m = rng.normal(size=(n, n))
        t = float(rng.uniform(0.05, 2.0))
        ours = linalg.matrix_exponential(m, t)
        ref = scipy.linalg.expm(m * t)
        np.testing.assert_allclose(ours, ref, rtol=1e-15, atol=1e-15 * n)


def test_solve_lyapunov_residual_and_symmetry():
    rng = np.random.default_rng(21)
    for _ in range(50):
        a = random_hurwitz(rng)
        n = a.shape[0]
        factor = rng.normal(size=(n, n))
        q = factor @ factor.T + 0.1 * np.eye(n)
        p = linalg.solve_lyapunov(a, q)
        resid = a.T @ p + p @ a + q
        scale = 2 * np.linalg.norm(a) * np.linalg.norm(p) + np.linalg.norm(q)
        assert np.linalg.norm(resid) <= 1e-12 * scale
        np.testing.assert_allclose(p, p.T, atol=1e-12 * np.linalg.norm(p))
        # gramian of a Hurwitz loop with positive-definite load is PD
        assert np.linalg.eigvalsh(p).min() > 0


def test_solve_lyapunov_rejects_non_hurwitz():
    with pytest.raises(DomainError):
        linalg.solve_lyapunov(np.array([[0.3]]), np.eye(1))


def test_solve_care_scalar_oracle():
    # plant xdot = x + u with unit weights: P solves P^2 - 2P - 1 = 0,
    # stabilizing root P = 1 + sqrt(2), K = R^-1 B' P = P
    a = np.array([[1.0]])
    b = np.array([[1.0]])
    p, k = linalg.solve_care(a, b, np.eye(1), np.eye(1))
    assert p[0, 0] == pytest.approx(1.0 + np.sqrt(2.0), rel=1e-12)
    assert k[0, 0] == pytest.approx(1.0 + np.sqrt(2.0), rel=1e-12)


def test_solve_care_matches_scipy():
    rng = np.random.default_rng(31)
    done = 0
    while done < 15:
        model = random_plant(rng, p=1)
        n, m = model.n, model.m
        q = np.eye(n)
        r = np.eye(m)
        try:
            p_ours, k_ours = linalg.solve_care(model.a, model.b, q, r)
        except DomainError:
            continue
        p_ref = scipy.linalg.solve_continuous_are(model.a, model.b, q, r)
        np.testing.assert_allclose(p_ours, p_ref,
                                   rtol=1e-8, atol=1e-8 * np.linalg.norm(p_ref))
        np.testing.assert_allclose(k_ours, np.linalg.solve(r, model.b.T @ p_ours),
                                   atol=1e-12 * max(1, np.linalg.norm(k_ours)))
        assert linalg.is_hurwitz(model.a - model.b @ k_ours)
        done += 1


def test_stabilizing_gain_property():
    rng = np.random.default_rng(41)
    for _ in range(25):
        model = random_plant(rng)
        k = linalg.stabilizing_gain(model.a, model.b)
        assert linalg.is_hurwitz(model.a - model.b @ k)


def test_stabilizing_gain_margin_on_unstable_plant():
    # for a non-Hurwitz plant the eigenvalue-shift construction places
    # the closed-loop spectrum left of -(max |Re eig| + margin)
    rng = np.random.default_rng(43)
    for _ in range(10):
        model = random_plant(rng, n=3, m=2, abscissa_cap=np.inf)
        if linalg.is_hurwitz(model.a):
            continue
        beta = np.max(np.abs(np.linalg.eigvals(model.a).real)) + 2.0
        k = linalg.stabilizing_gain(model.a, model.b, margin=2.0)
        assert linalg.spectral_abscissa(model.a - model.b @ k) < -beta + 1e-6


def test_stabilizing_gain_returns_zero_for_stable_plant():
    a = np.diag([-1.0, -2.0])
    b = np.ones((2, 1))
    np.testing.assert_array_equal(linalg.stabilizing_gain(a, b),
                                  np.zeros((1, 2)))


def test_numerical_rank():
    assert linalg.numerical_rank(np.zeros((3, 4)))[0] == 0
    assert linalg.numerical_rank(np.eye(3))[0] == 3
    rank, svals, threshold = linalg.numerical_rank(
        np.outer([1.0, 2.0, 3.0], [4.0, 5.0]))
    assert rank == 1
    assert svals.shape == (2,)
    assert 0 < threshold < svals[0]
    # tiny singular value below the relative cutoff does not count
    assert linalg.numerical_rank(np.diag([1.0, 1e-14]))[0] == 1


def test_right_pseudoinverse():
    rng = np.random.default_rng(51)
    for _ in range(10):
        rows = int(rng.integers(1, 4))
        cols = rows + int(rng.integers(0, 3))
        m = rng.normal(size=(rows, cols))
        pinv = linalg.right_pseudoinverse(m)
        np.testing.assert_allclose(m @ pinv, np.eye(rows), atol=1e-10)


def test_psd_sqrt():
    rng = np.random.default_rng(61)
    for _ in range(10):
        n = int(rng.integers(1, 6))
        factor = rng.normal(size=(n, n))
        mat = factor @ factor.T
        root = linalg.psd_sqrt(mat)
        np.testing.assert_allclose(root @ root, mat,
                                   atol=1e-10 * max(1, np.linalg.norm(mat)))
        np.testing.assert_allclose(root, root.T, atol=1e-12)
    # rejects indefinite input
    with pytest.raises(DomainError):
        linalg.psd_sqrt(np.diag([1.0, -1.0]))


def test_as_matrix_validation():
    out = linalg.as_matrix([[1.0, 2.0]], "m")
    assert out.shape == (1, 2)
    with pytest.raises(DimensionError):
        linalg.as_matrix(np.zeros((2, 3)), "m", square=True)
    with pytest.raises(DimensionError):
        linalg.as_matrix(np.zeros((2, 2, 2)), "m")
