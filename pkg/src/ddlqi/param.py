"""Data-driven parameterization of the augmented closed loop.

Given a covariance pack, every stabilizing augmented gain ``K`` has a
unique matrix representation ``G`` solving

    [[xbar], [ubar]] G = [[I_n, 0], [-K]]

and the closed-loop matrix of the integrator-augmented plant is then
reproduced *purely from data* as ``D G`` with the shift matrix
``D = [[xpbar], [-ybar]]``.  Controller synthesis can therefore search
over ``G`` subject to the affine constraint ``xbar G = [I_n, 0]``
without ever identifying the plant matrices.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, RankError, SingularMatrixError
from .linalg import as_matrix, right_pseudoinverse, spectral_abscissa
from .models import AugmentedModel
from .data import check_pe_rank

__all__ = [
    "stacked_data_matrix",
    "data_shift_matrix",
    "constraint_target",
    "gain_to_parameterizer",
    "parameterizer_to_gain",
    "closed_loop_from_data",
    "constraint_residual",
    "is_admissible",
    "is_stabilizing",
    "reconstruct_model",
    "stabilizing_gain_from_data",
    "tangent_basis",
    "constraint_projector",
]

#: Tolerance on the affine-constraint residual for admissibility tests.
CONSTRAINT_TOL = 1e-7


def stacked_data_matrix(pack):
    """The ``(n + m) x (n + m)`` stack ``[[xbar], [ubar]]`` that must be
    invertible under the data-richness condition."""
    return np.vstack([pack.xbar, pack.ubar])


def data_shift_matrix(pack):
    """The ``(n + p) x (n + m)`` stack ``[[xpbar], [-ybar]]`` mapping a
    parameterizer to the augmented closed-loop matrix."""
    return np.vstack([pack.xpbar, -pack.ybar])


def constraint_target(pack):
    """Right-hand side ``[I_n, 0]`` of the affine constraint on the
    parameterizer."""
    return np.hstack([np.eye(pack.n), np.zeros((pack.n, pack.p))])


def _require_rank(pack):
    report = check_pe_rank(pack)
    if not report.ok:
        raise RankError(
            "covariance pack is rank deficient: stacked covariance has "
            f"rank {report.rank} < {report.required}; the experiment is "
            "not informative enough",
            rank=report.rank, required=report.required,
            threshold=report.threshold)
    return report


def gain_to_parameterizer(pack, gain):
    """Unique parameterizer ``G`` representing the augmented gain.

    Solves the square linear system (LU with partial pivoting); the
    conditioning of the stacked covariance is checked up front and
    reported in the error message when the pack is rank deficient.
    """
    gain = as_matrix(gain, "gain")
    na = pack.n + pack.p
    if gain.shape != (pack.m, na):
        raise DimensionError(
            f"gain must have shape {(pack.m, na)}, got {gain.shape}")
    _require_rank(pack)
    stacked = stacked_data_matrix(pack)
    rhs = np.vstack([constraint_target(pack), -gain])
    try:
        return np.linalg.solve(stacked, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - rank guard
        raise SingularMatrixError(
            "stacked covariance is singular") from exc


def parameterizer_to_gain(pack, g):
    """Recover the augmented gain ``K = -ubar G``."""
    g = _check_g(pack, g)
    return -pack.ubar @ g


def closed_loop_from_data(pack, g):
    """Augmented closed-loop matrix ``D G`` assembled from data alone."""
    g = _check_g(pack, g)
    return data_shift_matrix(pack) @ g


def constraint_residual(pack, g):
    """Frobenius norm of ``xbar G - [I_n, 0]``."""
    g = _check_g(pack, g)
    return float(np.linalg.norm(pack.xbar @ g - constraint_target(pack)))


def is_admissible(pack, g, tol=CONSTRAINT_TOL):
    """True when ``G`` satisfies the affine data constraint."""
    return constraint_residual(pack, g) <= tol


def is_stabilizing(pack, g, tol=CONSTRAINT_TOL):
    """True when ``G`` is admissible and the data closed loop is
    Hurwitz."""
    if not is_admissible(pack, g, tol):
        return False
    return spectral_abscissa(closed_loop_from_data(pack, g)) < 0.0


def _check_g(pack, g):
    g = as_matrix(g, "g")
    expected = (pack.ns, pack.n + pack.p)
    if g.shape != expected:
        raise DimensionError(
            f"parameterizer must have shape {expected}, got {g.shape}")
    return g


def reconstruct_model(pack):
    """Recover ``(A, B, C)`` and the augmented model implied by the data.

    Inverting the stacked covariance in the exact-data identity
    ``[[xpbar], [-ybar]] = [[A, B], [-C, 0]] [[xbar], [ubar]]`` yields
    the unique plant consistent with the pack.  Returns
    ``(a, b, c, aug)`` where ``aug`` is the corresponding
    :class:`AugmentedModel`.  Used for diagnostics and for constructing
    initial stabilizing gains; the synthesis algorithms themselves never
    call this.
    """
    _require_rank(pack)
    n, m, p = pack.n, pack.m, pack.p
    stacked = stacked_data_matrix(pack)
    theta = np.linalg.solve(stacked.T, data_shift_matrix(pack).T).T
    a = theta[:n, :n]
    b = theta[:n, n:]
    c = -theta[n:, :n]
    a_aug = np.zeros((n + p, n + p))
    a_aug[:n, :n] = a
    a_aug[n:, :n] = -c
    b_aug = np.zeros((n + p, m))
    b_aug[:n, :] = b
    aug = AugmentedModel(a=a_aug, b=b_aug, n=n, m=m, p=p)
    return a, b, c, aug


def stabilizing_gain_from_data(pack, margin=1.0):
    """Some stabilizing augmented gain obtained from the data pack via
    the eigenvalue-shift construction on the reconstructed dynamics."""
    from .linalg import stabilizing_gain

    _, _, _, aug = reconstruct_model(pack)
    return stabilizing_gain(aug.a, aug.b, margin=margin)


def tangent_basis(pack):
    """Orthonormal basis of the null space of ``xbar`` (the tangent
    directions of the affine constraint), as columns."""
    _require_rank(pack)
    _, _, vt = np.linalg.svd(pack.xbar)
    return np.ascontiguousarray(vt[pack.n:, :].T)


def constraint_projector(pack):
    """Orthogonal projector onto the tangent space of the constraint,
    ``Pi = I - xbar^+ xbar`` with the right pseudoinverse of ``xbar``."""
    xdag = right_pseudoinverse(pack.xbar)
    ns = pack.ns
    return np.eye(ns) - xdag @ pack.xbar
