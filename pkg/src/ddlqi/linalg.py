"""Dense matrix kernels used throughout the package.

Conventions
-----------
* ``solve_lyapunov(acl, qrhs)`` solves the *continuous-time* equation
  ``acl^T P + P acl + qrhs = 0``; the coefficient matrix must be Hurwitz.
  Gramian-type equations ``A W + W A^T + Q = 0`` are obtained by passing
  the transpose.
* ``solve_care`` solves ``A^T P + P A - P B R^{-1} B^T P + Q = 0`` by
  Newton's method (Kleinman iteration), each step being one Lyapunov
  solve, and returns both the stabilizing solution and the optimal gain
  ``K = R^{-1} B^T P``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from . import _kernels
from .errors import (
    ConvergenceError,
    DimensionError,
    DomainError,
    NumericalError,
    RankError,
    SingularMatrixError,
)

__all__ = [
    "as_matrix",
    "spectral_abscissa",
    "is_hurwitz",
    "matrix_exponential",
    "solve_lyapunov",
    "solve_care",
    "stabilizing_gain",
    "right_pseudoinverse",
    "numerical_rank",
    "psd_sqrt",
]

#: Relative threshold used for all numerical rank decisions.
RANK_RTOL = 1e-10


def as_matrix(value, name="matrix", square=False):
    """Validate ``value`` as a 2-D float array with finite entries."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    if square and arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    return arr


def spectral_abscissa(m):
    """Largest real part of the eigenvalues of a square matrix."""
    m = as_matrix(m, "m", square=True)
    if m.size == 0:
        raise DimensionError("spectral abscissa of an empty matrix")
    try:
        eig = np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue iteration failed: {exc}") from exc
    return float(eig.real.max())


def is_hurwitz(m, margin=0.0):
    """True when every eigenvalue satisfies ``Re(lambda) < -margin``."""
    if margin < 0:
        raise DomainError("margin must be >= 0")
    return spectral_abscissa(m) < -margin


def matrix_exponential(m, t=1.0):
    """Matrix exponential ``exp(m * t)``."""
    m = as_matrix(m, "m", square=True)
    out = scipy.linalg.expm(m * float(t))
    if not np.all(np.isfinite(out)):
        raise NumericalError("matrix exponential overflowed")
    return out


def solve_lyapunov(acl, qrhs):
    """Solve ``acl^T P + P acl + qrhs = 0`` for a Hurwitz ``acl``.

    Implemented as a dense LU solve of the Kronecker-sum operator, with
    iterative refinement until the backward residual satisfies
    ``||acl^T P + P acl + qrhs||_F <= 1e-10 * (1 + ||P||_F ||acl||_F)``.
    """
    acl = as_matrix(acl, "acl", square=True)
    qrhs = as_matrix(qrhs, "qrhs", square=True)
    if qrhs.shape != acl.shape:
        raise DimensionError(
            f"qrhs shape {qrhs.shape} does not match acl shape {acl.shape}")
    if not is_hurwitz(acl):
        raise DomainError(
            "Lyapunov coefficient matrix is not Hurwitz "
            f"(spectral abscissa {spectral_abscissa(acl):.3e})")
    p = _kernels.lyap_solve(acl, qrhs)
    if p is None:
        raise SingularMatrixError("Lyapunov operator is singular")
    symmetric_input = np.array_equal(qrhs, qrhs.T)
    if symmetric_input:
        p = 0.5 * (p + p.T)
    scale = 1.0 + np.linalg.norm(p) * np.linalg.norm(acl)
    for _ in range(3):
        residual = acl.T @ p + p @ acl + qrhs
        if np.linalg.norm(residual) <= 1e-10 * scale:
            return p
        correction = _kernels.lyap_solve(acl, residual)
        if correction is None:
            break
        p = p + correction
        if symmetric_input:
            p = 0.5 * (p + p.T)
        scale = 1.0 + np.linalg.norm(p) * np.linalg.norm(acl)
    residual = acl.T @ p + p @ acl + qrhs
    if np.linalg.norm(residual) > 1e-10 * scale:
        raise NumericalError(
            "Lyapunov solve did not reach the target residual "
            f"({np.linalg.norm(residual):.3e} vs {1e-10 * scale:.3e})")
    return p


def _pbh_rank_ok(a, rows_or_cols, eig, input_side):
    """PBH test at one eigenvalue: full rank of [eig*I - a, b] (input
    side) or [[eig*I - a], [c]] (output side)."""
    n = a.shape[0]
    shift = eig * np.eye(n) - a
    if input_side:
        pencil = np.hstack([shift, rows_or_cols.astype(complex)])
    else:
        pencil = np.vstack([shift, rows_or_cols.astype(complex)])
    return np.linalg.matrix_rank(pencil, tol=None) == n


def _unstable_eigenvalues(a, band=1e-9):
    """Eigenvalues with real part >= -band (closed right half plane up to
    a numerical margin)."""
    eig = np.linalg.eigvals(a)
    return [complex(ev) for ev in eig if ev.real >= -band]


def stabilizing_gain(a, b, margin=1.0, max_tries=6):
    """Construct some gain ``K`` with ``a - b @ K`` Hurwitz.

    Uses the eigenvalue-shift construction: for a shift ``beta`` with
    ``-(a + beta I)`` Hurwitz, solve
    ``(a + beta I) Z + Z (a + beta I)^T = 2 b b^T`` and take
    ``K = b^T Z^{-1}``, which places the closed-loop spectrum left of
    ``-beta``.  The smallest admissible shift
    (``max |Re eig| + margin``) is tried first — larger shifts produce
    needlessly large gains and stiff loops — and is doubled until the
    resulting closed loop is verified Hurwitz.
    """
    a = as_matrix(a, "a", square=True)
    b = as_matrix(b, "b")
    if b.shape[0] != a.shape[0]:
        raise DimensionError("a and b have incompatible row counts")
    if is_hurwitz(a):
        return np.zeros((b.shape[1], a.shape[0]))
    try:
        eigs = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("eigenvalue computation failed") from exc
    beta = float(np.max(np.abs(eigs.real))) + margin
    for _ in range(max_tries):
        shifted = -(a + beta * np.eye(a.shape[0]))
        if is_hurwitz(shifted):
            z = _kernels.lyap_solve(shifted.T, 2.0 * b @ b.T)
            if z is not None:
                z = 0.5 * (z + z.T)
                try:
                    k = np.linalg.solve(z.T, b).T
                except np.linalg.LinAlgError:
                    k = None
                if k is not None and np.all(np.isfinite(k)) and \
                        is_hurwitz(a - b @ k):
                    return k
        beta *= 2.0
    raise ConvergenceError(
        "could not construct a stabilizing gain; the pair may not be "
        "controllable enough for the eigenvalue-shift construction")


def solve_care(a, b, q, r, tol=1e-12, max_iter=100, initial_gain=None):
    """Stabilizing solution of the continuous algebraic Riccati equation.

    Returns ``(P, K)`` with ``K = R^{-1} B^T P``.  Newton-Kleinman
    iteration: starting from a stabilizing gain (constructed by
    :func:`stabilizing_gain` unless supplied), each step solves one
    Lyapunov equation and is damped when needed to preserve stability
    and cost decrease.
    """
    a = as_matrix(a, "a", square=True)
    b = as_matrix(b, "b")
    q = as_matrix(q, "q", square=True)
    r = as_matrix(r, "r", square=True)
    n = a.shape[0]
    m = b.shape[1]
    if b.shape[0] != n or q.shape[0] != n or r.shape[0] != m:
        raise DimensionError("inconsistent CARE dimensions")
    # Preconditions: stabilizability of (a, b) and detectability of
    # (a, q^{1/2}), both checked by eigenvector tests on the closed
    # right half plane.
    for ev in _unstable_eigenvalues(a):
        if not _pbh_rank_ok(a, b, ev, input_side=True):
            raise DomainError(
                f"(a, b) is not stabilizable: eigenvalue {ev:.6g} is "
                "uncontrollable")
    q_half = psd_sqrt(q)
    for ev in _unstable_eigenvalues(a):
        if not _pbh_rank_ok(a, q_half, ev, input_side=False):
            raise DomainError(
                f"(a, q^(1/2)) is not detectable: eigenvalue {ev:.6g} is "
                "unobservable")

    if initial_gain is None:
        k = stabilizing_gain(a, b)
    else:
        k = as_matrix(initial_gain, "initial_gain")
        if k.shape != (m, n):
            raise DimensionError(
                f"initial_gain must have shape {(m, n)}, got {k.shape}")
        if not is_hurwitz(a - b @ k):
            raise DomainError("initial_gain does not stabilize the plant")

    r_chol = scipy.linalg.cho_factor(r)

    def closed_cost(gain):
        p_gain = solve_lyapunov(a - b @ gain, q + gain.T @ r @ gain)
        return float(np.trace(p_gain)), p_gain

    cost, p = closed_cost(k)
    scale = _care_residual_scale(a, b, q, p, r_chol)
    for iteration in range(max_iter):
        residual = _care_residual(a, b, q, p, r_chol)
        scale = _care_residual_scale(a, b, q, p, r_chol)
        if np.linalg.norm(residual) <= tol * scale:
            return p, scipy.linalg.cho_solve(r_chol, b.T @ p)
        k_next = scipy.linalg.cho_solve(r_chol, b.T @ p)
        # Damped update: full Newton steps can overshoot the stability
        # region from rough initial gains.
        tau = 1.0
        for _ in range(60):
            k_try = k + tau * (k_next - k)
            if is_hurwitz(a - b @ k_try):
                cost_try, p_try = closed_cost(k_try)
                if cost_try <= cost + 1e-12 * (1.0 + abs(cost)):
                    k, cost, p = k_try, cost_try, p_try
                    break
            tau *= 0.5
        else:
            raise ConvergenceError(
                "Riccati iteration stalled: no acceptable damped step",
                iterations=iteration)
    residual = _care_residual(a, b, q, p, r_chol)
    if np.linalg.norm(residual) <= tol * scale:
        return p, scipy.linalg.cho_solve(r_chol, b.T @ p)
    raise ConvergenceError(
        f"Riccati iteration did not converge in {max_iter} iterations "
        f"(residual {np.linalg.norm(residual):.3e})",
        iterations=max_iter)


def _care_residual(a, b, q, p, r_chol):
    bp = b.T @ p
    return a.T @ p + p @ a - bp.T @ scipy.linalg.cho_solve(r_chol, bp) + q


def _care_residual_scale(a, b, q, p, r_chol):
    bp = b.T @ p
    return 1.0 + np.linalg.norm(a.T @ p) + np.linalg.norm(p @ a) + \
        np.linalg.norm(bp.T @ scipy.linalg.cho_solve(r_chol, bp)) + \
        np.linalg.norm(q)


def numerical_rank(m, rtol=RANK_RTOL):
    """Numerical rank of ``m`` with the package-wide threshold.

    Returns ``(rank, singular_values, threshold)`` where the threshold is
    ``max(m.shape) * sigma_max * rtol``.
    """
    m = as_matrix(m, "m")
    svals = np.linalg.svd(m, compute_uv=False)
    if svals.size == 0:
        return 0, svals, 0.0
    threshold = max(m.shape) * svals[0] * rtol
    rank = int(np.count_nonzero(svals > threshold))
    return rank, svals, threshold


def right_pseudoinverse(m):
    """Right inverse ``m^T (m m^T)^{-1}`` of a full-row-rank matrix.

    Computed through the singular value decomposition (identical to the
    normal-equations formula in exact arithmetic, numerically stabler).
    Raises :class:`RankError` when the rows are not independent.
    """
    m = as_matrix(m, "m")
    rows = m.shape[0]
    u, svals, vt = np.linalg.svd(m, full_matrices=False)
    threshold = max(m.shape) * (svals[0] if svals.size else 0.0) * RANK_RTOL
    rank = int(np.count_nonzero(svals > threshold))
    if rank < rows:
        raise RankError(
            f"matrix does not have full row rank ({rank} < {rows})",
            rank=rank, required=rows, threshold=threshold)
    return (vt.T / svals) @ u.T


def psd_sqrt(m, tol=1e-10):
    """Symmetric square root of a positive semidefinite matrix."""
    m = as_matrix(m, "m", square=True)
    sym = 0.5 * (m + m.T)
    if np.linalg.norm(m - sym) > tol * (1.0 + np.linalg.norm(m)):
        raise DomainError("matrix is not symmetric")
    evals, evecs = np.linalg.eigh(sym)
    bound = -tol * max(1.0, float(evals[-1]) if evals.size else 1.0)
    if evals.size and evals[0] < bound:
        raise DomainError(
            f"matrix is not positive semidefinite (min eigenvalue "
            f"{evals[0]:.3e})")
    clipped = np.clip(evals, 0.0, None)
    return (evecs * np.sqrt(clipped)) @ evecs.T
