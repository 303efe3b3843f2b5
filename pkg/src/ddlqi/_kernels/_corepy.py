"""Pure-NumPy implementation of the hot numerical kernels.

This module mirrors the compiled extension ``_core`` exactly (same
algorithms, same status codes) and is selected automatically when the
extension is not available.  Both back ends solve small Lyapunov
equations by dense LU of the Kronecker-sum operator; the operator for
``A W + W A^T = -I`` is the transpose of the one for
``A^T P + P A = -Q``, so a single factorization serves both solves.
"""

import warnings

import numpy as np
import scipy.linalg

BACKEND = "python"

# eval_point / run_segment status codes (shared with the compiled core)
OK = 0
SINGULAR = 1  # Lyapunov operator singular or produced non-finite values
NOT_STABLE = 2  # controllability Gramian not positive definite
REJECTED = 3  # segment: proposed step failed monotonicity or stability


def lyap_solve(a, q):
    """Solve ``a^T P + P a + q = 0`` by dense Kronecker LU.

    Returns ``None`` when the operator is singular to working precision
    (i.e. ``a`` and ``-a`` share an eigenvalue).
    """
    a = np.asarray(a, dtype=float)
    q = np.asarray(q, dtype=float)
    d = a.shape[0]
    eye = np.eye(d)
    at = a.T
    m = np.kron(at, eye) + np.kron(eye, at)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(m, check_finite=False)
    except (scipy.linalg.LinAlgError, ValueError):
        return None
    if np.abs(np.diag(lu[0])).min() <= 1e-300:
        return None
    p = scipy.linalg.lu_solve(lu, -q.ravel(), check_finite=False)
    if not np.all(np.isfinite(p)):
        return None
    return p.reshape(d, d)


class FlowKernel:
    """Evaluator for the projected gradient flow of the data-driven
    linear-quadratic-integral cost.

    Parameters are the data matrices of the closed-loop parameterization:
    ``d`` maps a parameterizer ``G`` to the closed-loop matrix ``d @ G``,
    ``ub`` maps it to the negative gain, ``qa``/``r`` are the cost
    weights and ``nbasis`` is an orthonormal basis of the null space of
    the state-covariance block (the tangent space of the constraint).

    The projected gradient is evaluated in factored form
    ``Pi grad f = nbasis @ gam`` with
    ``gam = 2 ((ub @ nbasis)^T r (ub G) + (d @ nbasis)^T P) W``,
    which is algebraically identical to projecting the full gradient but
    avoids the catastrophic cancellation that occurs when the tangential
    component is many orders of magnitude smaller than the full gradient.
    """

    backend = BACKEND

    def __init__(self, d, ub, qa, r, nbasis):
        self.d = np.ascontiguousarray(d, dtype=float)
        self.ub = np.ascontiguousarray(ub, dtype=float)
        self.qa = np.ascontiguousarray(qa, dtype=float)
        self.r = np.ascontiguousarray(r, dtype=float)
        self.nbasis = np.ascontiguousarray(nbasis, dtype=float)
        self.na = self.d.shape[0]
        self.ns = self.d.shape[1]
        self.m = self.ub.shape[0]
        # Precomputed factors of the tangential gradient.
        self.untr = (self.ub @ self.nbasis).T @ self.r
        self.dnt = (self.d @ self.nbasis).T
        self._eye = np.eye(self.na)
        self._neg_vec_eye = -self._eye.ravel()

    def eval_point(self, g):
        """Evaluate cost, projected-gradient norm and flow direction at ``g``.

        Returns ``(status, cost, gnorm, dg)`` where ``dg`` is the flow
        right-hand side (the negative projected gradient) or ``None``
        on failure.
        """
        acl = self.d @ g
        ug = self.ub @ g
        qrhs = self.qa + ug.T @ (self.r @ ug)
        at = acl.T
        m = np.kron(at, self._eye) + np.kron(self._eye, at)
        try:
            # A singular operator is an expected outcome (reported via
            # the status code), not a condition to warn about.
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                lu = scipy.linalg.lu_factor(m, check_finite=False)
        except (scipy.linalg.LinAlgError, ValueError):
            return SINGULAR, np.nan, np.nan, None
        diag = np.abs(np.diag(lu[0]))
        if diag.min() <= 1e-300:
            return SINGULAR, np.nan, np.nan, None
        p = scipy.linalg.lu_solve(lu, -qrhs.ravel(), check_finite=False)
        p = p.reshape(self.na, self.na)
        p = 0.5 * (p + p.T)
        w = scipy.linalg.lu_solve(lu, self._neg_vec_eye, trans=1,
                                  check_finite=False)
        w = w.reshape(self.na, self.na)
        w = 0.5 * (w + w.T)
        cost = float(np.trace(p))
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(w))):
            return SINGULAR, np.nan, np.nan, None
        # Positive definiteness of W certifies that acl is Hurwitz.
        try:
            scipy.linalg.cholesky(w, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError:
            return NOT_STABLE, cost, np.nan, None
        gam = 2.0 * (self.untr @ ug + self.dnt @ p) @ w
        dg = -(self.nbasis @ gam)
        gnorm = float(np.linalg.norm(gam))
        return OK, cost, gnorm, dg

    def run_segment(self, g, dg1, h, max_steps, cost_prev, gnorm_prev):
        """Advance up to ``max_steps`` classical Runge-Kutta steps at fixed
        step size ``h``, in place.

        ``g`` is the current iterate and ``dg1`` the flow direction at
        ``g`` (both updated in place on every accepted step so the final
        evaluation is reused as the first stage of the next step).  A
        step is accepted only if every stage evaluation succeeds and the
        cost does not increase beyond roundoff slack.

        Returns ``(accepted, status, cost, gnorm)``; ``status`` is
        ``REJECTED`` when the caller should halve ``h`` and retry.
        """
        accepted = 0
        cost = cost_prev
        gnorm = gnorm_prev
        while accepted < max_steps:
            half = 0.5 * h
            st, _, _, f2 = self.eval_point(g + half * dg1)
            if st != OK:
                return accepted, REJECTED, cost, gnorm
            st, _, _, f3 = self.eval_point(g + half * f2)
            if st != OK:
                return accepted, REJECTED, cost, gnorm
            st, _, _, f4 = self.eval_point(g + h * f3)
            if st != OK:
                return accepted, REJECTED, cost, gnorm
            g_new = g + (h / 6.0) * (dg1 + 2.0 * f2 + 2.0 * f3 + f4)
            st, cost_new, gnorm_new, dg_new = self.eval_point(g_new)
            # The slack must sit above the roundoff noise of the cost
            # evaluation, otherwise sub-noise true progress near the
            # optimum is rejected and the step size collapses.
            if st != OK or cost_new > cost + 1e-10 * (1.0 + abs(cost)):
                return accepted, REJECTED, cost, gnorm
            g[...] = g_new
            dg1[...] = dg_new
            cost = cost_new
            gnorm = gnorm_new
            accepted += 1
        return accepted, OK, cost, gnorm
