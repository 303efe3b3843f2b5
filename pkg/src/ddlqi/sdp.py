"""Data-driven controller synthesis as a semidefinite program.

The optimal tracking gain is the solution of

    minimize    trace(Qa W) + trace(S)
    subject to  [[S,            R^{1/2} ubar Z],
                 [Z^T ubar^T R^{1/2},        W]]  >= 0
                D Z + Z^T D^T + I  <= 0
                [I_n, 0] W = xbar Z
                W >= eps_w I

over ``(W, Z, S)``, assembled *entirely from data*; the gain is
recovered as ``K = -ubar Z W^{-1}``.  At the optimum the objective
equals the optimal quadratic tracking cost.

The program is solved by a self-contained primal log-barrier
interior-point method: for an increasing barrier weight ``t`` the
equality-constrained analytic center is tracked by damped Newton steps
(dense KKT systems), and ``nu / t`` with ``nu`` the total cone dimension
bounds the suboptimality of each center, providing the reported duality
gap estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    ConvergenceError,
    DimensionError,
    DomainError,
    InfeasibleError,
    NumericalError,
)
from .linalg import as_matrix, psd_sqrt, solve_lyapunov, spectral_abscissa
from .param import (
    data_shift_matrix,
    gain_to_parameterizer,
    is_stabilizing,
    stabilizing_gain_from_data,
)

__all__ = [
    "SdpOptions",
    "SdpProblem",
    "SdpSolution",
    "assemble_sdp",
    "solve_sdp",
    "extract_gain",
    "feasibility_report",
    "FeasibilityReport",
]

# Relative singular-value cutoff for the rank-revealing KKT solve.  Set
# a small multiple of machine epsilon: high barrier weights legitimately
# produce curvatures many orders below the dominant ones, and a looser
# cutoff would discard them (see _newton_direction).
_KKT_RCOND = 4e-15


@dataclass(frozen=True)
class SdpOptions:
    """Interior-point tuning parameters.

    ``t0`` is the initial barrier weight; the default ``None`` picks it
    automatically as ``nu / objective(x0)`` (clipped to ``[1e-6, 1]``),
    which keeps the first centering problem cheap even when the phase-1
    point has a large objective value.
    """

    tol: float = 1e-8
    max_outer: int = 40
    mu: float = 10.0
    newton_tol: float = 1e-6
    max_newton: int = 60
    eps_w: float = 1e-8
    t0: float | None = None
    initial_gain: np.ndarray | None = None

    def __post_init__(self):
        if self.tol <= 0:
            raise DomainError("tol must be positive")
        if self.mu <= 1:
            raise DomainError("mu must exceed 1")
        if self.max_outer < 1 or self.max_newton < 1:
            raise DomainError("iteration budgets must be >= 1")
        if self.eps_w <= 0:
            raise DomainError("eps_w must be positive")
        if self.t0 is not None and self.t0 <= 0:
            raise DomainError("t0 must be positive")


class SdpProblem:
    """Assembled barrier program over ``x = [svec W; vec Z; svec S]``.

    Holds the affine basis matrices of the three cone blocks, the
    equality-constraint matrix and the cost vector.  Every matrix-valued
    quantity is an affine function ``F0 + sum_k x_k F_k`` of the packed
    variable vector.
    """

    def __init__(self, pack, weights, eps_w):
        self.pack = pack
        self.eps_w = float(eps_w)
        n, m, p = pack.n, pack.m, pack.p
        na, ns = n + p, n + m
        self.n, self.m, self.p, self.na, self.ns = n, m, p, na, ns
        self.q_w = na * (na + 1) // 2
        self.q_z = ns * na
        self.q_s = m * (m + 1) // 2
        self.q = self.q_w + self.q_z + self.q_s
        self.r_half = psd_sqrt(weights.r)
        self.qa = weights.augmented_state_weight()
        # Normalize each regressor channel to unit sample RMS.  This is
        # an exact reparameterization (the rows of the variable Z are
        # rescaled accordingly; products like ubar Z are unchanged) that
        # keeps the floating-point scales of the cone blocks tame even
        # for data collected in wildly mismatched physical units.
        variances = np.concatenate([
            np.diag(pack.ubar[:, :m]), np.diag(pack.xbar[:, m:])])
        self.channel_scale = 1.0 / np.sqrt(np.clip(variances, 1e-300, None))
        self.d = data_shift_matrix(pack) * self.channel_scale
        self.ubar = pack.ubar * self.channel_scale
        self.xbar = pack.xbar * self.channel_scale

        self._w_pairs = [(i, j) for i in range(na) for j in range(i, na)]
        self._s_pairs = [(i, j) for i in range(m) for j in range(i, m)]

        self.blocks = self._build_blocks()
        self.equality = self._build_equality()
        self.cost = self._build_cost()
        #: total cone dimension; nu / t bounds the centering suboptimality
        self.nu = (m + na) + na + na

    # -- variable packing ------------------------------------------------

    def pack_vars(self, w, z, s):
        x = np.empty(self.q)
        x[:self.q_w] = [w[i, j] for i, j in self._w_pairs]
        x[self.q_w:self.q_w + self.q_z] = np.asarray(z).ravel()
        x[self.q_w + self.q_z:] = [s[i, j] for i, j in self._s_pairs]
        return x

    def unpack_vars(self, x):
        w = np.zeros((self.na, self.na))
        for k, (i, j) in enumerate(self._w_pairs):
            w[i, j] = x[k]
            w[j, i] = x[k]
        z = x[self.q_w:self.q_w + self.q_z].reshape(self.ns, self.na).copy()
        s = np.zeros((self.m, self.m))
        for k, (i, j) in enumerate(self._s_pairs):
            s[i, j] = x[self.q_w + self.q_z + k]
            s[j, i] = x[self.q_w + self.q_z + k]
        return w, z, s

    # -- assembly --------------------------------------------------------

    def _basis_w(self, k):
        i, j = self._w_pairs[k]
        e = np.zeros((self.na, self.na))
        e[i, j] = 1.0
        e[j, i] = 1.0
        return e

    def _basis_s(self, k):
        i, j = self._s_pairs[k]
        e = np.zeros((self.m, self.m))
        e[i, j] = 1.0
        e[j, i] = 1.0
        return e

    def _build_blocks(self):
        """Each block is ``(F0, bases, active)`` with ``bases`` a dense
        array of shape ``(q_active, dim, dim)`` for the active variable
        indices; the cone constraint is ``F0 + sum x_k F_k > 0``."""
        m, na, ns = self.m, self.na, self.ns
        ru = self.r_half @ self.ubar

        # Epigraph block [[S, R^{1/2} ubar Z], [., W]].
        dim1 = m + na
        active1 = list(range(self.q))
        bases1 = np.zeros((self.q, dim1, dim1))
        for k in range(self.q_w):
            bases1[k, m:, m:] = self._basis_w(k)
        for k in range(self.q_z):
            z = np.zeros(self.q_z)
            z[k] = 1.0
            coupling = ru @ z.reshape(ns, na)
            bases1[self.q_w + k, :m, m:] = coupling
            bases1[self.q_w + k, m:, :m] = coupling.T
        for k in range(self.q_s):
            bases1[self.q_w + self.q_z + k, :m, :m] = self._basis_s(k)
        block1 = (np.zeros((dim1, dim1)), bases1, active1)

        # Stability block -(D Z + Z^T D^T + I) > 0.
        active2 = list(range(self.q_w, self.q_w + self.q_z))
        bases2 = np.zeros((self.q_z, na, na))
        for k in range(self.q_z):
            z = np.zeros(self.q_z)
            z[k] = 1.0
            dz = self.d @ z.reshape(ns, na)
            bases2[k] = -(dz + dz.T)
        block2 = (-np.eye(na), bases2, active2)

        # Gramian floor W - eps_w I > 0.
        active3 = list(range(self.q_w))
        bases3 = np.zeros((self.q_w, na, na))
        for k in range(self.q_w):
            bases3[k] = self._basis_w(k)
        block3 = (-self.eps_w * np.eye(na), bases3, active3)

        return [block1, block2, block3]

    def _build_equality(self):
        """Rows of ``E x = 0`` encoding ``[I_n, 0] W - xbar Z = 0``."""
        n, na, ns = self.n, self.na, self.ns
        sel = np.hstack([np.eye(n), np.zeros((n, self.p))])
        cols = np.zeros((self.q, n * na))
        for k in range(self.q_w):
            cols[k] = (sel @ self._basis_w(k)).ravel()
        for k in range(self.q_z):
            z = np.zeros(self.q_z)
            z[k] = 1.0
            cols[self.q_w + k] = (-self.xbar @ z.reshape(ns, na)).ravel()
        return cols.T

    def _build_cost(self):
        c = np.zeros(self.q)
        for k in range(self.q_w):
            c[k] = float(np.sum(self.qa * self._basis_w(k)))
        for k in range(self.q_s):
            c[self.q_w + self.q_z + k] = float(
                np.trace(self._basis_s(k)))
        return c

    # -- evaluation ------------------------------------------------------

    def block_values(self, x):
        out = []
        for f0, bases, active in self.blocks:
            mval = f0 + np.tensordot(x[active], bases, axes=(0, 0))
            out.append(0.5 * (mval + mval.T))
        return out

    def equality_residual(self, x):
        return float(np.abs(self.equality @ x).max(initial=0.0))


@dataclass
class SdpSolution:
    """Solver output: the optimal triple, the recovered objective and
    the interior-point run record."""

    w: np.ndarray
    z: np.ndarray
    s: np.ndarray
    objective: float
    barrier_iterations: int
    newton_iterations: int
    duality_gap_estimate: float
    equality_residual: float
    eps_w: float
    converged: bool
    diagnostics: list[dict] = field(default_factory=list)


@dataclass(frozen=True)
class FeasibilityReport:
    """Minimum eigenvalues of the three cone blocks (cone membership
    requires all to be nonnegative) and the equality residual."""

    epigraph_min_eig: float
    stability_min_eig: float
    gramian_min_eig: float
    equality_residual: float

    @property
    def feasible(self):
        return (self.epigraph_min_eig >= 0.0
                and self.stability_min_eig >= 0.0
                and self.gramian_min_eig >= 0.0)


def assemble_sdp(pack, weights, eps_w=SdpOptions.eps_w):
    """Build the barrier program for a covariance pack and cost weights."""
    if weights.qx.shape[0] != pack.n or weights.qz.shape[0] != pack.p \
            or weights.r.shape[0] != pack.m:
        raise DimensionError("weights do not match the data dimensions")
    return SdpProblem(pack, weights, eps_w)


def feasibility_report(problem, w, z, s):
    """Cone membership and equality diagnostics of a candidate point.

    ``z`` is taken in physical units, as returned by the solver.
    """
    x = problem.pack_vars(w, z / problem.channel_scale[:, None], s)
    mins = [float(np.linalg.eigvalsh(mv).min())
            for mv in problem.block_values(x)]
    return FeasibilityReport(
        epigraph_min_eig=mins[0],
        stability_min_eig=mins[1],
        gramian_min_eig=mins[2],
        equality_residual=problem.equality_residual(x),
    )


def _phase1(problem, options):
    """Strictly feasible start from a stabilizing gain.

    The gain's parameterizer ``G0`` gives ``W0`` from a slack Gramian
    equation, ``Z0 = G0 W0`` (which satisfies the equality constraint
    exactly) and ``S0`` as the epigraph value plus a margin.
    """
    pack = problem.pack
    if options.initial_gain is not None:
        gain = as_matrix(options.initial_gain, "initial_gain")
        g0 = gain_to_parameterizer(pack, gain)
        if not is_stabilizing(pack, g0):
            raise DomainError(
                "initial_gain does not stabilize the data closed loop")
    else:
        try:
            gain = stabilizing_gain_from_data(pack)
        except (ConvergenceError, DomainError) as exc:
            raise InfeasibleError(
                "phase 1 failed: no stabilizing gain could be "
                "constructed from the data; the augmented plant may not "
                "be stabilizable") from exc
        g0 = gain_to_parameterizer(pack, gain)
    # Move the parameterizer into the solver's normalized regressor
    # units (rows scale inversely to the data columns).
    g0 = g0 / problem.channel_scale[:, None]
    acl0 = problem.d @ g0
    w0 = solve_lyapunov(acl0.T, 1.5 * np.eye(problem.na))
    z0 = g0 @ w0
    coupling = problem.r_half @ problem.ubar @ z0
    schur = coupling @ np.linalg.solve(w0, coupling.T)
    # The analytic center at t0 = O(1) sits at an epigraph slack of
    # O(1); starting with a much thinner slack forces the damped
    # Newton phase through a long barrier valley, so the margin is
    # kept at the natural scale of the problem.
    s0 = 0.5 * (schur + schur.T) + \
        (1.0 + abs(np.trace(schur)) / problem.m) * np.eye(problem.m)
    x0 = problem.pack_vars(w0, z0, s0)
    # Exact projection onto the equality subspace (no-op up to roundoff
    # by construction of z0).
    emat = problem.equality
    x0 = x0 - emat.T @ np.linalg.lstsq(
        emat @ emat.T, emat @ x0, rcond=None)[0]
    for mval in problem.block_values(x0):
        if np.linalg.eigvalsh(mval).min() <= 0:
            raise InfeasibleError(
                "phase 1 produced no strictly feasible point")
    return x0


def _barrier_value(problem, x, t):
    """Centering objective ``c^T x - (1/t) sum log det``.

    Normalizing by ``t`` (rather than the textbook ``t c^T x - sum log
    det``) keeps the gradient a difference of O(1) quantities at large
    barrier weights; the unnormalized form loses the flat, gain-relevant
    directions of the center to cancellation noise of size eps*t.
    """
    value = float(problem.cost @ x)
    for mval in problem.block_values(x):
        try:
            chol = np.linalg.cholesky(mval)
        except np.linalg.LinAlgError:
            return np.inf
        value -= 2.0 / t * float(np.sum(np.log(np.diag(chol))))
    return value


def _newton_direction(grad, hess, emat):
    """Solve the equality-constrained Newton system.

    The variables are Jacobi-rescaled (unit Hessian diagonal) before
    forming the KKT matrix: the Newton step is affine-invariant in
    exact arithmetic, but the raw Hessian can span twenty orders of
    magnitude for badly scaled starting points and the rescale keeps
    the floating-point solve accurate.

    The KKT system is solved rank-revealingly: directions whose
    curvature falls below the floating-point noise floor of the scaled
    Hessian are truncated.  The threshold must sit at that noise floor
    and no higher: the central path approaches the optimum along
    directions whose rescaled curvature keeps shrinking as the barrier
    weight grows, and clipping them early freezes the iterate at the
    accuracy of an intermediate centering step.  A growing diagonal
    regularization remains as a fallback.
    """
    q = grad.shape[0]
    scale = np.sqrt(np.clip(np.diag(hess), 1e-300, None))
    hs = hess / np.outer(scale, scale)
    es = emat / scale
    row_norms = np.linalg.norm(es, axis=1)
    row_norms[row_norms == 0] = 1.0
    es = es / row_norms[:, None]
    gs = grad / scale
    neq = es.shape[0]
    zero = np.zeros((neq, neq))
    rhs = np.concatenate([-gs, np.zeros(neq)])
    tau = 0.0
    for attempt in range(9):
        kkt = np.block([[hs + tau * np.eye(q), es.T], [es, zero]])
        sol = np.linalg.lstsq(kkt, rhs, rcond=_KKT_RCOND)[0]
        if np.all(np.isfinite(sol)):
            dx = sol[:q] / scale
            decrement = float(-grad @ dx)
            if decrement >= 0:
                return dx, decrement, tau > 0
        tau = max(1e-10, tau * 100.0)
    raise NumericalError(
        "Newton system could not produce a descent direction")


def _newton_center(problem, x, t, options):
    """Damped Newton iteration for the equality-constrained analytic
    center at barrier weight ``t``.

    Returns ``(x, iterations, centered, decrement)`` where ``centered``
    records whether the stop came from a small *unregularized* Newton
    decrement — only then does the barrier suboptimality bound apply —
    and ``decrement`` is the squared Newton decrement at exit.
    """
    emat = problem.equality
    q = problem.q
    decrement = np.inf
    for iteration in range(options.max_newton):
        mvals = problem.block_values(x)
        grad = problem.cost.copy()
        hess = np.zeros((q, q))
        for (f0, bases, active), mval in zip(problem.blocks, mvals):
            # Invert through Cholesky so that "invertible" coincides
            # with the cone-membership test used by the line search.
            try:
                chol = scipy.linalg.cho_factor(mval, lower=True)
                minv = scipy.linalg.cho_solve(
                    chol, np.eye(mval.shape[0]))
            except scipy.linalg.LinAlgError as exc:
                raise NumericalError(
                    "barrier iterate left the cone interior") from exc
            minv = 0.5 * (minv + minv.T)
            mif = np.einsum("ab,kbc->kac", minv, bases)
            grad[active] -= np.trace(mif, axis1=1, axis2=2) / t
            hess_blk = np.einsum("kab,lba->kl", mif, mif)
            hess[np.ix_(active, active)] += hess_blk / t
        dx, dec_scaled, regularized = _newton_direction(grad, hess, emat)
        # The standard (affine-invariant) squared Newton decrement of
        # the unnormalized barrier is t times the normalized one.
        decrement = t * dec_scaled
        if decrement / 2.0 <= options.newton_tol:
            return x, iteration, not regularized, decrement
        f_ref = _barrier_value(problem, x, t)
        slope = float(grad @ dx)
        # Damped phase: a full step with Newton decrement lambda > 1
        # leaves the Dikin ellipsoid and can land exponentially close
        # to the cone boundary (the log barrier hardly penalizes it,
        # so plain backtracking accepts); 1/(1 + lambda) keeps the
        # iterate strictly interior with guaranteed decrease.
        lam = np.sqrt(decrement)
        step = 1.0 if lam <= 0.25 else 1.0 / (1.0 + lam)
        accepted = False
        while step >= 1e-14:
            if _barrier_value(problem, x + step * dx, t) <= \
                    f_ref + 0.25 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # No admissible decrease representable in floating point:
            # the iterate is as centered as it can get at this t.
            return x, iteration, False, decrement
        x = x + step * dx
    return x, options.max_newton, False, decrement


def solve_sdp(pack, weights, options=None):
    """Solve the data-driven synthesis program.

    Convergence certifies ``nu / t <= tol`` at an approximate analytic
    center whose squared Newton decrement is below ``2 newton_tol``;
    the reported ``duality_gap_estimate`` additionally includes the
    centering correction ``(nu + lambda sqrt(nu)) / t`` and may sit
    marginally above ``tol``.

    Raises :class:`InfeasibleError` when no strictly feasible start
    exists and :class:`ConvergenceError` (carrying the best feasible
    iterate in ``best``) when the iteration budget runs out before the
    gap estimate reaches ``tol``.
    """
    opts = options if options is not None else SdpOptions()
    problem = assemble_sdp(pack, weights, eps_w=opts.eps_w)
    x = _phase1(problem, opts)
    if opts.t0 is not None:
        t = opts.t0
    else:
        # Match the initial barrier weight to the phase-1 objective so
        # its excess over the first center costs only O(nu) barrier
        # units; a fixed t0 = 1 can leave an aggressive starting gain
        # thousands of units off-center.
        obj0 = float(problem.cost @ x)
        t = float(np.clip(problem.nu / max(obj0, 1e-12), 1e-6, 1.0))
    newton_total = 0
    diagnostics = []
    solution = None
    retries = 0
    for outer in range(1, opts.max_outer + 1):
        x, steps, centered, decrement = _newton_center(problem, x, t, opts)
        newton_total += steps
        w, z, s = problem.unpack_vars(x)
        z_phys = z * problem.channel_scale[:, None]
        # Suboptimality bound at a lambda-approximate center:
        # (nu + lambda sqrt(nu)) / t.
        lam = np.sqrt(max(decrement, 0.0))
        gap = (problem.nu + lam * np.sqrt(problem.nu)) / t
        abscissa = spectral_abscissa(problem.d @ z @ np.linalg.inv(w))
        diagnostics.append({
            "t": t,
            "newton_steps": steps,
            "centered": centered,
            "newton_decrement": decrement,
            "objective": float(problem.cost @ x),
            "gap_estimate": gap,
            "equality_residual": problem.equality_residual(x),
            "closed_loop_abscissa": abscissa,
        })
        solution = SdpSolution(
            w=w, z=z_phys, s=s,
            objective=float(problem.cost @ x),
            barrier_iterations=outer,
            newton_iterations=newton_total,
            duality_gap_estimate=gap,
            equality_residual=problem.equality_residual(x),
            eps_w=opts.eps_w,
            converged=centered and problem.nu / t <= opts.tol,
            diagnostics=diagnostics,
        )
        if problem.nu / t <= opts.tol:
            if centered:
                return solution
            # The gap bound only holds at the analytic center; retry
            # the same barrier weight before giving up.
            if retries >= 2:
                break
            retries += 1
            continue
        t *= opts.mu
    raise ConvergenceError(
        f"barrier method did not certify gap {opts.tol:.1e} within "
        f"{opts.max_outer} outer iterations "
        f"(best gap {solution.duality_gap_estimate:.1e})",
        best=solution, iterations=opts.max_outer)


def extract_gain(pack, solution):
    """Recover the tracking gain ``K = -ubar Z W^{-1}``.

    Checks the conditioning of ``W`` and that the recovered data closed
    loop is Hurwitz before returning.
    """
    w = solution.w
    cond = np.linalg.cond(w)
    if not np.isfinite(cond) or cond > 1e12:
        raise NumericalError(
            f"Gramian W is too ill-conditioned to invert (cond {cond:.2e})")
    gw = np.linalg.solve(w, solution.z.T).T
    gain = -pack.ubar @ gw
    abscissa = spectral_abscissa(data_shift_matrix(pack) @ gw)
    if abscissa >= 0:
        raise NumericalError(
            "recovered gain does not stabilize the data closed loop "
            f"(spectral abscissa {abscissa:.3e})")
    return gain
