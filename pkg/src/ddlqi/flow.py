"""Projected gradient flow for data-driven gain optimization.

The quadratic tracking cost of an admissible parameterizer ``G`` is
``f(G) = trace(P_G)`` where ``P_G`` solves the closed-loop Lyapunov
equation assembled purely from data.  The flow follows the negative
gradient projected onto the tangent space of the affine data constraint,

    dG/dtau = -alpha * Pi grad f(G),

and converges to the optimal tracking gain from any stabilizing start.

Integration runs on a fixed-step classical Runge-Kutta scheme with an
adaptive step size: the largest local curvature of the projected cost is
estimated by power iteration on finite differences of the flow field,
the step is set just inside the corresponding stability bound, and any
step that increases the cost or leaves the stabilizing set is rejected
and retried at half the size.  Every ``renorm_every`` accepted steps the
iterate is re-projected onto the affine constraint to cancel drift.

The per-step work (two Lyapunov solves plus a stability certificate per
stage evaluation) runs on the compiled kernel back end when available.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DimensionError, DomainError, NumericalError
from .linalg import as_matrix, right_pseudoinverse, solve_lyapunov
from .param import (
    constraint_residual,
    constraint_target,
    constraint_projector,
    data_shift_matrix,
    is_admissible,
    tangent_basis,
)

__all__ = [
    "FlowOptions",
    "FlowSample",
    "FlowTrajectory",
    "lqr_cost",
    "lqr_cost_gradient",
    "tangent_projection",
    "model_based_gradient",
    "integrate_flow",
]

#: Fraction of the linear-stability step bound actually used.
STEP_SAFETY = 2.0
#: Step growth cap between curvature refreshes.
STEP_GROWTH = 4.0


@dataclass(frozen=True)
class FlowOptions:
    """Tuning knobs of the flow integrator.

    ``alpha`` scales the flow speed (pure time reparameterization),
    ``step`` caps the integrator step (auto-selected from curvature when
    ``None``), ``horizon`` bounds the flow time, ``grad_tol`` stops the
    run once the projected-gradient norm falls below it, and
    ``renorm_every`` sets the cadence (in accepted steps) of constraint
    re-projection, curvature refresh and trajectory sampling.
    """

    alpha: float = 1.0
    step: float | None = None
    horizon: float | None = None
    grad_tol: float = 0.0
    renorm_every: int = 25
    max_steps: int = 200_000
    backend: str | None = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise DomainError("alpha must be positive")
        if self.step is not None and self.step <= 0:
            raise DomainError("step must be positive when given")
        if self.horizon is not None and self.horizon <= 0:
            raise DomainError("horizon must be positive when given")
        if self.grad_tol < 0:
            raise DomainError("grad_tol must be >= 0")
        if self.renorm_every < 1:
            raise DomainError("renorm_every must be >= 1")
        if self.max_steps < 1:
            raise DomainError("max_steps must be >= 1")


@dataclass(frozen=True)
class FlowSample:
    """One recorded point of the flow trajectory."""

    step_index: int
    time: float
    cost: float
    grad_norm: float
    gain: np.ndarray


@dataclass
class FlowTrajectory:
    """Recorded flow run: samples at every re-projection checkpoint plus
    the initial and final points."""

    samples: list[FlowSample] = field(default_factory=list)
    status: str = ""
    steps: int = 0
    rejections: int = 0
    final_g: np.ndarray | None = None
    backend: str = ""

    @property
    def final_gain(self):
        return self.samples[-1].gain

    @property
    def final_cost(self):
        return self.samples[-1].cost

    @property
    def final_grad_norm(self):
        return self.samples[-1].grad_norm

    def times(self):
        return np.array([s.time for s in self.samples])

    def costs(self):
        return np.array([s.cost for s in self.samples])

    def grad_norms(self):
        return np.array([s.grad_norm for s in self.samples])

    def gains(self):
        return np.stack([s.gain for s in self.samples])


def _check_weights(pack, weights):
    if weights.qx.shape[0] != pack.n:
        raise DimensionError(
            f"qx has dimension {weights.qx.shape[0]}, expected {pack.n}")
    if weights.qz.shape[0] != pack.p:
        raise DimensionError(
            f"qz has dimension {weights.qz.shape[0]}, expected {pack.p}")
    if weights.r.shape[0] != pack.m:
        raise DimensionError(
            f"r has dimension {weights.r.shape[0]}, expected {pack.m}")


def _check_stabilizing_g(pack, g):
    g = as_matrix(g, "g")
    expected = (pack.ns, pack.n + pack.p)
    if g.shape != expected:
        raise DimensionError(
            f"parameterizer must have shape {expected}, got {g.shape}")
    if not is_admissible(pack, g):
        raise DomainError(
            "parameterizer violates the affine data constraint "
            f"(residual {constraint_residual(pack, g):.3e})")
    return g


def lqr_cost(pack, weights, g):
    """Tracking cost ``trace(P_G)`` of an admissible stabilizing
    parameterizer, evaluated from data alone."""
    cost, _ = lqr_cost_gradient(pack, weights, g)
    return cost


def lqr_cost_gradient(pack, weights, g):
    """Cost and its (unprojected) gradient with respect to ``G``.

    The gradient is ``2 (ubar^T R ubar G + D^T P_G) W_G`` where ``P_G``
    solves the closed-loop cost Lyapunov equation and ``W_G`` the
    corresponding Gramian equation ``A_cl W + W A_cl^T + I = 0``.
    """
    _check_weights(pack, weights)
    g = _check_stabilizing_g(pack, g)
    d = data_shift_matrix(pack)
    acl = d @ g
    gain = -pack.ubar @ g
    qa = weights.augmented_state_weight()
    try:
        p_sol = solve_lyapunov(acl, qa + gain.T @ weights.r @ gain)
    except DomainError as exc:
        raise DomainError(
            "parameterizer is not stabilizing: " + str(exc)) from exc
    w_sol = solve_lyapunov(acl.T, np.eye(acl.shape[0]))
    ru = weights.r @ (pack.ubar @ g)
    grad = 2.0 * (pack.ubar.T @ ru + d.T @ p_sol) @ w_sol
    return float(np.trace(p_sol)), grad


def tangent_projection(pack):
    """Orthogonal projector onto the tangent space of the affine data
    constraint (alias of :func:`ddlqi.param.constraint_projector`)."""
    return constraint_projector(pack)


def model_based_gradient(aug, weights, gain):
    """Cost and gain gradient of the model-based counterpart.

    For the augmented model with gain ``K`` the cost is ``trace(P_K)``
    and the gradient ``2 (R K - B^T P_K) W_K``; used as an oracle for
    the data-driven computation and by the adaptive controller.
    """
    gain = as_matrix(gain, "gain")
    if gain.shape != (aug.m, aug.na):
        raise DimensionError(
            f"gain must have shape {(aug.m, aug.na)}, got {gain.shape}")
    qa = weights.augmented_state_weight()
    if qa.shape[0] != aug.na or weights.r.shape[0] != aug.m:
        raise DimensionError("weights do not match the augmented model")
    acl = aug.a - aug.b @ gain
    try:
        p_sol = solve_lyapunov(acl, qa + gain.T @ weights.r @ gain)
    except DomainError as exc:
        raise DomainError("gain is not stabilizing: " + str(exc)) from exc
    w_sol = solve_lyapunov(acl.T, np.eye(aug.na))
    grad = 2.0 * (weights.r @ gain - aug.b.T @ p_sol) @ w_sol
    return float(np.trace(p_sol)), grad


def _estimate_curvature(kernel, g, dg, v_prev, rounds):
    """Largest curvature of the projected cost along the constraint
    tangent, via power iteration on finite differences of the flow
    field (``dg`` is the negative projected gradient at ``g``)."""
    dg_norm = np.linalg.norm(dg)
    if v_prev is not None:
        v = v_prev
    elif dg_norm > 0:
        v = dg / dg_norm
    else:
        return 0.0, None
    eps0 = 1e-4 * (1.0 + np.linalg.norm(g))
    lam = 0.0
    for _ in range(rounds):
        eps = eps0
        for _ in range(8):
            st, _, _, dg2 = kernel.eval_point(g + eps * v)
            if st == _kernels.OK:
                break
            eps *= 0.125
        else:
            return lam, v
        hv = (dg - dg2) / eps
        lam_new = float(np.linalg.norm(hv))
        if lam_new <= 0.0:
            break
        v = hv / lam_new
        lam = lam_new
    return lam, v


def integrate_flow(pack, weights, g0, options=None):
    """Integrate the projected gradient flow from ``g0``.

    ``g0`` must be admissible and stabilizing.  Stops when the
    projected-gradient norm reaches ``grad_tol``, the flow time reaches
    ``horizon`` or ``max_steps`` steps were accepted, whichever comes
    first; the returned trajectory's ``status`` states which.
    """
    opts = options if options is not None else FlowOptions()
    _check_weights(pack, weights)
    g0 = _check_stabilizing_g(pack, g0)

    d = data_shift_matrix(pack)
    qa = weights.augmented_state_weight()
    nbasis = tangent_basis(pack)
    kernel = _kernels.make_flow_kernel(d, pack.ubar, qa, weights.r, nbasis,
                                       backend=opts.backend)
    xdag = right_pseudoinverse(pack.xbar)
    target = constraint_target(pack)

    g = np.ascontiguousarray(g0, dtype=np.float64).copy()
    st, cost, gnorm, dg = kernel.eval_point(g)
    if st != _kernels.OK:
        raise DomainError(
            "initial parameterizer does not stabilize the data closed "
            "loop")
    dg = np.ascontiguousarray(dg)

    # Internal integration always runs the alpha = 1 system; alpha is a
    # pure rescaling of the reported flow time.
    h_cap = opts.alpha * opts.step if opts.step is not None else np.inf
    horizon_int = opts.alpha * opts.horizon if opts.horizon is not None \
        else np.inf
    lam, v = _estimate_curvature(kernel, g, dg, None, rounds=6)
    h = min(STEP_SAFETY / lam, h_cap) if lam > 0 else min(h_cap, 1.0)

    traj = FlowTrajectory(backend=kernel.backend)

    def record(step_index, t_int):
        traj.samples.append(FlowSample(
            step_index=step_index,
            time=t_int / opts.alpha,
            cost=cost,
            grad_norm=gnorm,
            gain=-pack.ubar @ g,
        ))

    record(0, 0.0)
    steps = 0
    t_int = 0.0
    since_renorm = 0
    status = None
    while True:
        if gnorm <= opts.grad_tol:
            status = "gradient-converged"
            break
        if t_int >= horizon_int * (1.0 - 1e-12):
            status = "horizon"
            break
        if steps >= opts.max_steps:
            status = "max-steps"
            break
        budget = min(opts.renorm_every - since_renorm,
                     opts.max_steps - steps)
        if np.isfinite(horizon_int):
            by_time = int(np.ceil((horizon_int - t_int) / h - 1e-12))
            budget = max(1, min(budget, by_time))
        acc, st, cost, gnorm = kernel.run_segment(
            g, dg, h, budget, cost, gnorm)
        steps += acc
        t_int += acc * h
        since_renorm += acc
        if st == _kernels.REJECTED:
            traj.rejections += 1
            h *= 0.5
            if h < 1e-300:
                raise NumericalError(
                    "flow integrator step size underflowed; the "
                    "gradient field may be discontinuous at the iterate")
            continue
        if since_renorm >= opts.renorm_every:
            since_renorm = 0
            g -= xdag @ (pack.xbar @ g - target)
            st, cost, gnorm, dg_new = kernel.eval_point(g)
            if st != _kernels.OK:
                raise NumericalError(
                    "iterate left the stabilizing set after constraint "
                    "re-projection")
            dg[...] = dg_new
            lam, v = _estimate_curvature(kernel, g, dg, v, rounds=3)
            if lam > 0:
                h = min(STEP_SAFETY / lam, h * STEP_GROWTH, h_cap)
            record(steps, t_int)

    if not traj.samples or traj.samples[-1].step_index != steps:
        record(steps, t_int)
    traj.status = status
    traj.steps = steps
    traj.final_g = g
    return traj
