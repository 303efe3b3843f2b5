"""Closed-loop simulation of LQ-integral tracking controllers.

The simulator integrates the true augmented closed loop — plant state
``x`` plus output integrators ``z`` with ``dz/dt = r - y`` — under a
piecewise-constant plant schedule (e.g. load switches), a
piecewise-constant reference and either a fixed feedback gain or an
online-adapted one.  Every step between breakpoints is an exact
zero-order-hold exponential of the augmented system with the reference
as an exogenous constant input, so the only discretization in the
record is the output sampling itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError
from .flow import lqr_cost_gradient, model_based_gradient
from .linalg import as_matrix, matrix_exponential, spectral_abscissa
from .models import LtiModel, augment
from .param import constraint_projector, gain_to_parameterizer

__all__ = [
    "dgu_model",
    "ReferenceProfile",
    "Scenario",
    "TrackingRecord",
    "AdaptiveFlowController",
    "simulate_lqi",
    "equilibrium_state",
    "tracking_error",
    "overshoot",
    "integrator_residual",
    "equilibrium_residual",
    "closed_loop_time_constant",
]


def dgu_model(rf, lf, cf, yload):
    """Buck-converter distributed generation unit with an RLC output
    filter feeding a constant-admittance load.

    States are the bus voltage and the filter current, the input is the
    converter-side voltage, and the measured output is the bus voltage:

        d/dt [v; i] = [[-Y/C, 1/C], [-1/L, -R/L]] [v; i] + [0; 1/L] u
    """
    if lf <= 0 or cf <= 0:
        raise DomainError("filter inductance and capacitance must be "
                          "positive (they divide the dynamics)")
    if rf <= 0:
        raise DomainError("filter resistance must be positive")
    if yload < 0:
        raise DomainError("load admittance must be nonnegative")
    a = np.array([[-yload / cf, 1.0 / cf], [-1.0 / lf, -rf / lf]])
    b = np.array([[0.0], [1.0 / lf]])
    c = np.array([[1.0, 0.0]])
    return LtiModel(a, b, c)


class ReferenceProfile:
    """Piecewise-constant reference signal.

    Each breakpoint ``(time, value)`` holds from its time until the next
    breakpoint; the first breakpoint must sit at ``t = 0`` so the value
    is defined from the start.  Values may be scalars (single output) or
    p-vectors.
    """

    def __init__(self, breakpoints):
        times = []
        values = []
        for entry in breakpoints:
            try:
                tb, vb = entry
            except (TypeError, ValueError) as exc:
                raise DimensionError(
                    "breakpoints must be (time, value) pairs") from exc
            times.append(float(tb))
            values.append(np.atleast_1d(np.asarray(vb, dtype=float)))
        if not times:
            raise DomainError("reference needs at least one breakpoint")
        if abs(times[0]) > 0:
            raise DomainError("the first reference breakpoint must be at "
                              f"t = 0, got t = {times[0]:g}")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DomainError("reference breakpoint times must be strictly "
                              "increasing")
        p = values[0].shape[0]
        if any(v.shape != (p,) for v in values):
            raise DimensionError("all reference values must have the same "
                                 "dimension")
        if not all(np.all(np.isfinite(v)) for v in values):
            raise DomainError("reference values must be finite")
        self.times = np.array(times)
        self.values = np.stack(values)

    @classmethod
    def constant(cls, value):
        """Profile holding a single value forever."""
        return cls([(0.0, value)])

    @property
    def p(self):
        return self.values.shape[1]

    def value_at(self, t):
        """Reference value at time ``t`` (new value exactly at a
        breakpoint)."""
        idx = int(np.searchsorted(self.times, t + 1e-12, side="right")) - 1
        return self.values[max(idx, 0)]

    def change_times(self, horizon):
        """Breakpoint times strictly inside ``(0, horizon)``."""
        inner = self.times[(self.times > 0.0) & (self.times < horizon)]
        return [float(tb) for tb in inner]


class Scenario:
    """A tracking experiment: plant schedule, reference, horizon.

    ``plants`` is either a single model or a sequence of
    ``(time, model)`` pairs with the first entry at ``t = 0``; each
    model governs from its time until the next switch.  ``initial_state``
    is the augmented start ``[x; z]``: the string ``"zero"``, the string
    ``"equilibrium"`` (steady state of the initial closed loop at the
    initial reference; requires a stabilizing gain), or an explicit
    vector.
    """

    def __init__(self, plants, reference, horizon, output_dt,
                 initial_state="zero"):
        if isinstance(plants, LtiModel):
            plants = [(0.0, plants)]
        times = []
        models = []
        for entry in plants:
            try:
                tb, mb = entry
            except (TypeError, ValueError) as exc:
                raise DimensionError(
                    "plants must be a model or (time, model) pairs") from exc
            if not isinstance(mb, LtiModel):
                raise DimensionError("plant schedule entries must hold "
                                     "LtiModel instances")
            times.append(float(tb))
            models.append(mb)
        if not times:
            raise DomainError("scenario needs at least one plant")
        if abs(times[0]) > 0:
            raise DomainError("the first plant must govern from t = 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DomainError("plant switch times must be strictly "
                              "increasing")
        dims = {(mb.n, mb.m, mb.p) for mb in models}
        if len(dims) != 1:
            raise DimensionError("all plants in a schedule must share "
                                 "state, input and output dimensions")
        if not isinstance(reference, ReferenceProfile):
            raise DimensionError("reference must be a ReferenceProfile")
        if reference.p != models[0].p:
            raise DimensionError(
                f"reference dimension {reference.p} does not match the "
                f"plant output dimension {models[0].p}")
        horizon = float(horizon)
        output_dt = float(output_dt)
        if horizon <= 0 or output_dt <= 0:
            raise DomainError("horizon and output_dt must be positive")
        nsteps = int(round(horizon / output_dt))
        if nsteps < 1 or abs(nsteps * output_dt - horizon) > 1e-9 * horizon:
            raise DomainError("horizon must be an integer multiple of "
                              "output_dt")
        if isinstance(initial_state, str):
            if initial_state not in ("zero", "equilibrium"):
                raise DomainError(
                    "initial_state must be 'zero', 'equilibrium' or a "
                    f"vector, got {initial_state!r}")
        else:
            initial_state = np.asarray(initial_state, dtype=float).reshape(-1)
            na = models[0].n + models[0].p
            if initial_state.shape[0] != na:
                raise DimensionError(
                    f"initial_state has length {initial_state.shape[0]}, "
                    f"expected the augmented dimension {na}")
            if not np.all(np.isfinite(initial_state)):
                raise DomainError("initial_state has non-finite entries")
        self.plant_times = np.array(times)
        self.plants = models
        self.reference = reference
        self.horizon = horizon
        self.output_dt = output_dt
        self.num_steps = nsteps
        self.initial_state = initial_state

    @property
    def n(self):
        return self.plants[0].n

    @property
    def m(self):
        return self.plants[0].m

    @property
    def p(self):
        return self.plants[0].p

    @property
    def na(self):
        return self.n + self.p

    def plant_at(self, t):
        """Index of the plant governing at time ``t``."""
        idx = int(np.searchsorted(self.plant_times, t + 1e-12,
                                  side="right")) - 1
        return max(idx, 0)


@dataclass
class TrackingRecord:
    """Sampled closed-loop trajectory.

    Arrays are indexed ``[channel, sample]``; ``gains`` is filled only
    for adaptive runs (one gain per sample).  ``segments`` lists, per
    plant segment, the closed-loop spectral abscissa at segment entry —
    a non-Hurwitz combination is recorded, not rejected.
    """

    t: np.ndarray
    x: np.ndarray
    z: np.ndarray
    u: np.ndarray
    y: np.ndarray
    r: np.ndarray
    scenario: Scenario
    gains: np.ndarray | None = None
    segments: list = field(default_factory=list)

    @property
    def stable_throughout(self):
        return all(seg["hurwitz"] for seg in self.segments)

    def sample_index(self, t):
        """Index of the last sample at or before ``t``."""
        idx = int(np.searchsorted(self.t, t + 1e-12, side="right")) - 1
        if idx < 0:
            raise DomainError(f"no sample at or before t = {t:g}")
        return idx


class AdaptiveFlowController:
    """Online gain adaptation by gradient-flow steps between samples.

    Between consecutive output samples the gain is advanced by
    ``substeps`` explicit Euler steps of the policy-gradient flow
    ``dK/dt = -rate * grad J(K)``.  By default the gradient is the
    model-based one for the currently active plant; passing a
    covariance ``pack`` switches to the experimental data-driven
    variant, which flows the parameterizer of the fixed identification
    data instead (and therefore does not react to plant switches through
    the gradient, only through the closed loop itself).

    If an update leaves the domain of the gradient (the gain stops
    stabilizing the loop the gradient is computed on), the gain freezes
    until the domain is re-entered by the plant schedule.
    """

    def __init__(self, weights, initial_gain, rate=1.0, substeps=1,
                 pack=None):
        self.weights = weights
        self.initial_gain = as_matrix(initial_gain, "initial_gain")
        if rate <= 0:
            raise DomainError("rate must be positive")
        if substeps < 1:
            raise DomainError("substeps must be >= 1")
        self.rate = float(rate)
        self.substeps = int(substeps)
        self.pack = pack
        if pack is not None:
            self._projector = constraint_projector(pack)

    def _start(self):
        state = {"gain": self.initial_gain.copy(), "g": None}
        if self.pack is not None:
            state["g"] = gain_to_parameterizer(self.pack, self.initial_gain)
        return state

    def _advance(self, state, model, dt):
        h = self.rate * dt / self.substeps
        for _ in range(self.substeps):
            try:
                if self.pack is None:
                    _, grad = model_based_gradient(
                        augment(model), self.weights, state["gain"])
                    candidate = state["gain"] - h * grad
                    if not np.all(np.isfinite(candidate)):
                        break
                    state["gain"] = candidate
                else:
                    _, grad = lqr_cost_gradient(
                        self.pack, self.weights, state["g"])
                    candidate = state["g"] - h * (self._projector @ grad)
                    if not np.all(np.isfinite(candidate)):
                        break
                    state["g"] = candidate
                    state["gain"] = -self.pack.ubar @ state["g"]
            except DomainError:
                break
        return state["gain"]


def equilibrium_state(model, gain, reference_value):
    """Steady state ``[x; z]`` of the augmented closed loop at a constant
    reference.  Requires the closed loop to be Hurwitz."""
    aug = augment(model)
    gain = _check_gain(gain, aug)
    acl = aug.a - aug.b @ gain
    if spectral_abscissa(acl) >= 0:
        raise DomainError("closed loop is not Hurwitz; no asymptotic "
                          "equilibrium exists")
    rv = np.atleast_1d(np.asarray(reference_value, dtype=float))
    return -np.linalg.solve(acl, aug.reference_injection @ rv)


def _check_gain(gain, aug):
    gain = as_matrix(gain, "gain")
    if gain.shape != (aug.m, aug.na):
        raise DimensionError(
            f"gain must have shape {(aug.m, aug.na)}, got {gain.shape}")
    return gain


def simulate_lqi(scenario, controller):
    """Simulate the scenario under a fixed gain or an adaptive controller.

    ``controller`` is either an ``m x (n+p)`` gain matrix or an
    :class:`AdaptiveFlowController`.  Returns a :class:`TrackingRecord`
    sampled on the scenario's output grid; integration between samples
    is exact (per-segment augmented ZOH with the reference as a held
    exogenous input), with extra sub-steps wherever a plant or reference
    breakpoint falls inside a sampling interval.
    """
    adaptive = isinstance(controller, AdaptiveFlowController)
    n, m, p, na = scenario.n, scenario.m, scenario.p, scenario.na
    augs = [augment(mb) for mb in scenario.plants]
    if adaptive:
        ctrl_state = controller._start()
        gain = _check_gain(ctrl_state["gain"], augs[0])
    else:
        gain = _check_gain(controller, augs[0])

    nsteps = scenario.num_steps
    times = np.arange(nsteps + 1) * scenario.output_dt
    events = sorted(set(
        [float(tb) for tb in scenario.plant_times[1:]
         if 0.0 < tb < scenario.horizon]
        + scenario.reference.change_times(scenario.horizon)))

    state = _initial_state(scenario, gain)
    xs = np.empty((n, nsteps + 1))
    zs = np.empty((p, nsteps + 1))
    us = np.empty((m, nsteps + 1))
    ys = np.empty((p, nsteps + 1))
    rs = np.empty((p, nsteps + 1))
    gains = np.empty((nsteps + 1, m, na)) if adaptive else None

    segments = []
    last_plant = -1
    step_cache = {}
    gain_version = 0

    def transition(plant_idx, version, dt):
        key = (plant_idx, version, dt)
        hit = step_cache.get(key)
        if hit is None:
            aug = augs[plant_idx]
            gen = np.zeros((na + p, na + p))
            gen[:na, :na] = aug.a - aug.b @ gain
            gen[:na, na:] = aug.reference_injection
            ex = matrix_exponential(gen, dt)
            hit = (ex[:na, :na], ex[:na, na:])
            step_cache[key] = hit
        return hit

    for k in range(nsteps + 1):
        t_k = float(times[k])
        plant_idx = scenario.plant_at(t_k)
        if plant_idx != last_plant:
            acl = augs[plant_idx].a - augs[plant_idx].b @ gain
            absc = spectral_abscissa(acl)
            segments.append({
                "time": t_k,
                "plant_index": plant_idx,
                "abscissa": absc,
                "hurwitz": bool(absc < 0),
            })
            last_plant = plant_idx
        xs[:, k] = state[:n]
        zs[:, k] = state[n:]
        ys[:, k] = scenario.plants[plant_idx].c @ state[:n]
        rs[:, k] = scenario.reference.value_at(t_k)
        us[:, k] = -(gain @ state)
        if adaptive:
            gains[k] = gain
        if k == nsteps:
            break

        t_next = float(times[k + 1])
        cut = [t_k] + [e for e in events if t_k < e < t_next] + [t_next]
        for a, b in zip(cut, cut[1:]):
            idx = scenario.plant_at(a)
            phi, gamma = transition(idx, gain_version, b - a)
            state = phi @ state + gamma @ scenario.reference.value_at(a)
        if adaptive:
            active = scenario.plants[scenario.plant_at(t_k)]
            gain = controller._advance(ctrl_state, active,
                                       scenario.output_dt)
            gain_version += 1
    return TrackingRecord(t=times, x=xs, z=zs, u=us, y=ys, r=rs,
                          scenario=scenario, gains=gains,
                          segments=segments)


def _initial_state(scenario, gain):
    init = scenario.initial_state
    if isinstance(init, str):
        if init == "zero":
            return np.zeros(scenario.na)
        return equilibrium_state(scenario.plants[0], gain,
                                 scenario.reference.value_at(0.0))
    return init.copy()


# -- metrics -------------------------------------------------------------


def tracking_error(record):
    """Per-sample output tracking error ``|y - r|`` (max over channels)."""
    return np.abs(record.y - record.r).max(axis=0)


def overshoot(record, start, end):
    """Peak absolute deviation of the output from its final reference
    level within ``[start, end]``.

    With integral action and a Hurwitz loop the post-transient
    equilibrium output equals the reference, so the deviation from the
    segment's reference level is the overshoot/undershoot envelope.
    """
    i0 = record.sample_index(start)
    i1 = record.sample_index(end)
    if i1 <= i0:
        raise DomainError("empty overshoot window")
    level = record.r[:, i1][:, None]
    return float(np.abs(record.y[:, i0:i1 + 1] - level).max())


def integrator_residual(record):
    """Deviation of the recorded integrator state from the trapezoidal
    integral of ``r - y`` along the record, relative to the integrator
    scale.  Exact simulation keeps this at the quadrature error of the
    output grid."""
    err = record.r - record.y
    quad = np.concatenate([
        np.zeros((record.z.shape[0], 1)),
        np.cumsum(0.5 * (err[:, 1:] + err[:, :-1])
                  * np.diff(record.t)[None, :], axis=1)], axis=1)
    z0 = record.z[:, :1]
    scale = 1.0 + np.abs(record.z).max()
    return float(np.abs(record.z - z0 - quad).max() / scale)


def equilibrium_residual(record):
    """Relative residual of the plant dynamics at the final sample.

    At a settled equilibrium ``A x + B u = 0``; the residual is
    normalized by the magnitude of the contributing terms."""
    plant = record.scenario.plants[record.scenario.plant_at(
        float(record.t[-1]))]
    x_end = record.x[:, -1]
    u_end = record.u[:, -1]
    resid = plant.a @ x_end + plant.b @ u_end
    scale = (np.abs(plant.a) @ np.abs(x_end)
             + np.abs(plant.b) @ np.abs(u_end))
    return float(np.max(np.abs(resid) / (1.0 + scale)))


def closed_loop_time_constant(model, gain):
    """Dominant time constant ``1 / |Re lambda_max|`` of the augmented
    closed loop; infinite when the loop is not Hurwitz."""
    aug = augment(model)
    gain = _check_gain(gain, aug)
    absc = spectral_abscissa(aug.a - aug.b @ gain)
    if absc >= 0:
        return np.inf
    return 1.0 / (-absc)
