"""Excitation signals, exact simulation and experiment data collection.

Two sampling schemes produce equivalent data matrices for the synthesis
pipeline:

* the *derivative* variant samples state, input and state derivative at
  instants ``k * sample_interval``;
* the *integral* variant (no derivative measurements needed) integrates
  state, input and output over windows ``[t_k, t_k + window]`` and
  records the state increment over each window.

Both are computed exactly (to machine precision) through augmented
matrix exponentials over each interval where the piecewise-constant
input is constant, so the downstream algebraic identities hold to
roundoff; there is no quadrature error.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError
from .linalg import as_matrix, matrix_exponential, numerical_rank

__all__ = [
    "ExcitationSignal",
    "random_excitation",
    "simulate_zoh",
    "collect_derivative_data",
    "collect_integral_data",
    "DataBatch",
    "CovariancePack",
    "build_covariances",
    "check_pe_rank",
    "PeRankReport",
    "pe_sample_bound",
]


@dataclass(frozen=True)
class ExcitationSignal:
    """Piecewise-constant input signal: ``values[:, j]`` is held on
    ``[j * hold, (j + 1) * hold)``."""

    values: np.ndarray
    hold: float

    def __post_init__(self):
        values = as_matrix(self.values, "values")
        if self.hold <= 0:
            raise DomainError("hold time must be positive")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "hold", float(self.hold))

    @property
    def m(self):
        return self.values.shape[0]

    @property
    def duration(self):
        return self.values.shape[1] * self.hold

    def value_at(self, t):
        """Input value at time ``t`` (right-continuous at hold
        boundaries, clamped to the final segment at the end)."""
        idx = int(np.floor(t / self.hold + 1e-9))
        idx = min(max(idx, 0), self.values.shape[1] - 1)
        return self.values[:, idx]

    def breakpoints(self, horizon):
        """Hold boundaries strictly inside ``(0, horizon)``."""
        count = self.values.shape[1]
        pts = self.hold * np.arange(1, count + 1)
        return pts[pts < horizon * (1.0 - 1e-12)]


def random_excitation(m, duration, hold, amplitude, rng):
    """Uniform random piecewise-constant excitation on ``[0, duration]``.

    ``amplitude = 0`` is allowed and yields the zero signal, which is
    useful for exercising rank-failure paths downstream.
    """
    if amplitude < 0:
        raise DomainError("amplitude must be nonnegative")
    if duration <= 0 or hold <= 0:
        raise DomainError("duration and hold must be positive")
    count = int(np.ceil(duration / hold - 1e-9))
    values = rng.uniform(-amplitude, amplitude, size=(m, count))
    return ExcitationSignal(values=values, hold=hold)


def simulate_zoh(model, u, dt, x0=None):
    """Simulate the plant under a zero-order-hold input sequence.

    ``u`` is ``m x N`` (one column per step of length ``dt``); returns
    the ``n x (N + 1)`` state trajectory, computed with the exact
    discretization ``exp([[A, B], [0, 0]] dt)``.
    """
    u = as_matrix(u, "u")
    if u.shape[0] != model.m:
        raise DimensionError(f"u has {u.shape[0]} rows, expected {model.m}")
    if dt <= 0:
        raise DomainError("dt must be positive")
    n, m = model.n, model.m
    x0 = _check_x0(x0, n)
    block = np.zeros((n + m, n + m))
    block[:n, :n] = model.a
    block[:n, n:] = model.b
    ex = matrix_exponential(block, dt)
    ad = ex[:n, :n]
    bd = ex[:n, n:]
    steps = u.shape[1]
    states = np.empty((n, steps + 1))
    states[:, 0] = x0
    for k in range(steps):
        states[:, k + 1] = ad @ states[:, k] + bd @ u[:, k]
    return states


def _check_x0(x0, n):
    if x0 is None:
        return np.zeros(n)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != n:
        raise DimensionError(f"x0 has length {x0.shape[0]}, expected {n}")
    if not np.all(np.isfinite(x0)):
        raise DomainError("x0 has non-finite entries")
    return x0


def _as_excitation(excitation, default_hold):
    if isinstance(excitation, ExcitationSignal):
        return excitation
    return ExcitationSignal(values=np.asarray(excitation, dtype=float),
                            hold=default_hold)


def _merge_times(horizon, *groups):
    """Sorted unique time grid on ``[0, horizon]`` from the given instant
    groups, merging values that differ only by float roundoff."""
    pts = np.concatenate([np.atleast_1d(np.asarray(g, dtype=float))
                          for g in groups] + [np.array([0.0, horizon])])
    pts = np.sort(pts[(pts >= 0.0) & (pts <= horizon * (1 + 1e-12))])
    tol = 1e-12 * max(1.0, horizon)
    keep = [pts[0]]
    for t in pts[1:]:
        if t - keep[-1] > tol:
            keep.append(t)
    return np.array(keep)


def _grid_index(grid, t, horizon):
    idx = int(np.searchsorted(grid, t - 1e-12 * max(1.0, horizon)))
    if idx >= len(grid) or abs(grid[idx] - t) > 1e-9 * max(1.0, horizon):
        raise DomainError(f"time {t} is not on the simulation grid")
    return idx


def pe_sample_bound(n, m):
    """Minimum sample count for persistently exciting data of order
    ``n + 1`` with ``m`` inputs: ``(m + 1) n + m``."""
    return (m + 1) * n + m


def collect_derivative_data(model, excitation, sample_interval,
                            num_samples=None, x0=None):
    """Sample state, input and state derivative on a uniform grid.

    Samples are taken at ``t_k = k * sample_interval`` for
    ``k = 0 .. num_samples - 1``; the derivative column is the exact
    right-hand side ``A x(t_k) + B u(t_k)`` of the true trajectory.
    """
    excitation = _as_excitation(excitation, sample_interval)
    if excitation.m != model.m:
        raise DimensionError(
            f"excitation has {excitation.m} channels, expected {model.m}")
    if sample_interval <= 0:
        raise DomainError("sample_interval must be positive")
    duration = excitation.duration
    if num_samples is None:
        num_samples = int(np.floor(duration / sample_interval + 1e-9))
    if num_samples < 1:
        raise DomainError("need at least one sample")
    horizon = (num_samples - 1) * sample_interval
    if horizon >= duration * (1.0 - 1e-12):
        raise DomainError(
            "excitation does not cover the sampling horizon: last sample "
            f"at t={horizon:.6g} but the input ends at t={duration:.6g}")
    _warn_if_short(num_samples, model)

    sample_times = sample_interval * np.arange(num_samples)
    grid = _merge_times(horizon, sample_times,
                        excitation.breakpoints(horizon))
    states = _propagate(model, excitation, grid, _check_x0(x0, model.n),
                        with_integrals=False)
    idx = [_grid_index(grid, t, horizon) for t in sample_times]
    x = states[:model.n, idx]
    u = np.column_stack([excitation.value_at(t) for t in sample_times])
    xp = model.a @ x + model.b @ u
    y = model.c @ x
    return DataBatch(x=x, u=u, xp=xp, y=y, variant="derivative",
                     sample_interval=float(sample_interval), window=None)


def collect_integral_data(model, excitation, sample_interval, window,
                          num_samples=None, x0=None):
    """Collect windowed-integral data (derivative-free sampling).

    For each ``t_k = k * sample_interval`` the batch stores the integrals
    of state, input and output over ``[t_k, t_k + window]`` and the state
    increment ``x(t_k + window) - x(t_k)``, all computed exactly by
    propagating running integrals alongside the state.
    """
    excitation = _as_excitation(excitation, sample_interval)
    if excitation.m != model.m:
        raise DimensionError(
            f"excitation has {excitation.m} channels, expected {model.m}")
    if sample_interval <= 0:
        raise DomainError("sample_interval must be positive")
    if window <= 0:
        raise DomainError("window must be positive")
    duration = excitation.duration
    if num_samples is None:
        num_samples = int(np.floor(
            (duration - window) / sample_interval + 1e-9)) + 1
    if num_samples < 1:
        raise DomainError("need at least one sample")
    horizon = (num_samples - 1) * sample_interval + window
    if horizon > duration * (1.0 + 1e-12):
        raise DomainError(
            "excitation does not cover the sampling horizon: windows end "
            f"at t={horizon:.6g} but the input ends at t={duration:.6g}")
    _warn_if_short(num_samples, model)

    n = model.n
    starts = sample_interval * np.arange(num_samples)
    ends = starts + window
    grid = _merge_times(horizon, starts, ends,
                        excitation.breakpoints(horizon))
    states = _propagate(model, excitation, grid, _check_x0(x0, n),
                        with_integrals=True)
    i_start = [_grid_index(grid, t, horizon) for t in starts]
    i_end = [_grid_index(grid, t, horizon) for t in ends]
    xs = states[:n, :]
    sx = states[n:2 * n, :]
    su = states[2 * n:2 * n + model.m, :]
    x = sx[:, i_end] - sx[:, i_start]
    u = su[:, i_end] - su[:, i_start]
    xp = xs[:, i_end] - xs[:, i_start]
    y = model.c @ x
    return DataBatch(x=x, u=u, xp=xp, y=y, variant="integral",
                     sample_interval=float(sample_interval),
                     window=float(window))


def _warn_if_short(num_samples, model):
    bound = pe_sample_bound(model.n, model.m)
    if num_samples < bound:
        warnings.warn(
            f"only {num_samples} samples collected; persistency of "
            f"excitation requires at least {bound} for this plant",
            stacklevel=3)


def _propagate(model, excitation, grid, x0, with_integrals):
    """Propagate the state (and, optionally, running integrals of state
    and input) across the time grid, exactly per constant-input span."""
    n, m = model.n, model.m
    if with_integrals:
        dim = 2 * n + 2 * m
        gen = np.zeros((dim, dim))
        gen[:n, :n] = model.a
        gen[:n, 2 * n + m:] = model.b
        gen[n:2 * n, :n] = np.eye(n)
        gen[2 * n:2 * n + m, 2 * n + m:] = np.eye(m)
        state = np.zeros(dim)
        state[:n] = x0
    else:
        dim = n + m
        gen = np.zeros((dim, dim))
        gen[:n, :n] = model.a
        gen[:n, n:] = model.b
        state = np.zeros(dim)
        state[:n] = x0
    u_dim = m
    out = np.empty((dim - u_dim, len(grid)))
    out[:, 0] = state[:dim - u_dim]
    cache = {}
    for i in range(len(grid) - 1):
        dt = grid[i + 1] - grid[i]
        key = float(dt)
        ex = cache.get(key)
        if ex is None:
            ex = matrix_exponential(gen, dt)
            cache[key] = ex
        state[dim - u_dim:] = excitation.value_at(grid[i])
        state = ex @ state
        out[:, i + 1] = state[:dim - u_dim]
    return out


@dataclass(frozen=True)
class DataBatch:
    """Raw experiment data: one column per sample.

    For the derivative variant the columns are point samples of state,
    input, state derivative and output; for the integral variant they
    are window integrals of state/input/output and the window state
    increment.
    """

    x: np.ndarray
    u: np.ndarray
    xp: np.ndarray
    y: np.ndarray
    variant: str
    sample_interval: float
    window: float | None

    def __post_init__(self):
        if self.variant not in ("derivative", "integral"):
            raise DomainError(f"unknown variant {self.variant!r}")
        x = as_matrix(self.x, "x")
        u = as_matrix(self.u, "u")
        xp = as_matrix(self.xp, "xp")
        y = as_matrix(self.y, "y")
        t = x.shape[1]
        if u.shape[1] != t or xp.shape[1] != t or y.shape[1] != t:
            raise DimensionError("all data blocks must share the sample "
                                 "count")
        if xp.shape[0] != x.shape[0]:
            raise DimensionError("x and xp must share the state dimension")
        if self.variant == "integral" and not self.window:
            raise DomainError("integral batches require a window length")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "xp", xp)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def m(self):
        return self.u.shape[0]

    @property
    def p(self):
        return self.y.shape[0]

    @property
    def num_samples(self):
        return self.x.shape[1]


@dataclass(frozen=True)
class CovariancePack:
    """Sample covariances of the data against the regressor stack
    ``[U; X]``, all scaled by ``1 / num_samples``.

    ``xbar = X [U; X]^T / T`` and likewise for ``ubar``, ``xpbar`` and
    ``ybar``; every downstream synthesis step consumes only this pack.
    """

    xbar: np.ndarray
    ubar: np.ndarray
    xpbar: np.ndarray
    ybar: np.ndarray
    variant: str
    num_samples: int

    @property
    def n(self):
        return self.xbar.shape[0]

    @property
    def m(self):
        return self.ubar.shape[0]

    @property
    def p(self):
        return self.ybar.shape[0]

    @property
    def ns(self):
        """Regressor dimension ``n + m``."""
        return self.xbar.shape[1]


def build_covariances(batch):
    """Form the sample-covariance pack from a raw data batch."""
    t = batch.num_samples
    z = np.vstack([batch.u, batch.x])
    zt = z.T / t
    return CovariancePack(
        xbar=batch.x @ zt,
        ubar=batch.u @ zt,
        xpbar=batch.xp @ zt,
        ybar=batch.y @ zt,
        variant=batch.variant,
        num_samples=t,
    )


@dataclass(frozen=True)
class PeRankReport:
    """Rank diagnostics of the stacked covariance ``[xbar; ubar]``."""

    ok: bool
    rank: int
    required: int
    singular_values: np.ndarray
    threshold: float
    condition: float


def check_pe_rank(pack):
    """Verify the data-richness condition: the stacked covariance
    ``[xbar; ubar]`` must have full rank ``n + m`` (equivalently, the
    raw regressor stack ``[U; X]`` has full row rank)."""
    stacked = np.vstack([pack.xbar, pack.ubar])
    rank, svals, threshold = numerical_rank(stacked)
    required = pack.n + pack.m
    ok = rank == required
    condition = float(svals[0] / svals[-1]) if ok and svals[-1] > 0 \
        else float("inf")
    return PeRankReport(ok=ok, rank=rank, required=required,
                        singular_values=svals, threshold=threshold,
                        condition=condition)
