"""Plant models, integral augmentation and solvability checks.

The central object is a continuous-time LTI plant

    dx/dt = A x + B u,    y = C x.

For output tracking with zero steady-state error the plant is augmented
with one integrator per output, ``dz/dt = r - y``; the augmented system

    A_aug = [[A, 0], [-C, 0]],    B_aug = [[B], [0]]

is regulated by a static gain ``K = [K_x, K_z]`` acting on the augmented
state ``[x; z]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, SingularMatrixError
from .linalg import as_matrix, psd_sqrt

__all__ = [
    "LtiModel",
    "AugmentedModel",
    "WeightSpec",
    "augment",
    "pid_to_augmented_gain",
    "check_aug_stabilizable",
    "check_aug_detectable",
    "StabilizabilityReport",
    "DetectabilityReport",
]

#: Eigenvalues with real part above this (negative) band count as
#: "closed right half plane" in all solvability tests.
EIG_BAND = 1e-9


@dataclass(frozen=True)
class LtiModel:
    """Continuous-time LTI plant ``dx/dt = A x + B u``, ``y = C x``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        a = as_matrix(self.a, "a", square=True)
        b = as_matrix(self.b, "b")
        c = as_matrix(self.c, "c")
        n = a.shape[0]
        if b.shape[0] != n:
            raise DimensionError(
                f"b has {b.shape[0]} rows, expected {n}")
        if c.shape[1] != n:
            raise DimensionError(
                f"c has {c.shape[1]} columns, expected {n}")
        if b.shape[1] < 1 or c.shape[0] < 1:
            raise DimensionError("b and c must be non-empty")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def n(self):
        """State dimension."""
        return self.a.shape[0]

    @property
    def m(self):
        """Input dimension."""
        return self.b.shape[1]

    @property
    def p(self):
        """Output dimension."""
        return self.c.shape[0]


@dataclass(frozen=True)
class AugmentedModel:
    """Plant with output integrators appended to the state."""

    a: np.ndarray
    b: np.ndarray
    n: int
    m: int
    p: int

    @property
    def na(self):
        """Augmented state dimension ``n + p``."""
        return self.n + self.p

    @property
    def reference_injection(self):
        """Matrix mapping the reference into the augmented dynamics
        (``dz/dt = r - y`` contributes ``[[0], [I_p]] r``)."""
        e = np.zeros((self.na, self.p))
        e[self.n:, :] = np.eye(self.p)
        return e


def augment(model):
    """Append one output integrator per output channel."""
    n, m, p = model.n, model.m, model.p
    a_aug = np.zeros((n + p, n + p))
    a_aug[:n, :n] = model.a
    a_aug[n:, :n] = -model.c
    b_aug = np.zeros((n + p, m))
    b_aug[:n, :] = model.b
    return AugmentedModel(a=a_aug, b=b_aug, n=n, m=m, p=p)


@dataclass(frozen=True)
class WeightSpec:
    """Quadratic cost weights: ``qx`` on the plant state (positive
    semidefinite), ``qz`` on the tracking integrators and ``r`` on the
    input (both positive definite)."""

    qx: np.ndarray
    qz: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        qx = as_matrix(self.qx, "qx", square=True)
        qz = as_matrix(self.qz, "qz", square=True)
        r = as_matrix(self.r, "r", square=True)
        _require_symmetric(qx, "qx")
        _require_symmetric(qz, "qz")
        _require_symmetric(r, "r")
        if np.linalg.eigvalsh(qx).min() < -1e-10 * _scale(qx):
            raise DomainError("qx must be positive semidefinite")
        if np.linalg.eigvalsh(qz).min() <= 1e-12 * _scale(qz):
            raise DomainError("qz must be positive definite")
        if np.linalg.eigvalsh(r).min() <= 1e-12 * _scale(r):
            raise DomainError("r must be positive definite")
        object.__setattr__(self, "qx", qx)
        object.__setattr__(self, "qz", qz)
        object.__setattr__(self, "r", r)

    def augmented_state_weight(self):
        """Block-diagonal weight on the augmented state ``[x; z]``."""
        nx = self.qx.shape[0]
        nz = self.qz.shape[0]
        qa = np.zeros((nx + nz, nx + nz))
        qa[:nx, :nx] = self.qx
        qa[nx:, nx:] = self.qz
        return qa


def _scale(m):
    return max(1.0, float(np.linalg.norm(m)))


def _require_symmetric(m, name):
    if np.linalg.norm(m - m.T) > 1e-10 * _scale(m):
        raise DomainError(f"{name} must be symmetric")


def pid_to_augmented_gain(model, kp, ki, kd=None):
    """Convert output-feedback PID gains to an equivalent augmented
    state-feedback gain.

    For ``u = -K_P y - K_I integral(y - r) - K_D dy/dt`` the matching
    static gain on ``[x; z]`` is

        K = (I + K_D C B)^{-1} [K_P C + K_D C A,  K_I]

    (with the integrator defined as ``dz/dt = r - y``, the integral
    column keeps its sign through ``u = -K [x; z]``).
    """
    kp = as_matrix(kp, "kp")
    ki = as_matrix(ki, "ki")
    m, p = model.m, model.p
    if kp.shape != (m, p) or ki.shape != (m, p):
        raise DimensionError(f"kp and ki must have shape {(m, p)}")
    if kd is None:
        kd = np.zeros((m, p))
    else:
        kd = as_matrix(kd, "kd")
        if kd.shape != (m, p):
            raise DimensionError(f"kd must have shape {(m, p)}")
    lhs = np.eye(m) + kd @ model.c @ model.b
    if abs(np.linalg.det(lhs)) < 1e-12:
        raise SingularMatrixError(
            "derivative feedback makes the input loop singular "
            "(I + K_D C B is not invertible)")
    kx = np.linalg.solve(lhs, kp @ model.c + kd @ model.c @ model.a)
    kz = np.linalg.solve(lhs, ki)
    return np.hstack([kx, kz])


@dataclass(frozen=True)
class StabilizabilityReport:
    """Outcome of the augmented-stabilizability check."""

    ok: bool
    eig_ok: bool
    rank_ok: bool
    failing_eigenvalue: complex | None
    rank: int
    required_rank: int


@dataclass(frozen=True)
class DetectabilityReport:
    """Outcome of the augmented-detectability check."""

    ok: bool
    failing_eigenvalue: complex | None


def check_aug_stabilizable(model):
    """Check that the integrator-augmented plant is stabilizable.

    Two conditions: (i) every eigenvalue of ``A`` in the closed right
    half plane is controllable (eigenvector test on ``[lambda I - A, B]``)
    and (ii) ``[[A, B], [C, 0]]`` has full row rank ``n + p`` (no
    transmission zero at the origin blocking the integrators).
    """
    n, m, p = model.n, model.m, model.p
    eig_ok = True
    failing = None
    for ev in np.linalg.eigvals(model.a):
        if ev.real < -EIG_BAND:
            continue
        pencil = np.hstack([ev * np.eye(n) - model.a.astype(complex),
                            model.b.astype(complex)])
        if np.linalg.matrix_rank(pencil) < n:
            eig_ok = False
            failing = complex(ev)
            break
    block = np.zeros((n + p, n + m))
    block[:n, :n] = model.a
    block[:n, n:] = model.b
    block[n:, :n] = model.c
    rank = int(np.linalg.matrix_rank(block))
    rank_ok = rank == n + p
    return StabilizabilityReport(
        ok=eig_ok and rank_ok,
        eig_ok=eig_ok,
        rank_ok=rank_ok,
        failing_eigenvalue=failing,
        rank=rank,
        required_rank=n + p,
    )


def check_aug_detectable(model, weights):
    """Check that the augmented pair (dynamics, cost output) is
    detectable.

    With a positive definite integrator weight this reduces to the
    eigenvector test on ``(A, [C; qx^{1/2}])``: no eigenvector of ``A``
    in the closed right half plane may be invisible to both the output
    and the state weight.
    """
    n = model.n
    if weights.qx.shape[0] != n:
        raise DimensionError(
            f"qx has dimension {weights.qx.shape[0]}, expected {n}")
    qx_half = psd_sqrt(weights.qx)
    stack = np.vstack([model.c, qx_half])
    for ev in np.linalg.eigvals(model.a):
        if ev.real < -EIG_BAND:
            continue
        pencil = np.vstack([ev * np.eye(n) - model.a.astype(complex),
                            stack.astype(complex)])
        if np.linalg.matrix_rank(pencil) < n:
            return DetectabilityReport(ok=False,
                                       failing_eigenvalue=complex(ev))
    return DetectabilityReport(ok=True, failing_eigenvalue=None)
