"""Two-link rigid-body model of a two-axis telescope mount.

The inertia and Coriolis terms use the planar two-link revolute arm closed
forms parameterised by three lumped coefficients ``a1, a2, a3``::

    M(q) = [[a1 + 2 a2 cos q2, a3 + a2 cos q2],
            [a3 + a2 cos q2,   a3           ]]
    C(q, qd) = [-a2 sin q2 (qd2^2 + 2 qd1 qd2), a2 sin q2 qd1^2]

Gravity is off by default (a balanced mount); a constant disturbance torque
``tau_d`` can be added on either axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class PlantError(ValueError):
    """Invalid plant parameters or non-finite plant input."""


class SingularInertiaError(PlantError):
    pass


def _as_vec2(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (2,):
        raise PlantError(f"{name} must be a 2-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise PlantError(f"{name} must be finite, got {v}")
    return v


@dataclass(frozen=True)
class JointState:
    """Joint angles (rad) and angular velocities (rad/s) of both axes."""

    theta: np.ndarray
    theta_dot: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", _as_vec2(self.theta, "theta"))
        object.__setattr__(self, "theta_dot", _as_vec2(self.theta_dot, "theta_dot"))

    @classmethod
    def at_rest(cls, theta=(0.0, 0.0)) -> "JointState":
        return cls(np.asarray(theta, dtype=float), np.zeros(2))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.theta, self.theta_dot])


_DET_GRID = np.linspace(-math.pi, math.pi, 721)


@dataclass(frozen=True)
class PlantParams:
    a1: float = 0.12
    a2: float = 0.03
    a3: float = 0.02
    gravity_enabled: bool = False
    g1_coeff: float = 0.0
    g2_coeff: float = 0.0
    tau_d: tuple[float, float] = field(default=(0.0, 0.0))

    def __post_init__(self):
        for name in ("a1", "a2", "a3", "g1_coeff", "g2_coeff"):
            if not math.isfinite(getattr(self, name)):
                raise PlantError(f"{name} must be finite")
        tau_d = tuple(float(v) for v in _as_vec2(self.tau_d, "tau_d"))
        object.__setattr__(self, "tau_d", tau_d)
        if self.a1 <= 0 or self.a3 <= 0:
            raise PlantError("a1 and a3 must be positive")
        # det M(q2) over a full turn of the second axis
        c = np.cos(_DET_GRID)
        det = (self.a1 + 2 * self.a2 * c) * self.a3 - (self.a3 + self.a2 * c) ** 2
        if det.min() <= 1e-12 * self.scale**2:
            raise PlantError(
                f"inertia matrix is (near) singular for some q2: min det = {det.min():.3g}"
            )

    @property
    def scale(self) -> float:
        return abs(self.a1) + 2 * abs(self.a2) + abs(self.a3)


PROFILES: dict[str, PlantParams] = {
    "kao-14in-default": PlantParams(a1=0.12, a2=0.03, a3=0.02),
}


def plant_profile(name: str) -> PlantParams:
    try:
        return PROFILES[name]
    except KeyError:
        raise PlantError(
            f"unknown plant profile {name!r}; known: {', '.join(sorted(PROFILES))}"
        ) from None


# Scalar kernels shared by the public operations and the simulation loop.
# They skip validation; callers guarantee finite input.

def _inertia(q2: float, p: PlantParams) -> tuple[float, float, float]:
    c = math.cos(q2)
    m12 = p.a3 + p.a2 * c
    return p.a1 + 2 * p.a2 * c, m12, p.a3


def _coriolis(q2: float, qd1: float, qd2: float, p: PlantParams) -> tuple[float, float]:
    s = p.a2 * math.sin(q2)
    return -s * (qd2 * qd2 + 2 * qd1 * qd2), s * qd1 * qd1


def _gravity(q1: float, q2: float, p: PlantParams) -> tuple[float, float]:
    if not p.gravity_enabled:
        return 0.0, 0.0
    return p.g1_coeff * math.cos(q1), p.g2_coeff * math.cos(q1 + q2)


def _accel(q1, q2, qd1, qd2, tau1, tau2, p: PlantParams) -> tuple[float, float]:
    m11, m12, m22 = _inertia(q2, p)
    c1, c2 = _coriolis(q2, qd1, qd2, p)
    g1, g2 = _gravity(q1, q2, p)
    r1 = tau1 - c1 - g1 - p.tau_d[0]
    r2 = tau2 - c2 - g2 - p.tau_d[1]
    det = m11 * m22 - m12 * m12
    if abs(det) < 1e-12 * p.scale**2:
        raise SingularInertiaError(f"inertia matrix singular at q2={q2!r} (det={det:.3g})")
    return (m22 * r1 - m12 * r2) / det, (m11 * r2 - m12 * r1) / det


def inertia_matrix(theta, params: PlantParams) -> np.ndarray:
    q = _as_vec2(theta, "theta")
    m11, m12, m22 = _inertia(q[1], params)
    return np.array([[m11, m12], [m12, m22]])


def coriolis_vector(state: JointState, params: PlantParams) -> np.ndarray:
    return np.array(_coriolis(state.theta[1], *state.theta_dot, params))


def gravity_vector(theta, params: PlantParams) -> np.ndarray:
    q = _as_vec2(theta, "theta")
    return np.array(_gravity(q[0], q[1], params))


def forward_dynamics(state: JointState, tau, params: PlantParams) -> np.ndarray:
    """Joint accelerations ``M^-1 (tau - C - G - tau_d)``."""
    t = _as_vec2(tau, "tau")
    return np.array(_accel(*state.theta, *state.theta_dot, t[0], t[1], params))


def total_energy(state: JointState, params: PlantParams) -> float:
    """Kinetic energy ``0.5 qd^T M(q) qd``.

    The cosine gravity model is not the gradient of any potential, so there is
    no consistent potential term; energy is only defined with gravity off.
    """
    if params.gravity_enabled:
        raise PlantError("total_energy is only defined with gravity disabled")
    m11, m12, m22 = _inertia(state.theta[1], params)
    w1, w2 = state.theta_dot
    return 0.5 * (m11 * w1 * w1 + 2 * m12 * w1 * w2 + m22 * w2 * w2)
