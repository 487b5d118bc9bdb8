"""Computed-torque control laws: PD, fuzzy, and their GA-tuned variants.

Both families share the same compensator ``tau = M(q) u + C(q, qd)`` and
differ only in how the auxiliary acceleration ``u`` is formed from the
per-axis error.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass

import numpy as np

from .fuzzy import DEFAULT_RESOLUTION, FLCDefinition, _flc_kernel, default_definition
from .plant import JointState, PlantParams, _coriolis, _inertia


def _vec2(x, name):
    v = tuple(float(a) for a in x)
    if len(v) != 2 or not all(math.isfinite(a) for a in v):
        raise ValueError(f"{name} must be a finite 2-vector, got {x!r}")
    return v


@dataclass(frozen=True)
class Reference:
    theta_d: tuple[float, float]
    theta_dot_d: tuple[float, float] = (0.0, 0.0)
    theta_ddot_d: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        for name in ("theta_d", "theta_dot_d", "theta_ddot_d"):
            object.__setattr__(self, name, _vec2(getattr(self, name), name))


@dataclass(frozen=True)
class PDGains:
    kp: tuple[float, float]
    kd: tuple[float, float]

    def __post_init__(self):
        kp, kd = _vec2(self.kp, "kp"), _vec2(self.kd, "kd")
        if min(kp + kd) <= 0:
            raise ValueError(f"PD gains must be positive, got kp={kp}, kd={kd}")
        object.__setattr__(self, "kp", kp)
        object.__setattr__(self, "kd", kd)

    def as_genes(self) -> np.ndarray:
        return np.array([self.kp[0], self.kd[0], self.kp[1], self.kd[1]])

    @classmethod
    def from_genes(cls, genes) -> "PDGains":
        kp1, kd1, kp2, kd2 = (float(g) for g in genes)
        return cls((kp1, kp2), (kd1, kd2))


def _computed_torque(q2, w1, w2, u1, u2, plant):
    m11, m12, m22 = _inertia(q2, plant)
    c1, c2 = _coriolis(q2, w1, w2, plant)
    return m11 * u1 + m12 * u2 + c1, m12 * u1 + m22 * u2 + c2


class PDController:
    """Computed-torque PD; ``label`` distinguishes hand-set from GA-tuned gains."""

    def __init__(self, gains: PDGains, label: str = "PD"):
        self.gains = gains
        self.label = label

    def torque(self, q1, q2, w1, w2, ref: Reference, plant: PlantParams):
        (kp1, kp2), (kd1, kd2) = self.gains.kp, self.gains.kd
        (r1, r2), (v1, v2), (a1, a2) = ref.theta_d, ref.theta_dot_d, ref.theta_ddot_d
        u1 = a1 + kd1 * (v1 - w1) + kp1 * (r1 - q1)
        u2 = a2 + kd2 * (v2 - w2) + kp2 * (r2 - q2)
        return _computed_torque(q2, w1, w2, u1, u2, plant)

    def __call__(self, state: JointState, ref: Reference, plant: PlantParams) -> np.ndarray:
        return np.array(self.torque(*state.theta, *state.theta_dot, ref, plant))

    def __repr__(self):
        return f"PDController({self.gains!r}, label={self.label!r})"


class FLCController:
    """Computed-torque fuzzy control: one shared fuzzy surface drives each axis."""

    def __init__(self, definition: FLCDefinition, label: str = "FLC", resolution: int = DEFAULT_RESOLUTION):
        self.definition = definition
        self.label = label
        self.resolution = resolution
        self._args = definition.packed(resolution)
        self._ge, self._gr, self._gu = definition.error_gain, definition.rate_gain, definition.output_gain

    def torque(self, q1, q2, w1, w2, ref: Reference, plant: PlantParams):
        (r1, r2), (v1, v2) = ref.theta_d, ref.theta_dot_d
        ge, gr, gu, args = self._ge, self._gr, self._gu, self._args
        u1 = gu * _flc_kernel((r1 - q1) * ge, (v1 - w1) * gr, *args)
        u2 = gu * _flc_kernel((r2 - q2) * ge, (v2 - w2) * gr, *args)
        return _computed_torque(q2, w1, w2, u1, u2, plant)

    def __call__(self, state: JointState, ref: Reference, plant: PlantParams) -> np.ndarray:
        return np.array(self.torque(*state.theta, *state.theta_dot, ref, plant))

    def __repr__(self):
        return f"FLCController(label={self.label!r})"


def pd_computed_torque(state: JointState, ref: Reference, gains: PDGains, plant: PlantParams) -> np.ndarray:
    return PDController(gains)(state, ref, plant)


def flc_computed_torque(state: JointState, ref: Reference, fdef: FLCDefinition, plant: PlantParams) -> np.ndarray:
    return FLCController(fdef)(state, ref, plant)


def ziegler_nichols_baseline(plant: PlantParams | None = None, omega: float = 5.0) -> PDGains:
    """Baseline gains for the compensated double-integrator loop.

    Ultimate-cycle Ziegler-Nichols has no finite ultimate gain on a double
    integrator, so the baseline places both closed-loop poles at ``-omega``
    (critical damping): ``kp = omega**2``, ``kd = 2 * omega``.
    """
    if not omega > 0:
        raise ValueError("omega must be positive")
    return PDGains((omega**2, omega**2), (2 * omega, 2 * omega))


CONTROLLER_KINDS = ("ga-flc", "ga-pd", "flc", "pd")
DISPLAY_NAMES = {"ga-flc": "GA-FLC", "ga-pd": "GA-PD", "flc": "FLC", "pd": "PD"}


def make_controller(kind: str, params) -> PDController | FLCController:
    """Build a controller of ``kind`` from ``PDGains`` or an ``FLCDefinition``."""
    label = DISPLAY_NAMES[kind]
    if kind in ("pd", "ga-pd"):
        if not isinstance(params, PDGains):
            raise TypeError(f"{kind} needs PDGains, got {type(params).__name__}")
        return PDController(params, label)
    if not isinstance(params, FLCDefinition):
        raise TypeError(f"{kind} needs an FLCDefinition, got {type(params).__name__}")
    return FLCController(params, label)


def default_params(kind: str):
    return ziegler_nichols_baseline() if kind in ("pd", "ga-pd") else default_definition()


# -- PD gain files -------------------------------------------------------------

def dumps_gains(gains: PDGains) -> str:
    return (
        "# computed-torque PD gains, per axis (RA, DEC)\n"
        "[pd]\n"
        f"kp = {gains.kp[0]!r}, {gains.kp[1]!r}\n"
        f"kd = {gains.kd[0]!r}, {gains.kd[1]!r}\n"
    )


def loads_gains(text: str) -> PDGains:
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_string(text)
    try:
        sec = cp["pd"]
        kp = [float(v) for v in sec["kp"].split(",")]
        kd = [float(v) for v in sec["kd"].split(",")]
    except KeyError as exc:
        raise ValueError(f"PD gains file missing {exc}") from None
    return PDGains(kp, kd)


def write_gains(gains: PDGains, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps_gains(gains))


def read_gains(path) -> PDGains:
    with open(path) as fh:
        return loads_gains(fh.read())
