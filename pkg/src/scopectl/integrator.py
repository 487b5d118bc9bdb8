"""Fixed-step Dormand-Prince integration and the closed-loop simulation driver."""

from __future__ import annotations

import csv
import math
from fractions import Fraction as F
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .controllers import Reference
from .plant import JointState, PlantParams, _accel

# Dormand-Prince 5(4) tableau, fifth-order weights only. Kept as exact
# rationals so rk5_step also works in extended precision.
_C = (0, F(1, 5), F(3, 10), F(4, 5), F(8, 9), 1)
_A = (
    (),
    (F(1, 5),),
    (F(3, 40), F(9, 40)),
    (F(44, 45), F(-56, 15), F(32, 9)),
    (F(19372, 6561), F(-25360, 2187), F(64448, 6561), F(-212, 729)),
    (F(9017, 3168), F(-355, 33), F(46732, 5247), F(49, 176), F(-5103, 18656)),
)
_B = (F(35, 384), 0, F(500, 1113), F(125, 192), F(-2187, 6784), F(11, 84))

DP_C = tuple(float(c) for c in _C)
DP_A = tuple(tuple(float(a) for a in row) for row in _A)
DP_B = tuple(float(b) for b in _B)

MAX_STEPS = 10**7


class IntegrationError(ArithmeticError):
    def __init__(self, t: float, message: str = "derivative is not finite"):
        super().__init__(f"{message} at t={t!r}")
        self.t = t


class DivergedError(ArithmeticError):
    """The closed loop produced a non-finite state; usually unstable gains."""

    def __init__(self, step: int, t: float):
        super().__init__(f"simulation diverged at step {step} (t={t:.6g} s)")
        self.step = step
        self.t = t


def _scaled(h, coef):
    # h * coef evaluated in h's own number type
    if isinstance(h, float):
        return h * float(coef)
    return h * coef.numerator / coef.denominator if isinstance(coef, F) else h * coef


def _all_finite(k) -> bool:
    if k.dtype.kind == "f":
        return bool(np.all(np.isfinite(k)))
    return all(v == v and abs(v) != math.inf for v in k.ravel())


def rk5_step(
    derivative_fn: Callable[[float, np.ndarray], np.ndarray],
    t: float,
    y: np.ndarray,
    h: float,
    k1: np.ndarray | None = None,
) -> np.ndarray:
    """Advance ``y`` by one fixed step of the fifth-order Dormand-Prince solution.

    ``k1`` may be passed in when the caller has already evaluated the
    derivative at ``(t, y)``. Float arrays are the normal case; object arrays
    (e.g. of mpmath numbers) are stepped in their own precision.
    """
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h!r}")
    y = np.asarray(y)
    ks = []
    for i in range(6):
        ti = t + _scaled(h, _C[i])
        if i == 0 and k1 is not None:
            k = np.asarray(k1)
        else:
            yi = y
            for a, kj in zip(_A[i], ks):
                if a:
                    yi = yi + kj * _scaled(h, a)
            k = np.asarray(derivative_fn(ti, yi))
        if not _all_finite(k):
            raise IntegrationError(ti)
        ks.append(k)
    out = y
    for b, k in zip(_B, ks):
        if b:
            out = out + k * _scaled(h, b)
    return out


@dataclass(frozen=True)
class SimConfig:
    step_size: float = 1e-3
    duration: float = 3.0
    theta_desired: tuple[float, float] = (math.radians(60.0), math.radians(50.0))
    theta_dot_desired: tuple[float, float] = (0.0, 0.0)
    theta_ddot_desired: tuple[float, float] = (0.0, 0.0)
    initial_state: JointState = field(default_factory=JointState.at_rest)

    def __post_init__(self):
        for name in ("theta_desired", "theta_dot_desired", "theta_ddot_desired"):
            v = tuple(float(x) for x in getattr(self, name))
            if len(v) != 2 or not all(math.isfinite(x) for x in v):
                raise ValueError(f"{name} must be a finite 2-vector")
            object.__setattr__(self, name, v)
        if not (math.isfinite(self.step_size) and self.step_size > 0):
            raise ValueError(f"step_size must be > 0, got {self.step_size!r}")
        if not (math.isfinite(self.duration) and self.duration >= self.step_size):
            raise ValueError("duration must be >= step_size")
        if self.duration / self.step_size > MAX_STEPS:
            raise ValueError(f"duration / step_size exceeds {MAX_STEPS}")

    @property
    def n_steps(self) -> int:
        # tolerate representation error in duration / step_size (0.3 / 0.1 etc.)
        return int(math.floor(self.duration / self.step_size + 1e-9))

    @property
    def reference(self) -> Reference:
        return Reference(self.theta_desired, self.theta_dot_desired, self.theta_ddot_desired)


@dataclass
class SimTrace:
    """Sampled closed-loop history; row ``k`` is time ``k * step_size``."""

    times: np.ndarray
    theta: np.ndarray  # (n, 2)
    theta_dot: np.ndarray  # (n, 2)
    torques: np.ndarray  # (n, 2)
    errors: np.ndarray  # (n, 2)

    def __post_init__(self):
        n = len(self.times)
        for name in ("theta", "theta_dot", "torques", "errors"):
            if getattr(self, name).shape != (n, 2):
                raise ValueError(f"{name} must have shape ({n}, 2)")

    def __len__(self):
        return len(self.times)

    @property
    def step_size(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def state(self, k: int) -> JointState:
        return JointState(self.theta[k], self.theta_dot[k])


def simulate(plant: PlantParams, controller, cfg: SimConfig) -> SimTrace:
    """Integrate the closed loop from ``cfg.initial_state`` over ``[0, duration]``.

    The controller is evaluated inside every Runge-Kutta stage; the trace
    stores the torque at the start of each step. The stepping is the same
    scheme as :func:`rk5_step`, unrolled over the four scalar states.
    """
    ref = cfg.reference
    h = cfg.step_size
    n = cfg.n_steps
    torque = controller.torque

    (a21,), (a31, a32), (a41, a42, a43), (a51, a52, a53, a54), (a61, a62, a63, a64, a65) = DP_A[1:]
    b1, _, b3, b4, b5, b6 = DP_B

    def f(q1, q2, w1, w2):
        tau1, tau2 = torque(q1, q2, w1, w2, ref, plant)
        return _accel(q1, q2, w1, w2, tau1, tau2, plant)

    out = np.empty((n + 1, 6))
    q1, q2 = (float(v) for v in cfg.initial_state.theta)
    w1, w2 = (float(v) for v in cfg.initial_state.theta_dot)
    k = 0
    try:
        for k in range(n + 1):
            tau1, tau2 = torque(q1, q2, w1, w2, ref, plant)
            out[k] = q1, q2, w1, w2, tau1, tau2
            if not (math.isfinite(q1 + q2 + w1 + w2) and math.isfinite(tau1 + tau2)):
                raise DivergedError(k, k * h)
            if k == n:
                break
            # stage derivatives: position part is the velocity, velocity part the acceleration
            p1, p2 = w1, w2
            v1, v2 = _accel(q1, q2, w1, w2, tau1, tau2, plant)
            x1 = w1 + h * a21 * v1
            x2 = w2 + h * a21 * v2
            s1, s2 = f(q1 + h * a21 * p1, q2 + h * a21 * p2, x1, x2)
            y1 = w1 + h * (a31 * v1 + a32 * s1)
            y2 = w2 + h * (a31 * v2 + a32 * s2)
            r1, r2 = f(q1 + h * (a31 * p1 + a32 * x1), q2 + h * (a31 * p2 + a32 * x2), y1, y2)
            z1 = w1 + h * (a41 * v1 + a42 * s1 + a43 * r1)
            z2 = w2 + h * (a41 * v2 + a42 * s2 + a43 * r2)
            u1, u2 = f(
                q1 + h * (a41 * p1 + a42 * x1 + a43 * y1),
                q2 + h * (a41 * p2 + a42 * x2 + a43 * y2),
                z1, z2,
            )
            g1 = w1 + h * (a51 * v1 + a52 * s1 + a53 * r1 + a54 * u1)
            g2 = w2 + h * (a51 * v2 + a52 * s2 + a53 * r2 + a54 * u2)
            m1, m2 = f(
                q1 + h * (a51 * p1 + a52 * x1 + a53 * y1 + a54 * z1),
                q2 + h * (a51 * p2 + a52 * x2 + a53 * y2 + a54 * z2),
                g1, g2,
            )
            j1 = w1 + h * (a61 * v1 + a62 * s1 + a63 * r1 + a64 * u1 + a65 * m1)
            j2 = w2 + h * (a61 * v2 + a62 * s2 + a63 * r2 + a64 * u2 + a65 * m2)
            n1, n2 = f(
                q1 + h * (a61 * p1 + a62 * x1 + a63 * y1 + a64 * z1 + a65 * g1),
                q2 + h * (a61 * p2 + a62 * x2 + a63 * y2 + a64 * z2 + a65 * g2),
                j1, j2,
            )
            q1 += h * (b1 * p1 + b3 * y1 + b4 * z1 + b5 * g1 + b6 * j1)
            q2 += h * (b1 * p2 + b3 * y2 + b4 * z2 + b5 * g2 + b6 * j2)
            w1 += h * (b1 * v1 + b3 * r1 + b4 * u1 + b5 * m1 + b6 * n1)
            w2 += h * (b1 * v2 + b3 * r2 + b4 * u2 + b5 * m2 + b6 * n2)
    except (ValueError, OverflowError, ZeroDivisionError):
        # math.cos(inf), singular inertia and friends all mean the loop blew up
        raise DivergedError(k, k * h) from None

    times = np.arange(n + 1) * h
    errors = np.asarray(ref.theta_d) - out[:, :2]
    return SimTrace(times, out[:, :2].copy(), out[:, 2:4].copy(), out[:, 4:].copy(), errors)


TRACE_COLUMNS = ("t", "theta1", "theta2", "theta1_dot", "theta2_dot", "tau1", "tau2", "e1", "e2")


def write_trace_csv(trace: SimTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        block = np.column_stack(
            [trace.times, trace.theta, trace.theta_dot, trace.torques, trace.errors]
        )
        for row in block:
            w.writerow([repr(float(v)) for v in row])


def read_trace_csv(path) -> SimTrace:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRACE_COLUMNS:
        raise ValueError(f"{Path(path).name}: unexpected trace header {rows[:1]}")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, 9)
    return SimTrace(data[:, 0], data[:, 1:3], data[:, 3:5], data[:, 5:7], data[:, 7:9])
