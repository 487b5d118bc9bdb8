"""Mamdani fuzzy inference with triangular memberships and centre-of-area output.

Each linguistic variable carries five triangular sets labelled NL, NS, Z, PS,
PL. Rules are a 5x5 table indexed by (error label, error-rate label); firing
strength is ``min`` and aggregation is ``max``. The crisp output is the
centroid of the aggregated set sampled uniformly over the output universe.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from numba import njit

LABELS = ("NL", "NS", "Z", "PS", "PL")
_INDEX = {lab: i for i, lab in enumerate(LABELS)}
DEFAULT_RESOLUTION = 1001


class FuzzyDefinitionError(ValueError):
    pass


def _tri_py(x, left, peak, right):
    if x < left or x > right:
        return 0.0
    if x == peak:
        return 1.0
    if x < peak:
        return (x - left) / (peak - left)
    return (right - x) / (right - peak)


_tri = njit(cache=True)(_tri_py)


@dataclass(frozen=True)
class TriangularMF:
    left: float
    peak: float
    right: float

    def __post_init__(self):
        vals = (self.left, self.peak, self.right)
        if not all(math.isfinite(v) for v in vals):
            raise FuzzyDefinitionError(f"non-finite vertex in {vals}")
        if not (self.left <= self.peak <= self.right and self.left < self.right):
            raise FuzzyDefinitionError(f"need left <= peak <= right and left < right, got {vals}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.left, self.peak, self.right)


def membership(mf: TriangularMF, x: float) -> float:
    """Grade of ``x`` in ``mf``; a vertical flank when ``left == peak`` or ``peak == right``."""
    return _tri_py(float(x), mf.left, mf.peak, mf.right)


def _grades_on(mf: TriangularMF, xs: np.ndarray) -> np.ndarray:
    out = np.zeros_like(xs)
    l, p, r = mf.as_tuple()
    rising = (xs >= l) & (xs < p)
    falling = (xs > p) & (xs <= r)
    if p > l:
        out[rising] = (xs[rising] - l) / (p - l)
    if r > p:
        out[falling] = (r - xs[falling]) / (r - p)
    out[xs == p] = 1.0
    return out


@dataclass(frozen=True)
class FuzzyVariable:
    mfs: tuple[TriangularMF, ...]
    universe_min: float
    universe_max: float

    def __post_init__(self):
        mfs = tuple(m if isinstance(m, TriangularMF) else TriangularMF(*m) for m in self.mfs)
        object.__setattr__(self, "mfs", mfs)
        if len(mfs) != len(LABELS):
            raise FuzzyDefinitionError(f"expected {len(LABELS)} sets, got {len(mfs)}")
        if not self.universe_min < self.universe_max:
            raise FuzzyDefinitionError("universe_min must be below universe_max")
        peaks = [m.peak for m in mfs]
        if any(b <= a for a, b in zip(peaks, peaks[1:])):
            raise FuzzyDefinitionError(f"peaks must increase strictly across labels: {peaks}")
        gap = self._coverage_gap()
        if gap is not None:
            raise FuzzyDefinitionError(f"universe not covered near x={gap!r}")

    def _coverage_gap(self) -> float | None:
        # membership is piecewise linear between vertices, so checking every
        # vertex and every midpoint between consecutive vertices is exhaustive
        lo, hi = self.universe_min, self.universe_max
        pts = {lo, hi}
        for m in self.mfs:
            pts.update(v for v in m.as_tuple() if lo <= v <= hi)
        pts = sorted(pts)
        probes = pts + [0.5 * (a + b) for a, b in zip(pts, pts[1:])]
        for x in probes:
            if max(membership(m, x) for m in self.mfs) <= 0.0:
                return x
        return None

    @property
    def width(self) -> float:
        return self.universe_max - self.universe_min

    def clamp(self, x: float) -> float:
        return min(max(float(x), self.universe_min), self.universe_max)

    def vertices(self) -> np.ndarray:
        return np.array([m.as_tuple() for m in self.mfs])


def uniform_variable(half_width: float) -> FuzzyVariable:
    """Five evenly spaced triangles with 50% overlap; peaks at ``k * half_width``."""
    peaks = [k * half_width for k in (-2, -1, 0, 1, 2)]
    mfs = tuple(TriangularMF(p - half_width, p, p + half_width) for p in peaks)
    return FuzzyVariable(mfs, peaks[0], peaks[-1])


def fuzzify(var: FuzzyVariable, x: float) -> np.ndarray:
    x = var.clamp(x)
    return np.array([membership(m, x) for m in var.mfs])


DEFAULT_RULES = (
    ("NL", "NL", "NL", "NS", "Z"),
    ("NL", "NL", "NS", "Z", "PS"),
    ("NL", "NS", "Z", "PS", "PL"),
    ("NS", "Z", "PS", "PL", "PL"),
    ("Z", "PS", "PL", "PL", "PL"),
)


@dataclass(frozen=True)
class RuleBase:
    """Consequent labels; ``table[i][j]`` is the output for error label i, rate label j."""

    table: tuple[tuple[str, ...], ...] = DEFAULT_RULES

    def __post_init__(self):
        table = tuple(tuple(row) for row in self.table)
        object.__setattr__(self, "table", table)
        if len(table) != 5 or any(len(row) != 5 for row in table):
            raise FuzzyDefinitionError("rule table must be 5x5")
        bad = {c for row in table for c in row} - set(LABELS)
        if bad:
            raise FuzzyDefinitionError(f"unknown consequent labels {sorted(bad)}")

    def indices(self) -> np.ndarray:
        return np.array([[_INDEX[c] for c in row] for row in self.table], dtype=np.int64)

    def consequent(self, e_label: str, de_label: str) -> str:
        return self.table[_INDEX[e_label]][_INDEX[de_label]]


def infer(rules: RuleBase, grades_e, grades_de) -> list[tuple[str, float]]:
    """All 25 rule activations as ``(consequent label, min(grade_e, grade_de))``."""
    return [
        (rules.table[i][j], min(float(grades_e[i]), float(grades_de[j])))
        for i in range(5)
        for j in range(5)
    ]


def aggregate(activations) -> np.ndarray:
    """Per-label strength, taking the max over rules sharing a consequent."""
    s = np.zeros(5)
    for label, w in activations:
        k = _INDEX[label]
        s[k] = max(s[k], w)
    return s


def defuzzify_coa(var_out: FuzzyVariable, activations, resolution: int = DEFAULT_RESOLUTION) -> float:
    if resolution < 100:
        raise ValueError("resolution must be >= 100")
    strengths = aggregate(activations)
    ys = np.linspace(var_out.universe_min, var_out.universe_max, resolution)
    mu = np.zeros(resolution)
    for s, mf in zip(strengths, var_out.mfs):
        if s > 0:
            np.maximum(mu, np.minimum(s, _grades_on(mf, ys)), out=mu)
    mu[[0, -1]] *= 0.5  # trapezoid rule; matters when a shoulder set is cut off at the universe edge
    den = mu.sum()
    if den == 0:
        return 0.5 * (var_out.universe_min + var_out.universe_max)
    return float(np.dot(ys, mu) / den)


@njit(cache=True)
def _flc_kernel(e, de, emf, elo, ehi, rmf, rlo, rhi, table, ys, osamp, ospan, mid):
    e = min(max(e, elo), ehi)
    de = min(max(de, rlo), rhi)
    ge = np.empty(5)
    gd = np.empty(5)
    for i in range(5):
        ge[i] = _tri(e, emf[i, 0], emf[i, 1], emf[i, 2])
        gd[i] = _tri(de, rmf[i, 0], rmf[i, 1], rmf[i, 2])
    s = np.zeros(5)
    for i in range(5):
        if ge[i] > 0.0:
            for j in range(5):
                w = min(ge[i], gd[j])
                k = table[i, j]
                if w > s[k]:
                    s[k] = w
    # only sample indices inside the support of a fired set can be nonzero
    lo = ys.shape[0]
    hi = 0
    for k in range(5):
        if s[k] > 0.0:
            lo = min(lo, ospan[k, 0])
            hi = max(hi, ospan[k, 1])
    mu = np.zeros(ys.shape[0])
    for k in range(5):
        sk = s[k]
        if sk > 0.0:
            for m in range(ospan[k, 0], ospan[k, 1]):
                v = min(sk, osamp[k, m])
                mu[m] = max(mu[m], v)
    # trapezoid weights: the end samples count half
    last = ys.shape[0] - 1
    num = 0.0
    den = 0.0
    for m in range(lo, hi):
        w = 0.5 * mu[m] if m == 0 or m == last else mu[m]
        num += ys[m] * w
        den += w
    if den == 0.0:
        return mid
    return num / den


def _support_span(samples: np.ndarray) -> np.ndarray:
    spans = np.zeros((len(samples), 2), dtype=np.int64)
    for k, row in enumerate(samples):
        nz = np.flatnonzero(row)
        if len(nz):
            spans[k] = nz[0], nz[-1] + 1
    return spans


@dataclass(frozen=True)
class FLCDefinition:
    """Two-input, one-output fuzzy controller.

    Inputs are scaled by ``error_gain`` / ``rate_gain`` before fuzzification
    and the defuzzified value is multiplied by ``output_gain``.
    """

    error: FuzzyVariable
    rate: FuzzyVariable
    torque: FuzzyVariable
    rules: RuleBase = field(default_factory=RuleBase)
    error_gain: float = 2.0
    rate_gain: float = 0.2
    output_gain: float = 2.0

    def __post_init__(self):
        for name in ("error_gain", "rate_gain", "output_gain"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise FuzzyDefinitionError(f"{name} must be positive, got {v!r}")

    @property
    def variables(self) -> tuple[FuzzyVariable, FuzzyVariable, FuzzyVariable]:
        return (self.error, self.rate, self.torque)

    def right_vertices(self) -> np.ndarray:
        return np.concatenate([v.vertices()[:, 2] for v in self.variables])

    def with_right_vertices(self, rights) -> "FLCDefinition":
        rights = np.asarray(rights, dtype=float).reshape(3, 5)
        new = []
        for var, rs in zip(self.variables, rights):
            mfs = tuple(TriangularMF(m.left, m.peak, float(r)) for m, r in zip(var.mfs, rs))
            new.append(replace(var, mfs=mfs))
        return replace(self, error=new[0], rate=new[1], torque=new[2])

    @cached_property
    def _packed(self) -> dict:
        return {}

    def packed(self, resolution: int):
        try:
            return self._packed[resolution]
        except KeyError:
            pass
        ys = np.linspace(self.torque.universe_min, self.torque.universe_max, resolution)
        osamp = np.array([_grades_on(m, ys) for m in self.torque.mfs])
        args = (
            self.error.vertices(), self.error.universe_min, self.error.universe_max,
            self.rate.vertices(), self.rate.universe_min, self.rate.universe_max,
            self.rules.indices(), ys,
            osamp,
            _support_span(osamp),
            0.5 * (self.torque.universe_min + self.torque.universe_max),
        )
        self._packed[resolution] = args
        return args


def default_definition() -> FLCDefinition:
    """Untuned controller: uniform 50%-overlap triangles and the standard rule table.

    Error sets are spaced by pi/2 rad, rate sets by 0.5, output sets by 50/3.
    """
    return FLCDefinition(
        error=uniform_variable(math.pi / 2),
        rate=uniform_variable(0.5),
        torque=uniform_variable(50.0 / 3.0),
    )


def flc_output(e: float, e_dot: float, fdef: FLCDefinition, resolution: int = DEFAULT_RESOLUTION) -> float:
    """Crisp controller output for position error ``e`` and error rate ``e_dot``."""
    raw = _flc_kernel(
        float(e) * fdef.error_gain, float(e_dot) * fdef.rate_gain, *fdef.packed(resolution)
    )
    return fdef.output_gain * raw


def flc_output_reference(e: float, e_dot: float, fdef: FLCDefinition, resolution: int = DEFAULT_RESOLUTION) -> float:
    """Slow path built from the public fuzzify / infer / defuzzify_coa steps."""
    acts = infer(
        fdef.rules,
        fuzzify(fdef.error, e * fdef.error_gain),
        fuzzify(fdef.rate, e_dot * fdef.rate_gain),
    )
    return fdef.output_gain * defuzzify_coa(fdef.torque, acts, resolution)


# -- text serialisation ------------------------------------------------------

_VAR_SECTIONS = ("error", "rate", "torque")


def _fmt(v: float) -> str:
    return repr(float(v))


def dumps_definition(fdef: FLCDefinition) -> str:
    out = io.StringIO()
    out.write("# fuzzy controller definition\n")
    out.write("# sets: left, peak, right\n\n")
    out.write("[gains]\n")
    out.write(f"error = {_fmt(fdef.error_gain)}\n")
    out.write(f"rate = {_fmt(fdef.rate_gain)}\n")
    out.write(f"output = {_fmt(fdef.output_gain)}\n")
    for name, var in zip(_VAR_SECTIONS, fdef.variables):
        out.write(f"\n[{name}]\n")
        out.write(f"universe = {_fmt(var.universe_min)}, {_fmt(var.universe_max)}\n")
        for lab, mf in zip(LABELS, var.mfs):
            out.write(f"{lab} = {', '.join(_fmt(v) for v in mf.as_tuple())}\n")
    out.write("\n[rules]\n")
    out.write(f"# rows: error label; columns: rate {' '.join(LABELS)}\n")
    for lab, row in zip(LABELS, fdef.rules.table):
        out.write(f"{lab} = {' '.join(row)}\n")
    return out.getvalue()


def _floats(text: str, n: int, where: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",")]
    except ValueError:
        raise FuzzyDefinitionError(f"{where}: expected numbers, got {text!r}") from None
    if len(vals) != n:
        raise FuzzyDefinitionError(f"{where}: expected {n} values, got {len(vals)}")
    return vals


def loads_definition(text: str) -> FLCDefinition:
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
        g = cp["gains"]
        gains = {k: _floats(g[k], 1, f"gains.{k}")[0] for k in ("error", "rate", "output")}
        variables = []
        for name in _VAR_SECTIONS:
            sec = cp[name]
            lo, hi = _floats(sec["universe"], 2, f"{name}.universe")
            mfs = tuple(TriangularMF(*_floats(sec[lab], 3, f"{name}.{lab}")) for lab in LABELS)
            variables.append(FuzzyVariable(mfs, lo, hi))
        rules = RuleBase(tuple(tuple(cp["rules"][lab].split()) for lab in LABELS))
    except KeyError as exc:
        raise FuzzyDefinitionError(f"missing section or key {exc}") from None
    except configparser.Error as exc:
        raise FuzzyDefinitionError(str(exc)) from None
    return FLCDefinition(
        *variables, rules=rules,
        error_gain=gains["error"], rate_gain=gains["rate"], output_gain=gains["output"],
    )


def write_definition(fdef: FLCDefinition, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps_definition(fdef))


def read_definition(path) -> FLCDefinition:
    with open(path) as fh:
        return loads_definition(fh.read())
