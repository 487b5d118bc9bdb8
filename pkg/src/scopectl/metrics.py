"""Step-response metrics and the weighted absolute-error fitness integral."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

ALPHA = 0.01
BETA = 0.01
NA = "NA"


class DegenerateReferenceError(ValueError):
    """The step has zero height, so percentage-based metrics are undefined."""


def _normalise(series, final_value):
    if final_value == 0:
        raise DegenerateReferenceError("final_value is zero")
    s = np.asarray(series, dtype=float)
    if s.size == 0:
        raise ValueError("empty series")
    # mirror negative steps so every metric sees a positive step
    sign = 1.0 if final_value > 0 else -1.0
    return sign * s, abs(final_value)


def _first_crossing(s, t, level):
    above = np.flatnonzero(s >= level)
    if above.size == 0:
        return None
    k = above[0]
    if k == 0:
        return float(t[0])
    s0, s1 = s[k - 1], s[k]
    return float(t[k - 1] + (level - s0) / (s1 - s0) * (t[k] - t[k - 1]))


def rise_time(series, final_value, t, low=0.1, high=0.9):
    """10-90% rise time with linear interpolation; ``None`` if 90% is never reached."""
    s, f = _normalise(series, final_value)
    t = np.asarray(t, dtype=float)
    t_hi = _first_crossing(s, t, high * f)
    if t_hi is None:
        return None
    return t_hi - _first_crossing(s, t, low * f)


def settling_time(series, final_value, t, band_fraction=0.02):
    """Time from the trace start until the response stays within the band.

    ``None`` when the final sample is still outside the band.
    """
    s, f = _normalise(series, final_value)
    t = np.asarray(t, dtype=float)
    dev = np.abs(s - f)
    band = band_fraction * f
    outside = np.flatnonzero(dev > band)
    if outside.size == 0:
        return 0.0
    k = outside[-1]
    if k == len(s) - 1:
        return None
    d0, d1 = dev[k], dev[k + 1]
    t_in = t[k] + (d0 - band) / (d0 - d1) * (t[k + 1] - t[k])
    return float(t_in - t[0])


def overshoot_pct(series, final_value):
    s, f = _normalise(series, final_value)
    return 100.0 * max(0.0, float(s.max()) - f) / f


def fitness_integral(errors, error_rates, step_size, alpha=ALPHA, beta=BETA):
    """Left-rectangle sum of ``alpha |e| + beta |e_dot|`` over all samples but the last, summed over axes."""
    e = np.abs(np.asarray(errors, dtype=float))[:-1]
    de = np.abs(np.asarray(error_rates, dtype=float))[:-1]
    return float(np.sum(alpha * e + beta * de) * step_size)


def trace_fitness(trace, ref, alpha=ALPHA, beta=BETA):
    rates = np.asarray(ref.theta_dot_d) - trace.theta_dot
    return fitness_integral(trace.errors, rates, trace.step_size, alpha, beta)


@dataclass(frozen=True)
class TransientMetrics:
    """Per-axis step-response figures; ``None`` marks a metric that never triggered."""

    rise_time: tuple[float | None, float | None]
    settling_time: tuple[float | None, float | None]
    overshoot_pct: tuple[float | None, float | None]
    itae_value: float


def analyze(trace, ref, band_fraction=0.02, alpha=ALPHA, beta=BETA) -> TransientMetrics:
    """Rise, settling and overshoot of each axis angle against ``ref.theta_d``.

    Angles are measured from zero, as for a step started at the zero angle.
    """
    rise, settle, over = [], [], []
    for j in range(2):
        series = trace.theta[:, j]
        final = ref.theta_d[j]
        try:
            rise.append(rise_time(series, final, trace.times))
            settle.append(settling_time(series, final, trace.times, band_fraction))
            over.append(overshoot_pct(series, final))
        except DegenerateReferenceError:
            rise.append(None)
            settle.append(None)
            over.append(None)
    return TransientMetrics(
        tuple(rise), tuple(settle), tuple(over), trace_fitness(trace, ref, alpha, beta)
    )


def fmt_value(v) -> str:
    return NA if v is None else repr(float(v))


def parse_value(text: str):
    return None if text == NA else float(text)


METRICS_COLUMNS = ("axis", "rise_time", "settling_time", "overshoot_pct")
AXES = ("RA", "DEC")


def write_metrics_csv(m: TransientMetrics, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        for j, axis in enumerate(AXES):
            w.writerow([axis, fmt_value(m.rise_time[j]), fmt_value(m.settling_time[j]), fmt_value(m.overshoot_pct[j])])
        w.writerow(["fitness", fmt_value(m.itae_value), "", ""])


def read_metrics_csv(path) -> TransientMetrics:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != METRICS_COLUMNS or [r[0] for r in rows[1:]] != [*AXES, "fitness"]:
        raise ValueError(f"{path}: not a metrics file")
    cols = [tuple(parse_value(rows[1 + j][c]) for j in range(2)) for c in (1, 2, 3)]
    return TransientMetrics(*cols, itae_value=parse_value(rows[3][1]))


# -- comparison table ------------------------------------------------------------

METRIC_ROWS = (("Rise Time", "rise_time"), ("Settling Time", "settling_time"), ("Overshoot", "overshoot_pct"))


def comparison_rows(results: dict[str, TransientMetrics | None]) -> list[list[str]]:
    """Header plus one row per metric, two columns (RA, DEC) per controller."""
    header = ["metric"] + [f"{name} {axis}" for name in results for axis in AXES]
    rows = [header]
    for title, attr in METRIC_ROWS:
        row = [title]
        for m in results.values():
            vals = (None, None) if m is None else getattr(m, attr)
            row.extend(fmt_value(v) for v in vals)
        rows.append(row)
    return rows


def write_comparison_csv(results, path) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(comparison_rows(results))


def read_comparison_csv(path) -> dict[str, TransientMetrics | None]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names = [h.rsplit(" ", 1)[0] for h in rows[0][1::2]]
    out = {}
    for c, name in enumerate(names):
        cols = [tuple(parse_value(r[1 + 2 * c + j]) for j in range(2)) for r in rows[1:4]]
        out[name] = None if all(v is None for col in cols for v in col) else TransientMetrics(*cols, itae_value=float("nan"))
    return out


def format_comparison(results) -> str:
    """Aligned plain-text version of the comparison table."""
    rows = comparison_rows(results)
    body = [[r[0]] + [("-" if v == NA else f"{float(v):.4f}") for v in r[1:]] for r in rows[1:]]
    names = list(results)
    head1 = ["Transient response"] + [n for n in names for _ in AXES]
    head2 = [""] + [a for _ in names for a in AXES]
    table = [head1, head2] + body
    widths = [max(len(r[i]) for r in table) for i in range(len(head1))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))) for r in table]
    return "\n".join(lines) + "\n"
