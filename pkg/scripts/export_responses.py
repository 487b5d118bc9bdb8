"""Write position/velocity responses of all four controllers to one wide CSV for plotting.

    python scripts/export_responses.py COMPARE_OUT_DIR [OUT_CSV]

Reads the per-controller ``trace.csv`` files produced by a comparison run.
"""

import csv
import sys
from pathlib import Path

from scopectl.controllers import CONTROLLER_KINDS
from scopectl.integrator import read_trace_csv


def main():
    src = Path(sys.argv[1])
    dst = Path(sys.argv[2]) if len(sys.argv) > 2 else src / "responses.csv"
    traces = {k: read_trace_csv(src / k / "trace.csv") for k in CONTROLLER_KINDS if (src / k / "trace.csv").exists()}
    if not traces:
        sys.exit(f"no traces under {src}")
    times = next(iter(traces.values())).times
    header = ["t"]
    for k in traces:
        header += [f"{k}_{col}" for col in ("ra", "dec", "ra_rate", "dec_rate")]
    with open(dst, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, t in enumerate(times):
            row = [repr(float(t))]
            for tr in traces.values():
                row += [repr(float(v)) for v in (*tr.theta[i], *tr.theta_dot[i])]
            w.writerow(row)
    print(f"wrote {dst}")


if __name__ == "__main__":
    main()
