"""Global error of the fifth-order step on y' = -y over [0, 1], float64 vs 40 digits.

Shows why the order check runs in extended precision: in float64 the error
reaches roundoff before h = 5e-3 and the halving ratio stops meaning anything.
"""

import math

import mpmath
import numpy as np

from scopectl.integrator import rk5_step


def global_error(n, exact_arith):
    if exact_arith:
        y, h, target = np.array([mpmath.mpf(1)], dtype=object), mpmath.mpf(1) / n, mpmath.exp(-1)
    else:
        y, h, target = np.array([1.0]), 1.0 / n, math.exp(-1)
    for k in range(n):
        y = rk5_step(lambda t, y: -y, k * h, y, h)
    return abs(y[0] - target)


def main():
    ns = [25, 50, 100, 200, 400, 800]
    with mpmath.workdps(40):
        rows = [(n, float(global_error(n, False)), float(global_error(n, True))) for n in ns]
    print(f"{'h':>9} {'float64 err':>12} {'ratio':>7} {'40-digit err':>13} {'ratio':>7}")
    prev = None
    for n, e64, e40 in rows:
        r64 = f"{prev[0] / e64:7.2f}" if prev and e64 else "      -"
        r40 = f"{prev[1] / e40:7.2f}" if prev else "      -"
        print(f"{1 / n:9.2e} {e64:12.3e} {r64} {e40:13.3e} {r40}")
        prev = (e64, e40)


if __name__ == "__main__":
    main()
