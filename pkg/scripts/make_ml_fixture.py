"""Regenerate ``tests/fixtures/ml_reference.csv``.

Reference values of E_{alpha,beta}(z) by plain power-series summation in
arbitrary precision: 200 digits plus enough guard digits to absorb the
cancellation of the alternating series for negative ``z``.  Run once; the
output is committed and treated as frozen.
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

import mpmath

ALPHAS = (0.25, 0.3, 0.5, 0.7, 0.9, 1.0, 1.3, 1.7, 2.0)
BETAS = (0.5, 1.0, 1.5, 2.0)
ZS = (-50.0, -20.0, -10.0, -5.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0)
MAX_RADIUS = 600.0


def reference(alpha: float, beta: float, z: float) -> mpmath.mpf:
    radius = abs(z) ** (1.0 / alpha)
    guard = int(radius / 2.3) + 20
    with mpmath.workdps(200 + guard):
        a, b, x = mpmath.mpf(alpha), mpmath.mpf(beta), mpmath.mpf(z)
        total = mpmath.mpf(0)
        k = 0
        tol = mpmath.mpf(10) ** (-(200 + guard))
        while True:
            term = x**k * mpmath.rgamma(a * k + b)
            total += term
            if k > radius / alpha + 10 and abs(term) < tol:
                return +total
            k += 1


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    default = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "ml_reference.csv"
    parser.add_argument("--out", type=Path, default=default)
    args = parser.parse_args()
    rows = []
    for alpha in ALPHAS:
        for beta in BETAS:
            for z in ZS:
                if abs(z) ** (1.0 / alpha) > MAX_RADIUS:
                    continue
                value = reference(alpha, beta, z)
                rows.append((alpha, beta, z, mpmath.nstr(value, 25, min_fixed=-5, max_fixed=5)))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha", "beta", "z", "value"])
        for alpha, beta, z, value in rows:
            writer.writerow([repr(alpha), repr(beta), repr(z), value])
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
