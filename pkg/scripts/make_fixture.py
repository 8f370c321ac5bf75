"""Regenerate the bundled synthetic yield-curve fixture.

Two curves (AAA, ALL) on six pillars, ~2 years of business days.  Daily yield
changes come from a level/slope/curvature factor model with Student-t shocks;
ALL adds a spread curve driven by its own factors.  Output is deterministic.

    python scripts/make_fixture.py [outdir]
"""

import csv
import datetime as dt
import sys
from pathlib import Path

import numpy as np

PILLARS = ["6M", "1Y", "2Y", "3Y", "4Y", "5Y"]
TAU = np.array([0.5, 1, 2, 3, 4, 5])
N_DAYS = 520
SEED = 20190603

LEVEL = np.ones(6)
SLOPE = (TAU - 2.5) / 2.5
CURVE = (TAU - 2.75) ** 2 - 2.5


def business_days(start, n):
    out, d = [], start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += dt.timedelta(days=1)
    return out


def main(outdir):
    rng = np.random.default_rng(SEED)
    n = N_DAYS - 1
    shocks = rng.standard_t(4, size=(n, 6)) / np.sqrt(2.0)  # unit variance
    common = shocks[:, :3]
    spread = 0.5 * common + np.sqrt(0.75) * shocks[:, 3:]
    vols = np.array([0.045, 0.02, 0.0015])
    aaa_moves = (common * vols) @ np.vstack([LEVEL, SLOPE, CURVE]) + 0.0015 * rng.standard_t(5, size=(n, 6))
    spread_moves = (spread * vols * [0.6, 0.8, 0.9]) @ np.vstack([LEVEL, SLOPE, CURVE])
    all_moves = aaa_moves + spread_moves + 0.0015 * rng.standard_t(5, size=(n, 6))

    aaa0 = 0.10 + 0.35 * TAU
    all0 = aaa0 + 0.25 + 0.08 * TAU
    aaa = np.vstack([aaa0, aaa0 + np.cumsum(aaa_moves, axis=0)])
    all_ = np.vstack([all0, all0 + np.cumsum(all_moves, axis=0)])
    dates = business_days(dt.date(2017, 1, 2), N_DAYS)

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for name, y in (("AAA", aaa), ("ALL", all_)):
        with (outdir / f"yields_{name}.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["DATE"] + PILLARS)
            for d, row in zip(dates, y):
                w.writerow([d.isoformat()] + [f"{v:.6f}" for v in row])

    key = "YC.B.U2.EUR.4F.G_N_A.SV_C_YM.SR_{}"
    with (outdir / "ecb_sample_AAA.csv").open("w", newline="") as fh:
        w = csv.writer(fh, delimiter=";", lineterminator="\n")
        w.writerow(["DATE"] + [key.format(p) for p in PILLARS])
        for d, row in zip(dates[:20], aaa[:20]):
            w.writerow([d.isoformat()] + [f"{v:.6f}" for v in row])


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "src" / "stressscore" / "data")
