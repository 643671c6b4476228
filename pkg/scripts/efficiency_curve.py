"""Modeled transmission efficiency against output power at the full-duty drive."""

import argparse
import os

import numpy as np

from wmdsim.circuit import table1_preset
from wmdsim.scenarios import band_statistics, curve_csv, efficiency_vs_power


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/curve")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    pts = efficiency_vs_power(table1_preset(), np.geomspace(1.0, 100.0, 300))
    with open(os.path.join(args.out, "efficiency_curve.csv"), "w") as fh:
        fh.write(curve_csv(pts))
    st = band_statistics(pts)
    print(f"min efficiency in 200-640 W: {st['band_min_efficiency']:.4f} over {st['band_points']} points")
    print(f"peak efficiency {st['peak_efficiency']:.4f} at {st['peak_power']:.0f} W")


if __name__ == "__main__":
    main()
