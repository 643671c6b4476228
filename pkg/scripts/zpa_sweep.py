"""Input impedance magnitude and phase vs frequency for three motor loads (CSV per load)."""

import argparse
import os

from wmdsim.circuit import table1_preset
from wmdsim.phasor import input_impedance_sweep, phase_zero_crossings


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/zpa")
    ap.add_argument("--points", type=int, default=601)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    net = table1_preset()
    for r_l in (10.0, 25.0, 50.0):
        table = input_impedance_sweep(net, r_l, 70e3, 100e3, args.points)
        table.to_csv(os.path.join(args.out, f"zin_rl{r_l:g}.csv"))
        at85 = input_impedance_sweep(net, r_l, 84.999e3, 85.001e3, 3).column("phase_deg")[1]
        zc = ", ".join(f"{z / 1e3:.3f}" for z in phase_zero_crossings(table))
        print(f"R_L = {r_l:>4g} ohm: phase at 85 kHz {at85:+.3f} deg; zero crossings [kHz]: {zc}")


if __name__ == "__main__":
    main()
