"""Efficiency vs equivalent AC load for series / LCC receivers and scaled couplings."""

import argparse
import os

import numpy as np

from wmdsim.circuit import table1_preset
from wmdsim.phasor import receiver_variants, load_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/load_sweep")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    net = table1_preset()
    r_le = np.linspace(1.0, 100.0, 199)
    tables = load_sweep(receiver_variants(net), net.nominal_frequency, r_le)
    for name, t in tables.items():
        t.to_csv(os.path.join(args.out, f"{name}.csv"))
    print("R_Le  " + "  ".join(f"{n:>16}" for n in tables))
    for i in range(0, len(r_le), 22):
        print(f"{r_le[i]:5.1f} " + "  ".join(f"{t.column('efficiency')[i]:16.4f}" for t in tables.values()))


if __name__ == "__main__":
    main()
