"""Fault-tolerance verdicts for every single fault, phasor and (optionally) transient engine."""

import argparse

from wmdsim.circuit import table1_preset
from wmdsim.scenarios import run_all_faults
from wmdsim.transient import table1_motor_fit


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--transient", action="store_true", help="also run the time-domain engine")
    args = ap.parse_args()
    net = table1_preset()
    engines = ["phasor"] + (["transient"] if args.transient else [])
    for engine in engines:
        kw = {"motor": table1_motor_fit().rated} if engine == "transient" else {}
        print(f"-- {engine}")
        for r in run_all_faults(net, engine, jobs=5, **kw):
            print(f"{r.kind.value:<24} {r.verdict.value:<10} (expected {r.expected.value:<10}) "
                  f"|I_t| {r.pre_i_t:6.3f} -> {r.post_i_t:7.3f} A  |I_rm| {r.post_i_rm:6.3f} A")


if __name__ == "__main__":
    main()
