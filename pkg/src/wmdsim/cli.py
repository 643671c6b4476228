"""Command-line interface: ``python3 -m wmdsim <command> ...``.

Exit codes: 0 success, 1 computational failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys

import numpy as np

from wmdsim import __version__
from wmdsim.circuit import (
    DesignError,
    NetworkDescription,
    design_lcc,
    design_series_cap,
    load_network,
    network_to_dict,
    table1_preset,
    validate_network,
)

_PREFIX = {"p": 1e-12, "n": 1e-9, "u": 1e-6, "µ": 1e-6, "m": 1e-3, "": 1.0, "k": 1e3, "M": 1e6}
_UNITS = {"inductance": "H", "capacitance": "F", "frequency": "Hz", "resistance": "ohm",
          "voltage": "V", "current": "A"}
# quantities where a bare number is accepted (no unit confusion possible)
_BARE_OK = {"resistance", "voltage", "current"}
_QTY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([pnuµmkM]?)(\w*)\s*$")


class UsageError(Exception):
    pass


def parse_quantity(text: str, kind: str) -> float:
    """Parse a unit-suffixed literal such as ``86.84uH``, ``85kHz`` or ``70k``.

    Inductance, capacitance and frequency need a unit or SI prefix; bare
    numbers are accepted only for resistance, voltage and current.
    """
    unit = _UNITS[kind]
    s = str(text).strip()
    if kind == "resistance" and s.lower() in ("open", "inf"):
        return math.inf
    m = _QTY.match(s.replace("Ω", "ohm"))
    if not m:
        raise UsageError(f"cannot parse {kind} {text!r}")
    value, prefix, suffix = m.groups()
    if suffix and suffix.lower() != unit.lower():
        raise UsageError(f"{text!r}: expected a {kind} in {unit}")
    if not prefix and not suffix and kind not in _BARE_OK:
        raise UsageError(f"{text!r}: bare numbers are ambiguous for {kind}; add a unit (e.g. "
                         f"{'86.84uH' if kind == 'inductance' else '40.58nF' if kind == 'capacitance' else '85kHz'})")
    return float(value) * _PREFIX[prefix]


def parse_grid(text: str, kind: str) -> np.ndarray:
    """``start:stop:count`` (inclusive, linear)."""
    parts = str(text).split(":")
    if len(parts) != 3:
        raise UsageError(f"grid {text!r} must be start:stop:count")
    a, b = parse_quantity(parts[0], kind), parse_quantity(parts[1], kind)
    try:
        n = int(parts[2])
    except ValueError:
        raise UsageError(f"grid count {parts[2]!r} is not an integer") from None
    if n < 1 or (n > 1 and not a < b):
        raise UsageError(f"grid {text!r} must have start < stop and count >= 1")
    return np.linspace(a, b, n) if n > 1 else np.array([a])


# -- shared plumbing ------------------------------------------------------------------

def _network(args) -> NetworkDescription:
    if getattr(args, "network", None):
        try:
            return load_network(args.network)
        except FileNotFoundError:
            raise UsageError(f"network file {args.network!r} not found") from None
        except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            raise UsageError(f"invalid network file {args.network!r}: {exc}") from None
    return table1_preset()


def _out_dir(args, config: dict) -> str:
    from wmdsim.scenarios import config_hash

    if args.out:
        return args.out
    return os.path.join("wmdsim-runs", f"{args.command}-{config_hash(config)[:12]}")


def _emit(args, results: dict, config: dict) -> str:
    from wmdsim.scenarios import emit_report

    out = _out_dir(args, config)
    try:
        emit_report(results, out, config)
    except OSError as exc:
        raise UsageError(f"cannot write to {out!r}: {exc}") from None
    print(f"artifacts written to {out}")
    return out


def _base_config(args, net) -> dict:
    return {"command": args.command, "network": network_to_dict(net), "version": __version__}


# -- commands ----------------------------------------------------------------

def cmd_design(args) -> int:
    if args.L is None:
        raise UsageError("design needs --L")
    lval = parse_quantity(args.L, "inductance")
    if args.f is None:
        if not args.lcc:
            raise UsageError("design needs --f")
        fval = table1_preset().nominal_frequency
        print(f"note: --f not given, using {fval / 1e3:g} kHz")
    else:
        fval = parse_quantity(args.f, "frequency")
    measured = [parse_quantity(c, "capacitance") for c in (args.measured or [])]
    if args.lcc:
        comp = design_lcc(lval, fval, args.rho)
        rows = [("C_r", comp.series_capacitance), ("C_f", comp.filter_capacitance)]
        print(f"L_f = {comp.filter_inductance * 1e6:.4f} uH")
    else:
        rows = [("C", design_series_cap(lval, fval))]
    for i, (name, c) in enumerate(rows):
        line = f"{name} = {c * 1e9:.4f} nF"
        if i < len(measured):
            line += f"  (measured {measured[i] * 1e9:.4f} nF, deviation {(measured[i] / c - 1) * 100:+.3f}%)"
        print(line)
    return 0


def _solve_one(net, f, drive, r_l, engine, limiter):
    from wmdsim.phasor import OperatingPoint, apply_dc_limiter, solve_full, solve_reduced

    op = OperatingPoint(f, drive, r_l)
    sol = solve_reduced(net, op) if engine == "reduced" else solve_full(net, op)
    return apply_dc_limiter(sol, net.source) if limiter else sol


def _solution_text(sol) -> str:
    lines = [
        f"frequency   {sol.frequency:.6g} Hz",
        f"U_in        {abs(sol.drive):.6g} V rms",
        f"R_Le        {sol.r_le:.6g} ohm",
        f"|Z_in|      {abs(sol.z_in):.6g} ohm  phase {sol.phase_deg:+.4f} deg",
        f"|I_t|       {abs(sol.i_t):.6g} A",
        f"|I_12|      {abs(sol.i_12):.6g} A",
        f"|I_rm|      {abs(sol.i_rm):.6g} A",
        f"|I_fm|      {abs(sol.i_fm):.6g} A",
        f"P_in        {sol.p_in:.6g} W",
        f"P_out       {sol.p_out:.6g} W",
        f"efficiency  {sol.efficiency:.6g}",
        f"limiter     {'engaged' if sol.limiter_engaged else 'off'}",
    ]
    return "\n".join(lines) + "\n"


def cmd_solve(args) -> int:
    from wmdsim.pfm import harmonic_rms
    from wmdsim.phasor import SweepTable, _row

    net = _network(args)
    f = parse_quantity(args.f, "frequency") if args.f else net.nominal_frequency
    r_l = parse_quantity(args.rl, "resistance")
    drive = harmonic_rms(net.source.voltage_limit, args.duty)
    sol = _solve_one(net, f, drive, r_l, args.engine, args.limiter)
    text = _solution_text(sol)
    for d in validate_network(net):
        if d.flagged:
            text += f"warning: {d.element} {d.kind} {d.detail}\n"
    print(text, end="")
    cfg = _base_config(args, net) | {"f": f, "r_l": str(r_l), "duty": args.duty, "engine": args.engine,
                                     "limiter": args.limiter}
    _emit(args, {"solution": SweepTable("r_l_ohm", [_row(r_l, sol)]), "solve": text}, cfg)
    return 0


def cmd_sweep(args) -> int:
    from wmdsim.phasor import receiver_variants, input_impedance_sweep, load_sweep, phase_zero_crossings

    net = _network(args)
    cfg = _base_config(args, net)
    results = {}
    if args.freq:
        freqs = parse_grid(args.freq, "frequency")
        if len(freqs) < 2:
            raise UsageError("frequency sweep needs at least two points")
        r_l = parse_quantity(args.rl, "resistance")
        table = input_impedance_sweep(net, r_l, freqs[0], freqs[-1], len(freqs), jobs=args.jobs)
        zc = phase_zero_crossings(table)
        results["zin_sweep"] = table
        results["zero_crossings"] = "\n".join(f"phase zero at {z:.6g} Hz" for z in zc) or "no phase zero"
        cfg |= {"freq": args.freq, "r_l": str(r_l)}
        print(f"{len(table)} rows; phase zero crossings: " + ", ".join(f"{z / 1e3:.3f} kHz" for z in zc))
    if args.load:
        r_le = parse_grid(args.load, "resistance")
        for name, table in load_sweep(receiver_variants(net), net.nominal_frequency, r_le, jobs=args.jobs).items():
            results[f"load_{name}"] = table
        cfg |= {"load": args.load}
        print(f"load sweep: {len(r_le)} points x {len(results) - bool(args.freq) * 2} variants")
    if not results:
        raise UsageError("sweep needs --freq and/or --load")
    _emit(args, results, cfg)
    return 0


def cmd_fault(args) -> int:
    from wmdsim.scenarios import FaultKind, ScenarioConfig, run_all_faults, run_fault
    from wmdsim.transient import table1_motor_fit

    net = _network(args)
    cfg = ScenarioConfig(suppression_threshold=args.threshold)
    kw = {"motor": table1_motor_fit().rated} if args.engine == "transient" else {}
    if args.kind == "all":
        results = run_all_faults(net, args.engine, cfg, jobs=args.jobs, **kw)
    else:
        results = [run_fault(net, FaultKind(args.kind), args.engine, cfg, **kw)]
    for r in results:
        print(f"{r.kind.value:<24} {r.verdict.value:<10} |I_t| {r.pre_i_t:.4g} -> {r.post_i_t:.4g} A  "
              f"|I_rm| {r.pre_i_rm:.4g} -> {r.post_i_rm:.4g} A  limiter {'on' if r.limiter_engaged else 'off'}")
    config = _base_config(args, net) | {"kind": args.kind, "engine": args.engine,
                                        "threshold": args.threshold}
    _emit(args, {"faults": results}, config)
    return 0


def cmd_curve(args) -> int:
    from wmdsim.scenarios import band_statistics, efficiency_vs_power

    net = _network(args)
    grid = parse_grid(args.grid, "resistance")
    pts = efficiency_vs_power(net, grid, limiter=args.limiter, jobs=args.jobs)
    st = band_statistics(pts)
    print(f"{len(pts)} points, {pts[0].power:.1f}-{pts[-1].power:.1f} W; "
          f"peak efficiency {st['peak_efficiency']:.4f} at {st['peak_power']:.1f} W")
    cfg = _base_config(args, net) | {"grid": args.grid, "limiter": args.limiter}
    _emit(args, {"efficiency_curve": pts}, cfg)
    return 0


def cmd_transient(args) -> int:
    from wmdsim.pfm import pattern_from_duty
    from wmdsim.transient import (
        SimConfig,
        compare_with_phasor,
        phasor_counterpart,
        run_to_steady_state,
        table1_motor_fit,
    )

    net = _network(args)
    fit = table1_motor_fit()
    loads = {"none": 0.0, "medium": fit.medium_torque, "rated": fit.rated.load_torque}
    if args.load in loads:
        torque = loads[args.load]
    else:
        try:
            torque = float(args.load)
        except ValueError:
            raise UsageError(f"--load must be none, medium, rated or a torque in N*m, not {args.load!r}") from None
    motor = fit.rated.with_load(torque)
    sim = SimConfig(steps_per_period=args.steps, tolerance=args.tol, max_pattern_periods=args.max_periods,
                    diode_drop=args.diode_drop, limiter=not args.no_limiter, decimation=args.decimation)
    pattern = pattern_from_duty(args.duty, base_frequency=net.nominal_frequency)
    rep = run_to_steady_state(net, motor, pattern, config=sim)
    text = rep.summary()
    if rep.i_m > 0:
        cc = compare_with_phasor(rep, phasor_counterpart(net, rep))
        text += (f"phasor check        |I_t| {cc.i_t_transient:.5g} vs {cc.i_t_phasor:.5g} A "
                 f"({cc.i_t_deviation * 100:.3f}%), |I_rm| {cc.i_rm_transient:.5g} vs {cc.i_rm_phasor:.5g} A "
                 f"({cc.i_rm_deviation * 100:.3f}%){'  FLAGGED' if cc.flagged else ''}\n")
    print(text, end="")
    cfg = _base_config(args, net) | {"duty": args.duty, "load_torque": torque, "sim": sim}
    _emit(args, {"transient": rep}, cfg)
    return 0 if rep.converged else 1


def cmd_pfm(args) -> int:
    from wmdsim.pfm import (
        PfmPattern,
        harmonic_rms,
        pattern_harmonics,
        pattern_from_duty,
        spectrum_csv,
        synthesize,
    )

    e = parse_quantity(args.E, "voltage")
    f = parse_quantity(args.f, "frequency") if args.f else 85e3
    if args.n1 is not None or args.n2 is not None:
        pat = PfmPattern(args.n1 or 0, args.n2 or 0, f, args.order)
    else:
        pat = pattern_from_duty(args.duty, base_frequency=f, order=args.order)
    train = synthesize(pat, e)
    lines = pattern_harmonics(train, args.harmonics)
    k = int(round(pat.period * f))
    exact = lines[k - 1][1] if k <= len(lines) else float("nan")
    print(f"pattern (n1, n2) = ({pat.n1}, {pat.n2}), duty {pat.duty:.6g}, period {pat.period * 1e6:.4f} us")
    print(f"base-frequency RMS: formula {harmonic_rms(e, pat.duty, pat.order):.6g} V, exact {exact:.6g} V")
    parseval = sum(v * v for _, v in lines) / (e * e)
    print(f"sum of squared RMS over {args.harmonics} pattern harmonics: {parseval:.6f} E^2")

    cfg = {"command": "pfm", "E": e, "f": f, "n1": pat.n1, "n2": pat.n2, "order": pat.order,
           "harmonics": args.harmonics, "version": __version__}
    from wmdsim.scenarios import emit_report

    out = _out_dir(args, cfg)
    try:
        emit_report({"pfm": f"pattern ({pat.n1}, {pat.n2})\nparseval {parseval:.9f}"}, out, cfg)
        with open(os.path.join(out, "segments.csv"), "w", newline="") as fh:
            fh.write(train.to_csv())
        with open(os.path.join(out, "spectrum.csv"), "w", newline="") as fh:
            fh.write(spectrum_csv(lines))
    except OSError as exc:
        raise UsageError(f"cannot write to {out!r}: {exc}") from None
    print(f"artifacts written to {out}")
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wmdsim", description="Wireless motor drive design and simulation.")
    p.add_argument("--version", action="version", version=f"wmdsim {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, network=True):
        if network:
            g = sp.add_mutually_exclusive_group()
            g.add_argument("--preset", choices=["table1"], default="table1",
                           help="built-in network (default)")
            g.add_argument("--network", metavar="FILE", help="network JSON file")
        sp.add_argument("--out", help="output directory (default: wmdsim-runs/<command>-<hash>)")
        sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="parallel workers")

    d = sub.add_parser("design", help="compensation capacitors for a coil")
    d.add_argument("--L", help="coil inductance, e.g. 86.84uH")
    d.add_argument("--f", help="resonant frequency, e.g. 85kHz")
    d.add_argument("--lcc", action="store_true", help="design an LCC receiver")
    d.add_argument("--rho", type=float, default=0.5, help="L_f / L_r ratio for --lcc")
    d.add_argument("--measured", nargs="+", metavar="C", help="measured capacitances to compare")

    s = sub.add_parser("solve", help="phasor solution at one operating point")
    common(s)
    s.add_argument("--rl", required=True, help="DC motor load in ohm, or 'open'")
    s.add_argument("--f", help="frequency (default: network nominal)")
    s.add_argument("--duty", type=float, default=1.0, help="PFM duty ratio")
    s.add_argument("--engine", choices=["full", "reduced"], default="full")
    s.add_argument("--limiter", action="store_true", help="apply the source current limit")

    w = sub.add_parser("sweep", help="frequency or load sweeps")
    common(w)
    w.add_argument("--freq", help="frequency grid start:stop:count, e.g. 70k:100k:121")
    w.add_argument("--rl", default="12.18", help="DC load for the frequency sweep (ohm)")
    w.add_argument("--load", help="equivalent AC load grid start:stop:count (ohm), all receiver variants")

    fl = sub.add_parser("fault", help="fault-tolerance scenarios")
    common(fl)
    fl.add_argument("--kind", default="all",
                    choices=["all", "none", "motor_short", "motor_open", "receiver_open",
                             "receiver_short_lfm_open"])
    fl.add_argument("--engine", choices=["phasor", "transient"], default="phasor")
    fl.add_argument("--threshold", type=float, default=0.10, help="suppression threshold (fraction)")

    c = sub.add_parser("curve", help="efficiency against output power")
    common(c)
    c.add_argument("--grid", default="3:100:98", help="DC load grid start:stop:count (ohm)")
    c.add_argument("--limiter", action="store_true")

    t = sub.add_parser("transient", help="time-domain steady state")
    common(t)
    t.add_argument("--duty", type=float, default=1.0)
    t.add_argument("--load", default="rated", help="none | medium | rated | torque in N*m")
    t.add_argument("--steps", type=int, default=400, help="RK4 steps per drive period")
    t.add_argument("--tol", type=float, default=1e-4)
    t.add_argument("--max-periods", type=int, default=40000)
    t.add_argument("--diode-drop", type=float, default=0.0)
    t.add_argument("--decimation", type=int, default=0, help="waveform CSV every N steps (0: off)")
    t.add_argument("--no-limiter", action="store_true")

    q = sub.add_parser("pfm", help="PFM pattern and spectrum")
    common(q, network=False)
    q.add_argument("--duty", type=float, default=1.0)
    q.add_argument("--n1", type=int)
    q.add_argument("--n2", type=int)
    q.add_argument("--order", type=int, default=1)
    q.add_argument("--E", default="110", help="DC link voltage (V)")
    q.add_argument("--f", help="base frequency (default 85kHz)")
    q.add_argument("--harmonics", type=int, default=200)
    return p


COMMANDS = {
    "design": cmd_design, "solve": cmd_solve, "sweep": cmd_sweep, "fault": cmd_fault,
    "curve": cmd_curve, "transient": cmd_transient, "pfm": cmd_pfm,
}


def main(argv=None) -> int:
    from wmdsim.phasor import PhasorSolverError
    from wmdsim.transient import ModelError

    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"wmdsim {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (DesignError, PhasorSolverError, ModelError, ValueError, ArithmeticError) as exc:
        print(f"wmdsim {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
