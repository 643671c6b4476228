"""Fault scenarios, efficiency curves and report emission.

Fault topologies, applied to the motoring unit (mesh currents I_t, I_12,
I_rm, I_fm; Z_x = R_x + jwL_x + 1/(jwC_x)):

* ``motor_short``  R_L = 0, so R_Le = 0 and the output mesh is L_fm, R_fm, C_fm.
* ``motor_open``   R_L = inf, the output mesh disappears; C_fm terminates the
  receiver tank.
* ``receiver_open``  receiver mesh removed: the repeater loop is only loaded
  by its own resistance::

      [ Z_t      -jwM_1 ] [I_t ]   [U]
      [ -jwM_1   Z_12   ] [I_12] = [0]

  so I_t = U / (Z_t + w^2 M_1^2 / Z_12) is tiny: the repeater loop, tuned to
  resonance, reflects a huge impedance into the transmitter.
* ``receiver_short_lfm_open``  the L_fm branch is open; the receiver coil
  closes through C_rm and C_fm only::

      [ Z_t      -jwM_1   0      ] [I_t ]   [U]
      [ -jwM_1   Z_12    -jwM_2  ] [I_12] = [0]
      [ 0        -jwM_2   Z_rm'  ] [I_rm]   [0]

  with Z_rm' = R_rm + jwL_rm + 1/(jwC_rm) + 1/(jwC_fm), which is almost
  purely reactive, so the transmitter current runs away until the supply
  limiter folds back.  This is the same mesh system as ``motor_open``.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, is_dataclass, replace

from wmdsim.circuit import (
    OPEN_CIRCUIT,
    RATED_MOTOR_CURRENT,
    RATED_MOTOR_VOLTAGE,
    NetworkDescription,
    network_to_dict,
)
from wmdsim.pfm import harmonic_rms
from wmdsim.phasor import (
    OperatingPoint,
    PhasorSolution,
    SweepTable,
    apply_dc_limiter,
    solve_full,
)


class FaultKind(str, enum.Enum):
    NONE = "none"
    MOTOR_SHORT = "motor_short"
    MOTOR_OPEN = "motor_open"
    RECEIVER_OPEN = "receiver_open"
    RECEIVER_SHORT_LFM_OPEN = "receiver_short_lfm_open"


class Verdict(str, enum.Enum):
    SUPPRESSED = "suppressed"
    LIMITED = "limited"
    NORMAL = "normal"


EXPECTED_VERDICTS = {
    FaultKind.NONE: Verdict.NORMAL,
    FaultKind.MOTOR_SHORT: Verdict.SUPPRESSED,
    FaultKind.RECEIVER_OPEN: Verdict.SUPPRESSED,
    FaultKind.MOTOR_OPEN: Verdict.LIMITED,
    FaultKind.RECEIVER_SHORT_LFM_OPEN: Verdict.LIMITED,
}

# acceptance thresholds quoted in summaries
EFFICIENCY_BAND_W = (200.0, 640.0)
EFFICIENCY_BAND_MIN = 0.851
EFFICIENCY_PEAK_RANGE = (0.88, 0.97)


@dataclass(frozen=True)
class ScenarioConfig:
    suppression_threshold: float = 0.10  # post/pre |I_t| below this -> suppressed
    pre_fault_load: float = RATED_MOTOR_VOLTAGE / RATED_MOTOR_CURRENT
    duty: float = 1.0
    frequency: float | None = None

    def __post_init__(self):
        if not 0 < self.suppression_threshold < 1:
            raise ValueError("suppression threshold must lie in (0, 1)")


@dataclass
class ScenarioResult:
    kind: FaultKind
    engine: str
    pre_i_t: float
    pre_i_rm: float
    post_i_t: float
    post_i_rm: float
    limiter_engaged: bool
    verdict: Verdict
    threshold: float
    post_report: object = None  # SteadyStateReport in transient mode

    @property
    def expected(self) -> Verdict:
        return EXPECTED_VERDICTS[self.kind]

    @property
    def matches_expected(self) -> bool:
        return self.verdict == self.expected


def classify(pre_i_t: float, post_i_t: float, limiter_engaged: bool, threshold: float) -> Verdict:
    if limiter_engaged:
        return Verdict.LIMITED
    if post_i_t < threshold * pre_i_t:
        return Verdict.SUPPRESSED
    return Verdict.NORMAL


def apply_fault(network: NetworkDescription, kind: FaultKind, pre_fault_load: float):
    """Faulted network and the motor load to solve it with."""
    kind = FaultKind(kind)
    u = network.motoring
    if kind == FaultKind.MOTOR_SHORT:
        return network, 0.0
    if kind == FaultKind.MOTOR_OPEN:
        return network, OPEN_CIRCUIT
    if kind == FaultKind.RECEIVER_OPEN:
        return network.replace_motoring(replace(u, receiver_connected=False)), pre_fault_load
    if kind == FaultKind.RECEIVER_SHORT_LFM_OPEN:
        return network.replace_motoring(replace(u, filter_connected=False)), pre_fault_load
    return network, pre_fault_load


def drive_rms(network: NetworkDescription, duty: float = 1.0) -> float:
    return harmonic_rms(network.source.voltage_limit, duty)


def _phasor_point(network, load, cfg: ScenarioConfig) -> PhasorSolution:
    f = cfg.frequency or network.nominal_frequency
    sol = solve_full(network, OperatingPoint(f, drive_rms(network, cfg.duty), load))
    return apply_dc_limiter(sol, network.source)


def run_fault(network: NetworkDescription, kind, engine: str = "phasor",
              config: ScenarioConfig = ScenarioConfig(), motor=None, sim_config=None) -> ScenarioResult:
    """Solve the pre-fault (rated) point and the faulted network with the limiter active.

    ``engine="transient"`` needs ``motor`` (a :class:`~wmdsim.transient.MotorParams`);
    the tank currents are then the fundamental RMS values from the steady-state
    window, and faults that never settle (an unloaded DC link charges forever)
    are reported from the last window.
    """
    kind = FaultKind(kind)
    if engine == "phasor":
        pre = _phasor_point(network, config.pre_fault_load, config)
        net_f, load = apply_fault(network, kind, config.pre_fault_load)
        post = _phasor_point(net_f, load, config)
        pre_t, pre_rm = abs(pre.i_t), abs(pre.i_rm)
        post_t, post_rm = abs(post.i_t), abs(post.i_rm)
        limited, report = post.limiter_engaged, None
    elif engine == "transient":
        from wmdsim.pfm import pattern_from_duty
        from wmdsim.transient import SimConfig, TransientFault, run_to_steady_state

        if motor is None:
            raise ValueError("transient engine needs motor parameters")
        sim_config = sim_config or SimConfig(max_pattern_periods=12000)
        pattern = pattern_from_duty(config.duty, base_frequency=network.nominal_frequency)
        faults = {
            FaultKind.NONE: TransientFault(),
            FaultKind.MOTOR_SHORT: TransientFault(motor_short=True),
            FaultKind.MOTOR_OPEN: TransientFault(motor_open=True),
            FaultKind.RECEIVER_OPEN: TransientFault(receiver_open=True),
            FaultKind.RECEIVER_SHORT_LFM_OPEN: TransientFault(filter_open=True),
        }
        pre_r = run_to_steady_state(network, motor, pattern, config=sim_config)
        report = run_to_steady_state(network, motor, pattern, config=sim_config, fault=faults[kind])
        pre_t, pre_rm = abs(pre_r.i_t_fundamental), abs(pre_r.i_rm_fundamental)
        post_t, post_rm = abs(report.i_t_fundamental), abs(report.i_rm_fundamental)
        limited = report.limiter_engaged
    else:
        raise ValueError(f"unknown engine {engine!r}")
    verdict = classify(pre_t, post_t, limited, config.suppression_threshold)
    return ScenarioResult(kind, engine, pre_t, pre_rm, post_t, post_rm, limited, verdict,
                          config.suppression_threshold, report)


def run_all_faults(network: NetworkDescription, engine: str = "phasor",
                   config: ScenarioConfig = ScenarioConfig(), jobs: int = 1, **kw) -> list:
    kinds = list(FaultKind)
    if jobs <= 1:
        return [run_fault(network, k, engine, config, **kw) for k in kinds]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(lambda k: run_fault(network, k, engine, config, **kw), kinds))


# -- efficiency curve ----------------------------------------------------------------

@dataclass(frozen=True)
class EfficiencyCurvePoint:
    power: float
    efficiency: float
    r_l: float = math.nan
    i_t: float = math.nan
    limiter_engaged: bool = False

    def __post_init__(self):
        if self.power < 0 or not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("power must be >= 0 and efficiency within [0, 1]")


def efficiency_vs_power(network: NetworkDescription, r_l_grid, drive: float | None = None,
                        limiter: bool = False, jobs: int = 1) -> list:
    """Coil-network transmission efficiency against output power.

    Each motor load R_L is solved at the same drive (default: the full-duty
    fundamental of E); the points come back sorted by output power.
    """
    grid = [float(r) for r in r_l_grid]
    if not grid:
        raise ValueError("empty R_L grid")
    u = drive if drive is not None else drive_rms(network)
    f = network.nominal_frequency

    def point(r_l):
        sol = solve_full(network, OperatingPoint(f, u, r_l))
        if limiter:
            sol = apply_dc_limiter(sol, network.source)
        return EfficiencyCurvePoint(max(sol.p_out, 0.0), sol.efficiency, r_l, abs(sol.i_t),
                                    sol.limiter_engaged)

    if jobs <= 1:
        pts = [point(r) for r in grid]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            pts = list(ex.map(point, grid))
    return sorted(pts, key=lambda p: (p.power, p.r_l))


def band_statistics(points, band=EFFICIENCY_BAND_W) -> dict:
    inside = [p for p in points if band[0] <= p.power <= band[1]]
    return {
        "band_points": len(inside),
        "band_min_efficiency": min((p.efficiency for p in inside), default=math.nan),
        "peak_efficiency": max((p.efficiency for p in points), default=math.nan),
        "peak_power": max(points, key=lambda p: p.efficiency).power if points else math.nan,
    }


def curve_csv(points) -> str:
    lines = ["p_out_w,efficiency,r_l_ohm,i_t_a,limiter_engaged"]
    lines += [f"{p.power:.9g},{p.efficiency:.9g},{p.r_l:.9g},{p.i_t:.9g},{int(p.limiter_engaged)}"
              for p in points]
    return "\n".join(lines) + "\n"


def scenarios_csv(results) -> str:
    lines = ["kind,engine,pre_i_t_a,pre_i_rm_a,post_i_t_a,post_i_rm_a,limiter_engaged,verdict,expected"]
    for r in results:
        lines.append(f"{r.kind.value},{r.engine},{r.pre_i_t:.9g},{r.pre_i_rm:.9g},{r.post_i_t:.9g},"
                     f"{r.post_i_rm:.9g},{int(r.limiter_engaged)},{r.verdict.value},{r.expected.value}")
    return "\n".join(lines) + "\n"


# -- report emission ------------------------------------------------------------------

def _summary_lines(name: str, obj) -> list:
    from wmdsim.transient import SteadyStateReport

    def verdict(ok):
        return "PASS" if ok else "FAIL"

    if isinstance(obj, SweepTable):
        return [f"[{name}] {len(obj)} rows keyed by {obj.key}"]
    if isinstance(obj, list) and obj and isinstance(obj[0], EfficiencyCurvePoint):
        st = band_statistics(obj)
        lo, hi = EFFICIENCY_PEAK_RANGE
        return [
            f"[{name}] {len(obj)} points",
            f"  min efficiency in {EFFICIENCY_BAND_W[0]:g}-{EFFICIENCY_BAND_W[1]:g} W: "
            f"{st['band_min_efficiency']:.4f} (>= {EFFICIENCY_BAND_MIN}) "
            f"{verdict(st['band_points'] > 0 and st['band_min_efficiency'] >= EFFICIENCY_BAND_MIN)}",
            f"  peak efficiency {st['peak_efficiency']:.4f} at {st['peak_power']:.1f} W "
            f"(in [{lo}, {hi}]) {verdict(lo <= st['peak_efficiency'] <= hi)}",
        ]
    if isinstance(obj, list) and obj and isinstance(obj[0], ScenarioResult):
        out = [f"[{name}]"]
        for r in obj:
            out.append(f"  {r.kind.value:<24} {r.verdict.value:<10} expected {r.expected.value:<10} "
                       f"I_t {r.pre_i_t:.4g} -> {r.post_i_t:.4g} A  {verdict(r.matches_expected)}")
        return out
    if isinstance(obj, SteadyStateReport):
        return [f"[{name}]"] + ["  " + ln for ln in obj.summary().splitlines()]
    if isinstance(obj, str):
        return [f"[{name}]"] + ["  " + ln for ln in obj.splitlines()]
    return [f"[{name}] {obj!r}"]


def _artifact_text(obj) -> str | None:
    from wmdsim.transient import SteadyStateReport, waveform_csv

    if isinstance(obj, SweepTable):
        return obj.to_csv()
    if isinstance(obj, list) and obj and isinstance(obj[0], EfficiencyCurvePoint):
        return curve_csv(obj)
    if isinstance(obj, list) and obj and isinstance(obj[0], ScenarioResult):
        return scenarios_csv(obj)
    if isinstance(obj, SteadyStateReport) and obj.waveform is not None:
        return waveform_csv(obj.waveform)
    return None


def _jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(asdict(obj))
    if isinstance(obj, NetworkDescription):
        return network_to_dict(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, enum.Enum):
        return obj.value
    return obj


def config_hash(config) -> str:
    text = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def emit_report(results: dict, destination, config=None) -> dict:
    """Write one CSV per result, ``summary.txt`` and ``manifest.json``.

    Output depends only on ``results`` and ``config``: no timestamps or host
    details, so identical runs give byte-identical files.  Returns the paths
    written, keyed by artifact name.
    """
    from wmdsim import __version__

    os.makedirs(destination, exist_ok=True)
    written = {}
    summary = []
    for name in sorted(results):
        obj = results[name]
        summary += _summary_lines(name, obj)
        text = _artifact_text(obj)
        if text is not None:
            path = os.path.join(destination, f"{name}.csv")
            with open(path, "w", newline="") as fh:
                fh.write(text)
            written[f"{name}.csv"] = path
    path = os.path.join(destination, "summary.txt")
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(summary) + "\n")
    written["summary.txt"] = path

    def sha(p):
        with open(p, "rb") as fh:
            return hashlib.sha256(fh.read()).hexdigest()

    manifest = {
        "package": "wmdsim",
        "version": __version__,
        "config_hash": config_hash(config if config is not None else {}),
        "config": _jsonable(config if config is not None else {}),
        "artifacts": {k: sha(v) for k, v in sorted(written.items())},
    }
    path = os.path.join(destination, "manifest.json")
    with open(path, "w", newline="") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written["manifest.json"] = path
    return written
