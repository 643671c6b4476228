"""Steady-state phasor solver for the WPT network.

Mesh layout (per unit, appended after the transmitter mesh 0):

    repeater loop   L_1m + L_2m, C_1m, C_2m in series (one current, I_1m = I_2m)
    receiver loop   L_rm, C_rm and the shunt C_fm (LCC) or L_rm, C_rm, R_Le (series)
    output loop     C_fm, L_fm, R_fm, R_Le (LCC only)

Coupling terms sit off the diagonal as -jwM.  All phasors are RMS.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from wmdsim.circuit import (
    DcSource,
    LccCompensation,
    NetworkDescription,
    WmdUnit,
    dc_load_from_ac,
    equivalent_ac_load,
    is_open,
)


class PhasorSolverError(RuntimeError):
    pass


class UndefinedRatioError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class OperatingPoint:
    frequency: float
    drive_rms: complex
    motor_load: float  # DC-side R_L of the motoring unit

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValueError("frequency must be > 0")
        if isinstance(self.drive_rms, (int, float)) and self.drive_rms < 0:
            raise ValueError("drive RMS must be >= 0")


@dataclass(frozen=True)
class ReflectedLoads:
    r_lr: float
    r_l12: float


@dataclass(frozen=True)
class PhasorSolution:
    frequency: float
    drive: complex
    r_le: float
    i_t: complex
    i_12: complex
    i_rm: complex
    i_fm: complex
    z_in: complex
    p_in: float
    p_out: float
    losses: dict
    unit_currents: tuple = ()
    limiter_engaged: bool = False
    method: str = "full"

    @property
    def efficiency(self) -> float:
        if self.p_in <= 0:
            return 0.0
        return min(max(self.p_out / self.p_in, 0.0), 1.0)

    @property
    def total_loss(self) -> float:
        return sum(self.losses.values())

    @property
    def phase_deg(self) -> float:
        return math.degrees(np.angle(self.z_in)) if np.isfinite(self.z_in) else float("nan")

    def scaled(self, k: float) -> "PhasorSolution":
        """Same network, drive multiplied by the real factor ``k``."""
        k2 = k * k
        return replace(
            self,
            drive=self.drive * k,
            i_t=self.i_t * k, i_12=self.i_12 * k, i_rm=self.i_rm * k, i_fm=self.i_fm * k,
            p_in=self.p_in * k2, p_out=self.p_out * k2,
            losses={n: v * k2 for n, v in self.losses.items()},
            unit_currents=tuple({n: v * k for n, v in uc.items()} for uc in self.unit_currents),
        )


def _load_resistances(unit: WmdUnit, r_l: float):
    """(R_Le, output mesh present)"""
    if is_open(r_l):
        return math.inf, False
    return equivalent_ac_load(r_l), True


def _assemble(net: NetworkDescription, w: float):
    """Mesh impedance matrix plus bookkeeping of which index is which."""
    tx = net.transmitter
    jw = 1j * w
    entries = {}
    layout = []  # per unit: dict name -> index
    n = 1
    entries[(0, 0)] = jw * tx.coil.inductance + 1 / (jw * tx.compensation.capacitance) + tx.coil.ac_resistance
    resist = [("Tx", 0, tx.coil.ac_resistance)]
    loads = []  # (index, R_Le) for the motoring unit output
    for ui, u in enumerate(net.units):
        idx = {}
        a = n
        n += 1
        idx["i_12"] = a
        entries[(a, a)] = jw * u.repeater_inductance + u.repeater_elastance / jw + u.repeater_resistance
        m1 = u.link_to_transmitter.mutual_inductance
        if m1:
            entries[(0, a)] = entries[(a, 0)] = -jw * m1
        resist.append((f"{u.name}.repeater", a, u.repeater_resistance))
        r_l = u.motor.dc_equivalent_resistance
        r_le, out_present = _load_resistances(u, r_l)
        if u.receiver_connected:
            comp = u.receiver_compensation
            lrm = u.receiver_coil.inductance
            m2 = u.link_repeater_to_receiver.mutual_inductance
            if isinstance(comp, LccCompensation):
                b = n
                n += 1
                idx["i_rm"] = b
                zc = 1 / (jw * comp.filter_capacitance)
                entries[(b, b)] = (jw * lrm + 1 / (jw * comp.series_capacitance) + zc
                                   + u.receiver_coil.ac_resistance)
                entries[(a, b)] = entries[(b, a)] = -jw * m2
                resist.append((f"{u.name}.receiver", b, u.receiver_coil.ac_resistance))
                if u.filter_connected and out_present:
                    c = n
                    n += 1
                    idx["i_fm"] = c
                    entries[(c, c)] = zc + jw * comp.filter_inductance + comp.filter_resistance + r_le
                    entries[(b, c)] = entries[(c, b)] = -zc
                    resist.append((f"{u.name}.filter", c, comp.filter_resistance))
                    loads.append((ui, c, r_le))
            elif out_present:
                b = n
                n += 1
                idx["i_rm"] = b
                idx["i_fm"] = b  # the load current is the receiver current
                entries[(b, b)] = (jw * lrm + 1 / (jw * comp.capacitance)
                                   + u.receiver_coil.ac_resistance + r_le)
                entries[(a, b)] = entries[(b, a)] = -jw * m2
                resist.append((f"{u.name}.receiver", b, u.receiver_coil.ac_resistance))
                loads.append((ui, b, r_le))
        layout.append(idx)
    z = np.zeros((n, n), dtype=complex)
    for (i, j), v in entries.items():
        z[i, j] = v
    return z, layout, resist, loads


def solve_full(net: NetworkDescription, op: OperatingPoint) -> PhasorSolution:
    """Solve the complete mesh system at one operating point."""
    net = net.with_load(op.motor_load)
    w = 2 * math.pi * op.frequency
    z, layout, resist, loads = _assemble(net, w)
    rhs = np.zeros(z.shape[0], dtype=complex)
    rhs[0] = 1.0
    if not np.all(np.isfinite(z)):
        raise PhasorSolverError("non-finite entries in mesh impedance matrix")
    try:
        cond = np.linalg.cond(z)
        if not np.isfinite(cond) or cond > 1e14:
            raise PhasorSolverError(f"mesh matrix is singular (cond={cond:.3g}) at f={op.frequency:.6g} Hz")
        unit_i = np.linalg.solve(z, rhs)
    except np.linalg.LinAlgError as exc:
        raise PhasorSolverError(f"mesh solve failed at f={op.frequency:.6g} Hz: {exc}") from None

    drive = complex(op.drive_rms)
    currents = unit_i * drive
    z_in = 1 / unit_i[0] if unit_i[0] != 0 else complex(math.inf)
    losses = {name: float(abs(currents[k]) ** 2 * r) for name, k, r in resist}
    mi = net.motoring_index
    p_out = sum(float(abs(currents[k]) ** 2 * r_le) for ui, k, r_le in loads if ui == mi)
    # power delivered into idling-unit loads counts as a loss of the link
    for ui, k, r_le in loads:
        if ui != mi:
            losses[f"{net.units[ui].name}.load"] = float(abs(currents[k]) ** 2 * r_le)
    p_in = float((drive * np.conj(currents[0])).real)

    unit_currents = tuple({name: complex(currents[k]) for name, k in idx.items()} for idx in layout)
    uc = unit_currents[mi]
    r_le = _load_resistances(net.motoring, op.motor_load)[0]
    return PhasorSolution(
        frequency=op.frequency, drive=drive, r_le=r_le,
        i_t=complex(currents[0]),
        i_12=uc.get("i_12", 0j), i_rm=uc.get("i_rm", 0j), i_fm=uc.get("i_fm", 0j),
        z_in=complex(z_in), p_in=p_in, p_out=p_out, losses=losses,
        unit_currents=unit_currents, method="full",
    )


def reflected_loads(net: NetworkDescription, r_le: float, frequency: float | None = None,
                    variant: str = "equivalent") -> ReflectedLoads:
    """Resistances reflected into the receiver coil and the repeater loop.

    For an LCC receiver R_Lr = (w L_x)^2 / (R_Le + R_fm) + R_rm, where L_x is
    the equivalent branch inductance L_rm - 1/(w^2 C_rm) (``variant="equivalent"``)
    or the bare coil inductance (``variant="coil"``, kept for diagnostics).
    For a series receiver R_Lr = R_Le + R_rm.  Then
    R_L12 = (w M_2r)^2 / R_Lr + R_1m + R_2m.
    """
    if r_le < 0:
        raise ValueError("R_Le must be >= 0")
    u = net.motoring
    w = 2 * math.pi * (frequency or net.nominal_frequency)
    r_rm = u.receiver_coil.ac_resistance
    comp = u.receiver_compensation
    if not u.receiver_connected:
        return ReflectedLoads(math.inf, u.repeater_resistance)
    if isinstance(comp, LccCompensation):
        if variant == "equivalent":
            lx = u.receiver_coil.inductance - 1 / (w * w * comp.series_capacitance)
        elif variant == "coil":
            lx = u.receiver_coil.inductance
        else:
            raise ValueError(f"unknown variant {variant!r}")
        denom = r_le + comp.filter_resistance
        if math.isinf(denom) or not u.filter_connected:
            r_lr = r_rm
        elif denom == 0:
            r_lr = math.inf
        else:
            r_lr = (w * lx) ** 2 / denom + r_rm
    else:
        r_lr = r_le + r_rm
    wm2 = w * u.link_repeater_to_receiver.mutual_inductance
    if math.isinf(r_lr):
        refl = 0.0
    elif r_lr == 0:
        refl = math.inf
    else:
        refl = wm2 ** 2 / r_lr
    return ReflectedLoads(r_lr, refl + u.repeater_resistance)


def solve_reduced(net: NetworkDescription, op: OperatingPoint) -> PhasorSolution:
    """Reflected-load chain solution.

    The receiver is folded into the repeater loop through R_L12 and the
    transmitter/repeater pair is solved as a 2x2 system.  The receiver current
    follows from the receiver row, I_rm = jwM_2r I_12 / Z_rm with
    Z_rm = jwL_rme + 1/(jwC_fm) + R_Lr, and the output current from the
    C_fm / L_fm divider (equal to -j EMF / (w L_fm) in the lossless tuned
    limit).  Power balance is only approximate here.
    """
    net = net.with_load(op.motor_load)
    u = net.motoring
    w = 2 * math.pi * op.frequency
    jw = 1j * w
    tx = net.transmitter
    r_le = _load_resistances(u, op.motor_load)[0]
    refl = reflected_loads(net, r_le, op.frequency)
    comp = u.receiver_compensation
    lcc = isinstance(comp, LccCompensation)

    z_t = jw * tx.coil.inductance + 1 / (jw * tx.compensation.capacitance) + tx.coil.ac_resistance
    x_12 = w * u.repeater_inductance - u.repeater_elastance / w
    if math.isinf(refl.r_l12):
        raise PhasorSolverError("repeater reflected load is infinite (lossless shorted receiver)")
    z_12 = 1j * x_12 + refl.r_l12
    z_m1 = -jw * u.link_to_transmitter.mutual_inductance
    det = z_t * z_12 - z_m1 * z_m1
    if det == 0:
        raise PhasorSolverError("reduced 2x2 system is singular")
    drive = complex(op.drive_rms)
    i_t = drive * z_12 / det
    i_12 = -drive * z_m1 / det

    i_rm = i_fm = 0j
    if u.receiver_connected:
        lrm = u.receiver_coil.inductance
        if lcc:
            x_rm = w * lrm - 1 / (w * comp.series_capacitance) - 1 / (w * comp.filter_capacitance)
        else:
            x_rm = w * lrm - 1 / (w * comp.capacitance)
        if math.isinf(refl.r_lr):
            i_rm = 0j
        else:
            i_rm = jw * u.link_repeater_to_receiver.mutual_inductance * i_12 / (1j * x_rm + refl.r_lr)
        if lcc and u.filter_connected and math.isfinite(r_le):
            zc = 1 / (jw * comp.filter_capacitance)
            i_fm = i_rm * zc / (zc + jw * comp.filter_inductance + comp.filter_resistance + r_le)
        elif not lcc and math.isfinite(r_le):
            i_fm = i_rm

    losses = {
        "Tx": abs(i_t) ** 2 * tx.coil.ac_resistance,
        f"{u.name}.repeater": abs(i_12) ** 2 * u.repeater_resistance,
        f"{u.name}.receiver": abs(i_rm) ** 2 * u.receiver_coil.ac_resistance,
    }
    if lcc:
        losses[f"{u.name}.filter"] = abs(i_fm) ** 2 * comp.filter_resistance
    p_out = abs(i_fm) ** 2 * r_le if math.isfinite(r_le) else 0.0
    z_in = z_t - z_m1 * z_m1 / z_12
    return PhasorSolution(
        frequency=op.frequency, drive=drive, r_le=r_le,
        i_t=complex(i_t), i_12=complex(i_12), i_rm=complex(i_rm), i_fm=complex(i_fm),
        z_in=complex(z_in), p_in=float((drive * np.conj(i_t)).real), p_out=float(p_out),
        losses={k: float(v) for k, v in losses.items()}, method="reduced",
    )


@dataclass(frozen=True)
class CurrentRatio:
    measured: float
    predicted: float

    @property
    def relative_error(self) -> float:
        return abs(self.measured - self.predicted) / self.predicted


def current_ratio(net: NetworkDescription, sol: PhasorSolution) -> CurrentRatio:
    """|I_t|/|I_rm| against the lossless prediction M_2r/M_1t."""
    if abs(sol.i_rm) == 0:
        raise UndefinedRatioError("receiver current is zero; ratio undefined")
    u = net.motoring
    predicted = u.link_repeater_to_receiver.mutual_inductance / u.link_to_transmitter.mutual_inductance
    return CurrentRatio(abs(sol.i_t) / abs(sol.i_rm), predicted)


def apply_dc_limiter(sol: PhasorSolution, source: DcSource) -> PhasorSolution:
    """Scale the drive down so |I_t| does not exceed the source current limit.

    The network is linear, so scaling the drive scales every phasor.
    """
    it = abs(sol.i_t)
    if it <= source.current_limit:
        return sol
    return replace(sol.scaled(source.current_limit / it), limiter_engaged=True)


# -- harmonics ---------------------------------------------------------------

@dataclass(frozen=True)
class HarmonicSolution:
    lines: tuple  # PhasorSolution per spectral line
    i_t_rms: float
    i_rm_rms: float
    p_in: float
    p_out: float

    @property
    def efficiency(self) -> float:
        return self.p_out / self.p_in if self.p_in > 0 else 0.0


def solve_spectrum(net: NetworkDescription, r_l: float, lines) -> HarmonicSolution:
    """Superpose solves at several drive frequencies.

    ``lines`` is an iterable of (frequency, RMS volts).  Distinct frequencies are
    orthogonal, so RMS currents add in quadrature and powers add.
    """
    sols = tuple(solve_full(net, OperatingPoint(f, v, r_l)) for f, v in lines if f > 0)
    return HarmonicSolution(
        lines=sols,
        i_t_rms=math.sqrt(sum(abs(s.i_t) ** 2 for s in sols)),
        i_rm_rms=math.sqrt(sum(abs(s.i_rm) ** 2 for s in sols)),
        p_in=sum(s.p_in for s in sols),
        p_out=sum(s.p_out for s in sols),
    )


# -- sweeps ------------------------------------------------------------------

SWEEP_COLUMNS = ("z_in_abs_ohm", "phase_deg", "i_t_a", "i_12_a", "i_rm_a", "i_fm_a",
                 "p_in_w", "p_out_w", "efficiency")


def _row(key_value: float, sol: PhasorSolution | None, error: str = "") -> dict:
    if sol is None:
        row = {c: float("nan") for c in SWEEP_COLUMNS}
    else:
        row = {
            "z_in_abs_ohm": abs(sol.z_in),
            "phase_deg": sol.phase_deg,
            "i_t_a": abs(sol.i_t),
            "i_12_a": abs(sol.i_12),
            "i_rm_a": abs(sol.i_rm),
            "i_fm_a": abs(sol.i_fm),
            "p_in_w": sol.p_in,
            "p_out_w": sol.p_out,
            "efficiency": sol.efficiency,
        }
    row["_key"] = key_value
    row["error"] = error
    return row


@dataclass
class SweepTable:
    key: str
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        if name == self.key:
            name = "_key"
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self, target=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.key, *SWEEP_COLUMNS, "error"])
        for r in self.rows:
            w.writerow([f"{r['_key']:.9g}", *(f"{r[c]:.9g}" for c in SWEEP_COLUMNS), r["error"]])
        text = buf.getvalue()
        if target is not None:
            with open(target, "w", newline="") as fh:
                fh.write(text)
        return text


def _map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def input_impedance_sweep(net: NetworkDescription, r_l: float, f_min: float, f_max: float,
                          n_points: int, drive: complex = 1.0, jobs: int = 1) -> SweepTable:
    """|Z_in| and phase over a linear frequency grid (endpoints included)."""
    if not f_min < f_max:
        raise ValueError("f_min must be < f_max")
    if n_points < 2:
        raise ValueError("need at least two points")
    freqs = np.linspace(f_min, f_max, n_points)

    def point(f):
        try:
            return _row(f, solve_full(net, OperatingPoint(f, drive, r_l)))
        except PhasorSolverError as exc:
            return _row(f, None, str(exc))

    return SweepTable("frequency_hz", _map(point, freqs, jobs))


def phase_zero_crossings(table: SweepTable) -> list:
    """Frequencies where the input phase changes sign, linearly interpolated."""
    f = table.column(table.key)
    ph = table.column("phase_deg")
    out = []
    for i in range(len(f) - 1):
        a, b = ph[i], ph[i + 1]
        if not (np.isfinite(a) and np.isfinite(b)):
            continue
        if a == 0:
            out.append(float(f[i]))
        elif a * b < 0:
            out.append(float(f[i] + (f[i + 1] - f[i]) * a / (a - b)))
    if len(ph) and ph[-1] == 0:
        out.append(float(f[-1]))
    return out


def load_sweep(variants: dict, frequency: float, r_le_values, drive: complex = 1.0,
               jobs: int = 1) -> dict:
    """Efficiency against equivalent AC load for each named network variant."""
    r_le_values = list(r_le_values)
    if not r_le_values:
        raise ValueError("empty load range")
    out = {}
    for name, net in variants.items():
        def point(r_le, net=net):
            try:
                return _row(r_le, solve_full(net, OperatingPoint(frequency, drive, dc_load_from_ac(r_le))))
            except PhasorSolverError as exc:
                return _row(r_le, None, str(exc))

        out[name] = SweepTable("r_le_ohm", _map(point, r_le_values, jobs))
    return out


def receiver_variants(net: NetworkDescription, mutual_scales=((1.0, 1.0), (1.2, 1.2))) -> dict:
    """Network variants compared in the efficiency-vs-load study.

    Receiver compensation: LCC with L_fm = 0.5 L_rm and 0.25 L_rm, and a plain
    series capacitor; plus the LCC network with scaled mutual inductances.
    """
    from wmdsim.circuit import SeriesCompensation, design_lcc, design_series_cap

    u = net.motoring
    f0 = net.nominal_frequency
    lrm = u.receiver_coil.inductance
    r_f = u.receiver_compensation.filter_resistance if u.is_lcc else 0.0
    variants = {
        "lcc_0.5": net.with_receiver(design_lcc(lrm, f0, 0.5, r_f)),
        "lcc_0.25": net.with_receiver(design_lcc(lrm, f0, 0.25, r_f)),
        "series": net.with_receiver(SeriesCompensation(design_series_cap(lrm, f0))),
    }
    for s1, s2 in mutual_scales:
        variants[f"lcc_0.5_M{s1:g}x{s2:g}"] = variants["lcc_0.5"].scaled_mutuals(s1, s2)
    return variants
