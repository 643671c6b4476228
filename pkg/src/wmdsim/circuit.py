"""Network description types and compensation design.

All quantities are SI internally.  The JSON config format carries the unit in
the field name (``L_t_uH``, ``C_t_nF``, ``f_kHz`` ...) and is converted on load.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Union

# Exact open-circuit marker for motor loads; solvers test for it with is_open().
OPEN_CIRCUIT = math.inf

RATED_MOTOR_VOLTAGE = 87.7
RATED_MOTOR_CURRENT = 7.2


class DesignError(ValueError):
    """Raised for out-of-domain design inputs."""


def is_open(resistance: float) -> bool:
    return math.isinf(resistance)


@dataclass(frozen=True)
class CoilSpec:
    inductance: float
    ac_resistance: float = 0.0
    label: str = ""

    def __post_init__(self):
        if not self.inductance > 0:
            raise DesignError(f"coil {self.label!r}: inductance must be > 0")
        if self.ac_resistance < 0:
            raise DesignError(f"coil {self.label!r}: resistance must be >= 0")


@dataclass(frozen=True)
class SeriesCompensation:
    capacitance: float

    def __post_init__(self):
        if not self.capacitance > 0:
            raise DesignError("capacitance must be > 0")


@dataclass(frozen=True)
class LccCompensation:
    series_capacitance: float
    filter_capacitance: float
    filter_inductance: float
    filter_resistance: float = 0.0

    def __post_init__(self):
        if not (self.series_capacitance > 0 and self.filter_capacitance > 0
                and self.filter_inductance > 0):
            raise DesignError("LCC capacitances and filter inductance must be > 0")
        if self.filter_resistance < 0:
            raise DesignError("filter resistance must be >= 0")


@dataclass(frozen=True)
class SeriesTank:
    """A coil closed by a series capacitor."""

    coil: CoilSpec
    compensation: SeriesCompensation

    @property
    def resonant_frequency(self) -> float:
        return 1.0 / (2 * math.pi * math.sqrt(self.coil.inductance * self.compensation.capacitance))


@dataclass(frozen=True)
class CouplingLink:
    mutual_inductance: float
    endpoint_a: str = ""
    endpoint_b: str = ""

    def __post_init__(self):
        if self.mutual_inductance < 0:
            raise DesignError("mutual inductance must be >= 0")

    def coupling_coefficient(self, la: float, lb: float) -> float:
        return self.mutual_inductance / math.sqrt(la * lb)


@dataclass(frozen=True)
class DcSource:
    voltage_limit: float
    current_limit: float

    def __post_init__(self):
        if not (self.voltage_limit > 0 and self.current_limit > 0):
            raise DesignError("DC source limits must be > 0")


@dataclass(frozen=True)
class MotorLoadSpec:
    """DC-side equivalent resistance of the motor; OPEN_CIRCUIT for an open motor."""

    dc_equivalent_resistance: float

    def __post_init__(self):
        if math.isnan(self.dc_equivalent_resistance) or self.dc_equivalent_resistance < 0:
            raise DesignError("motor load resistance must be >= 0")


ReceiverCompensation = Union[SeriesCompensation, LccCompensation]


@dataclass(frozen=True)
class WmdUnit:
    """One pipeline unit: hybrid repeater, in-pipe receiver and motor.

    The two repeater parts are wired in series, so one loop current flows
    through both of them.
    """

    name: str
    repeater_part1: SeriesTank
    repeater_part2: SeriesTank
    receiver_coil: CoilSpec
    receiver_compensation: ReceiverCompensation
    motor: MotorLoadSpec
    link_to_transmitter: CouplingLink
    link_repeater_to_receiver: CouplingLink
    # fault topology switches: an open receiver coil removes the receiver mesh,
    # an open filter inductor removes the LCC output mesh.
    receiver_connected: bool = True
    filter_connected: bool = True

    @property
    def is_lcc(self) -> bool:
        return isinstance(self.receiver_compensation, LccCompensation)

    @property
    def is_motoring(self) -> bool:
        return self.link_to_transmitter.mutual_inductance > 0

    @property
    def repeater_inductance(self) -> float:
        return self.repeater_part1.coil.inductance + self.repeater_part2.coil.inductance

    @property
    def repeater_elastance(self) -> float:
        """1/C of the two series capacitors of the repeater loop."""
        return (1.0 / self.repeater_part1.compensation.capacitance
                + 1.0 / self.repeater_part2.compensation.capacitance)

    @property
    def repeater_resistance(self) -> float:
        return self.repeater_part1.coil.ac_resistance + self.repeater_part2.coil.ac_resistance

    def with_load(self, r_l: float) -> "WmdUnit":
        return replace(self, motor=MotorLoadSpec(r_l))


@dataclass(frozen=True)
class NetworkDescription:
    source: DcSource
    transmitter: SeriesTank
    units: tuple
    nominal_frequency: float

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(self.units))
        if not self.nominal_frequency > 0:
            raise DesignError("nominal frequency must be > 0")
        n_motoring = sum(1 for u in self.units if u.is_motoring)
        if n_motoring != 1:
            raise DesignError(f"exactly one unit must couple to the transmitter, got {n_motoring}")

    @property
    def motoring_index(self) -> int:
        return next(i for i, u in enumerate(self.units) if u.is_motoring)

    @property
    def motoring(self) -> WmdUnit:
        return self.units[self.motoring_index]

    @property
    def omega(self) -> float:
        return 2 * math.pi * self.nominal_frequency

    def replace_motoring(self, unit: WmdUnit) -> "NetworkDescription":
        units = list(self.units)
        units[self.motoring_index] = unit
        return replace(self, units=tuple(units))

    def with_load(self, r_l: float) -> "NetworkDescription":
        return self.replace_motoring(self.motoring.with_load(r_l))

    def lossless(self) -> "NetworkDescription":
        """Copy with every coil and filter resistance set to zero."""

        def _coil(c: CoilSpec) -> CoilSpec:
            return replace(c, ac_resistance=0.0)

        def _tank(t: SeriesTank) -> SeriesTank:
            return replace(t, coil=_coil(t.coil))

        units = []
        for u in self.units:
            comp = u.receiver_compensation
            if isinstance(comp, LccCompensation):
                comp = replace(comp, filter_resistance=0.0)
            units.append(replace(u, repeater_part1=_tank(u.repeater_part1),
                                 repeater_part2=_tank(u.repeater_part2),
                                 receiver_coil=_coil(u.receiver_coil),
                                 receiver_compensation=comp))
        return replace(self, transmitter=_tank(self.transmitter), units=tuple(units))

    def tuned(self) -> "NetworkDescription":
        """Copy with every capacitor redesigned for exact resonance at the nominal frequency.

        LCC receivers keep their filter inductance.
        """
        f = self.nominal_frequency

        def _tank(t: SeriesTank) -> SeriesTank:
            return replace(t, compensation=SeriesCompensation(design_series_cap(t.coil.inductance, f)))

        units = []
        for u in self.units:
            comp = u.receiver_compensation
            lrm = u.receiver_coil.inductance
            if isinstance(comp, LccCompensation):
                new = design_lcc(lrm, f, comp.filter_inductance / lrm)
                comp = replace(new, filter_resistance=comp.filter_resistance)
            else:
                comp = SeriesCompensation(design_series_cap(lrm, f))
            units.append(replace(u, repeater_part1=_tank(u.repeater_part1),
                                 repeater_part2=_tank(u.repeater_part2),
                                 receiver_compensation=comp))
        return replace(self, transmitter=_tank(self.transmitter), units=tuple(units))

    def scaled_mutuals(self, scale_tx: float, scale_rx: float) -> "NetworkDescription":
        u = self.motoring
        m1 = u.link_to_transmitter
        m2 = u.link_repeater_to_receiver
        return self.replace_motoring(replace(
            u,
            link_to_transmitter=replace(m1, mutual_inductance=m1.mutual_inductance * scale_tx),
            link_repeater_to_receiver=replace(m2, mutual_inductance=m2.mutual_inductance * scale_rx)))

    def with_receiver(self, compensation: ReceiverCompensation) -> "NetworkDescription":
        return self.replace_motoring(replace(self.motoring, receiver_compensation=compensation))


# -- design ------------------------------------------------------------------

def design_series_cap(inductance: float, frequency: float) -> float:
    """Capacitance that resonates ``inductance`` at ``frequency``: C = 1/(w^2 L)."""
    if not (inductance > 0 and frequency > 0):
        raise DesignError("inductance and frequency must be > 0")
    w = 2 * math.pi * frequency
    return 1.0 / (w * w * inductance)


def design_lcc(coil_inductance: float, frequency: float, filter_ratio: float = 0.5,
               filter_resistance: float = 0.0) -> LccCompensation:
    """LCC receiver compensation for a coil of ``coil_inductance``.

    ``filter_ratio`` is L_fm / L_rm and must lie in (0, 1).  C_fm resonates
    with L_fm and C_rm cancels the part of the coil above L_fm, so the coil
    branch has net inductance L_rm - 1/(w^2 C_rm) == L_fm.
    """
    if not 0 < filter_ratio < 1:
        raise DesignError("filter ratio must lie in (0, 1)")
    if not (coil_inductance > 0 and frequency > 0):
        raise DesignError("inductance and frequency must be > 0")
    l_f = filter_ratio * coil_inductance
    return LccCompensation(
        series_capacitance=design_series_cap(coil_inductance - l_f, frequency),
        filter_capacitance=design_series_cap(l_f, frequency),
        filter_inductance=l_f,
        filter_resistance=filter_resistance,
    )


def equivalent_ac_load(r_l: float) -> float:
    """Fundamental-equivalent AC resistance of a capacitor-filtered bridge rectifier."""
    if r_l < 0 or math.isnan(r_l):
        raise DesignError("load resistance must be >= 0")
    return 8.0 * r_l / math.pi ** 2


def dc_load_from_ac(r_le: float) -> float:
    return r_le * math.pi ** 2 / 8.0


def table1_preset() -> NetworkDescription:
    """Prototype parameters: one motoring unit and one idling unit at 85.0 kHz."""
    uH, nF = 1e-6, 1e-9
    tx = SeriesTank(CoilSpec(86.84 * uH, 0.085, "Tx"), SeriesCompensation(40.58 * nF))

    def unit(name: str, m1: float, m2: float) -> WmdUnit:
        return WmdUnit(
            name=name,
            repeater_part1=SeriesTank(CoilSpec(86.22 * uH, 0.085, f"{name}.rep1"),
                                      SeriesCompensation(40.68 * nF)),
            repeater_part2=SeriesTank(CoilSpec(86.21 * uH, 0.085, f"{name}.rep2"),
                                      SeriesCompensation(40.81 * nF)),
            receiver_coil=CoilSpec(72.30 * uH, 0.08, f"{name}.rx"),
            receiver_compensation=LccCompensation(
                series_capacitance=96.98 * nF,
                filter_capacitance=96.98 * nF,
                filter_inductance=36.15 * uH,
                filter_resistance=0.02,
            ),
            motor=MotorLoadSpec(RATED_MOTOR_VOLTAGE / RATED_MOTOR_CURRENT),
            link_to_transmitter=CouplingLink(m1, "Tx", f"{name}.rep1"),
            link_repeater_to_receiver=CouplingLink(m2, f"{name}.rep2", f"{name}.rx"),
        )

    return NetworkDescription(
        source=DcSource(110.0, 7.0),
        transmitter=tx,
        units=(unit("motoring", 13.56 * uH, 21.44 * uH), unit("idling", 0.0, 21.44 * uH)),
        nominal_frequency=85.0e3,
    )


# -- validation --------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    element: str
    kind: str  # "detuning" or "coupling"
    value: float
    flagged: bool
    detail: str = ""


def lcc_coil_resonance(coil_inductance: float, comp: LccCompensation) -> float:
    """Frequency where the coil branch (L_rm, C_rm) cancels the shunt C_fm."""
    w2 = (1.0 + comp.filter_capacitance / comp.series_capacitance) / (
        coil_inductance * comp.filter_capacitance)
    return math.sqrt(w2) / (2 * math.pi)


def validate_network(net: NetworkDescription, detuning_limit: float = 0.01) -> list:
    """Per-tank relative detuning and coupling-coefficient checks.

    Returns a list of :class:`Diagnostic`; nothing here raises.
    """
    f0 = net.nominal_frequency
    out = []

    def tank(name: str, f_tank: float):
        d = abs(f_tank - f0) / f0
        out.append(Diagnostic(name, "detuning", d, d > detuning_limit, f"f_tank={f_tank:.6g} Hz"))

    def coupling(name: str, link: CouplingLink, la: float, lb: float):
        k = link.coupling_coefficient(la, lb)
        out.append(Diagnostic(name, "coupling", k, k >= 1.0, f"k={k:.6g}"))

    tank("transmitter", net.transmitter.resonant_frequency)
    for u in net.units:
        tank(f"{u.name}.repeater1", u.repeater_part1.resonant_frequency)
        tank(f"{u.name}.repeater2", u.repeater_part2.resonant_frequency)
        comp = u.receiver_compensation
        lrm = u.receiver_coil.inductance
        if isinstance(comp, LccCompensation):
            tank(f"{u.name}.receiver", lcc_coil_resonance(lrm, comp))
            tank(f"{u.name}.filter", 1 / (2 * math.pi * math.sqrt(
                comp.filter_inductance * comp.filter_capacitance)))
        else:
            tank(f"{u.name}.receiver", 1 / (2 * math.pi * math.sqrt(lrm * comp.capacitance)))
        coupling(f"{u.name}.M1t", u.link_to_transmitter,
                 net.transmitter.coil.inductance, u.repeater_part1.coil.inductance)
        coupling(f"{u.name}.M2r", u.link_repeater_to_receiver,
                 u.repeater_part2.coil.inductance, lrm)
    return out


# -- JSON config -------------------------------------------------------------

_UNIT_SCALE = {"uH": 1e-6, "nF": 1e-9, "ohm": 1.0, "kHz": 1e3, "V": 1.0, "A": 1.0}


def _key(sym: str, unit: str) -> str:
    return f"{sym}_{unit}"


def _fmt(x: float, unit: str) -> float:
    # round-trip through the unit scale without accumulating float noise
    return float(f"{x / _UNIT_SCALE[unit]:.12g}")


def network_to_dict(net: NetworkDescription) -> dict:
    tx = net.transmitter
    d = {
        "f_kHz": _fmt(net.nominal_frequency, "kHz"),
        "E_V": net.source.voltage_limit,
        "I_limit_A": net.source.current_limit,
        "L_t_uH": _fmt(tx.coil.inductance, "uH"),
        "R_t_ohm": tx.coil.ac_resistance,
        "C_t_nF": _fmt(tx.compensation.capacitance, "nF"),
        "units": [],
    }
    for u in net.units:
        r_l = u.motor.dc_equivalent_resistance
        ud = {
            "name": u.name,
            "L_1_uH": _fmt(u.repeater_part1.coil.inductance, "uH"),
            "R_1_ohm": u.repeater_part1.coil.ac_resistance,
            "C_1_nF": _fmt(u.repeater_part1.compensation.capacitance, "nF"),
            "L_2_uH": _fmt(u.repeater_part2.coil.inductance, "uH"),
            "R_2_ohm": u.repeater_part2.coil.ac_resistance,
            "C_2_nF": _fmt(u.repeater_part2.compensation.capacitance, "nF"),
            "L_r_uH": _fmt(u.receiver_coil.inductance, "uH"),
            "R_r_ohm": u.receiver_coil.ac_resistance,
            "M_1t_uH": _fmt(u.link_to_transmitter.mutual_inductance, "uH"),
            "M_2r_uH": _fmt(u.link_repeater_to_receiver.mutual_inductance, "uH"),
            "R_L_ohm": "open" if is_open(r_l) else r_l,
        }
        comp = u.receiver_compensation
        if isinstance(comp, LccCompensation):
            ud.update({
                "C_r_nF": _fmt(comp.series_capacitance, "nF"),
                "L_f_uH": _fmt(comp.filter_inductance, "uH"),
                "R_f_ohm": comp.filter_resistance,
                "C_f_nF": _fmt(comp.filter_capacitance, "nF"),
            })
        else:
            ud["C_r_nF"] = _fmt(comp.capacitance, "nF")
        d["units"].append(ud)
    return d


def network_from_dict(d: dict) -> NetworkDescription:
    try:
        uH, nF = _UNIT_SCALE["uH"], _UNIT_SCALE["nF"]
        tx = SeriesTank(CoilSpec(d["L_t_uH"] * uH, d.get("R_t_ohm", 0.0), "Tx"),
                        SeriesCompensation(d["C_t_nF"] * nF))
        units = []
        for ud in d["units"]:
            name = ud.get("name", f"unit{len(units)}")
            if "L_f_uH" in ud:
                comp = LccCompensation(ud["C_r_nF"] * nF, ud["C_f_nF"] * nF,
                                       ud["L_f_uH"] * uH, ud.get("R_f_ohm", 0.0))
            else:
                comp = SeriesCompensation(ud["C_r_nF"] * nF)
            r_l = ud.get("R_L_ohm", RATED_MOTOR_VOLTAGE / RATED_MOTOR_CURRENT)
            r_l = OPEN_CIRCUIT if r_l == "open" else float(r_l)
            units.append(WmdUnit(
                name=name,
                repeater_part1=SeriesTank(CoilSpec(ud["L_1_uH"] * uH, ud.get("R_1_ohm", 0.0)),
                                          SeriesCompensation(ud["C_1_nF"] * nF)),
                repeater_part2=SeriesTank(CoilSpec(ud["L_2_uH"] * uH, ud.get("R_2_ohm", 0.0)),
                                          SeriesCompensation(ud["C_2_nF"] * nF)),
                receiver_coil=CoilSpec(ud["L_r_uH"] * uH, ud.get("R_r_ohm", 0.0)),
                receiver_compensation=comp,
                motor=MotorLoadSpec(r_l),
                link_to_transmitter=CouplingLink(ud["M_1t_uH"] * uH, "Tx", f"{name}.rep1"),
                link_repeater_to_receiver=CouplingLink(ud["M_2r_uH"] * uH, f"{name}.rep2", f"{name}.rx"),
            ))
        return NetworkDescription(
            source=DcSource(d["E_V"], d["I_limit_A"]),
            transmitter=tx,
            units=tuple(units),
            nominal_frequency=d["f_kHz"] * _UNIT_SCALE["kHz"],
        )
    except KeyError as exc:
        raise DesignError(f"network config missing field {exc.args[0]!r}") from None


def save_network(net: NetworkDescription, path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net), indent=2, sort_keys=True) + "\n")


def load_network(path) -> NetworkDescription:
    return network_from_dict(json.loads(Path(path).read_text()))
