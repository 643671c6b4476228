import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wmdsim.circuit import (
    OPEN_CIRCUIT,
    CoilSpec,
    CouplingLink,
    DcSource,
    DesignError,
    LccCompensation,
    MotorLoadSpec,
    SeriesCompensation,
    dc_load_from_ac,
    design_lcc,
    design_series_cap,
    equivalent_ac_load,
    lcc_coil_resonance,
    load_network,
    network_from_dict,
    network_to_dict,
    save_network,
    table1_preset,
    validate_network,
)

uH, nF = 1e-6, 1e-9


def test_series_cap_arithmetic():
    # 1 / ((2 pi 85e3)^2 * 86.84e-6)
    assert design_series_cap(86.84 * uH, 85e3) == pytest.approx(40.3722e-9, rel=1e-5)


@given(st.floats(1e-7, 1e-2), st.floats(1e3, 1e7))
def test_series_cap_resonates(l, f):
    c = design_series_cap(l, f)
    assert 1 / (2 * math.pi * math.sqrt(l * c)) == pytest.approx(f, rel=1e-12)


@pytest.mark.parametrize("l,f", [(0.0, 85e3), (-1e-6, 85e3), (86e-6, 0.0), (86e-6, -5.0)])
def test_series_cap_domain(l, f):
    with pytest.raises(DesignError):
        design_series_cap(l, f)


def test_lcc_table1_triplet():
    comp = design_lcc(72.30 * uH, 85e3, 0.5)
    assert comp.filter_inductance == pytest.approx(36.15 * uH)
    assert comp.series_capacitance / nF == pytest.approx(96.98, abs=0.005)
    assert comp.filter_capacitance / nF == pytest.approx(96.98, abs=0.005)


@given(st.floats(1e-6, 1e-3), st.floats(0.05, 0.95))
def test_lcc_equivalent_inductance_equals_filter(l, rho):
    f = 85e3
    comp = design_lcc(l, f, rho)
    w = 2 * math.pi * f
    l_eq = l - 1 / (w * w * comp.series_capacitance)
    assert l_eq == pytest.approx(comp.filter_inductance, rel=1e-9)
    assert 1 / (w * w * comp.filter_capacitance) == pytest.approx(comp.filter_inductance, rel=1e-9)


@pytest.mark.parametrize("rho", [0.0, 1.0, 1.5, -0.1])
def test_lcc_ratio_domain(rho):
    with pytest.raises(DesignError):
        design_lcc(72.3 * uH, 85e3, rho)


def test_rectifier_load():
    assert equivalent_ac_load(12.18) == pytest.approx(8 * 12.18 / math.pi ** 2)
    assert equivalent_ac_load(0.0) == 0.0
    assert math.isinf(equivalent_ac_load(OPEN_CIRCUIT))
    with pytest.raises(DesignError):
        equivalent_ac_load(-1.0)


@given(st.floats(0, 1e4))
def test_rectifier_load_round_trip(r):
    assert dc_load_from_ac(equivalent_ac_load(r)) == pytest.approx(r, rel=1e-12, abs=1e-12)


def test_type_invariants():
    with pytest.raises(DesignError):
        CoilSpec(0.0)
    with pytest.raises(DesignError):
        CoilSpec(1e-6, -0.1)
    with pytest.raises(DesignError):
        SeriesCompensation(0.0)
    with pytest.raises(DesignError):
        LccCompensation(1e-9, 1e-9, 0.0)
    with pytest.raises(DesignError):
        CouplingLink(-1e-6)
    with pytest.raises(DesignError):
        DcSource(0.0, 7.0)
    with pytest.raises(DesignError):
        MotorLoadSpec(-1.0)
    assert math.isinf(MotorLoadSpec(OPEN_CIRCUIT).dc_equivalent_resistance)


def test_preset_structure(net):
    assert net.nominal_frequency == 85e3
    assert net.source == DcSource(110.0, 7.0)
    assert net.motoring.name == "motoring"
    assert net.motoring.link_to_transmitter.mutual_inductance == pytest.approx(13.56 * uH)
    idle = net.units[1]
    assert idle.link_to_transmitter.mutual_inductance == 0.0
    assert idle.link_repeater_to_receiver.mutual_inductance == pytest.approx(21.44 * uH)
    assert net.motoring.motor.dc_equivalent_resistance == pytest.approx(87.7 / 7.2)


def test_validate_preset(net):
    diags = {(d.element, d.kind): d for d in validate_network(net)}
    # preset capacitors sit within 1% of 85 kHz; couplings well below 1
    assert not any(d.flagged for d in diags.values())
    k1 = diags[("motoring.M1t", "coupling")].value
    assert k1 == pytest.approx(13.56 / math.sqrt(86.84 * 86.22), rel=1e-9)


def test_validate_flags_detuned(net):
    from dataclasses import replace

    tx = replace(net.transmitter, compensation=SeriesCompensation(2 * net.transmitter.compensation.capacitance))
    bad = replace(net, transmitter=tx)
    flagged = [d for d in validate_network(bad) if d.flagged]
    assert [d.element for d in flagged] == ["transmitter"]


def test_validate_flags_coupling(net):
    strong = net.scaled_mutuals(10.0, 1.0)
    flagged = [d for d in validate_network(strong) if d.flagged and d.kind == "coupling"]
    assert flagged and flagged[0].element == "motoring.M1t"


def test_lcc_coil_resonance_tuned():
    comp = design_lcc(72.3 * uH, 85e3, 0.5)
    assert lcc_coil_resonance(72.3 * uH, comp) == pytest.approx(85e3, rel=1e-12)


def test_json_round_trip(net, tmp_path):
    path = tmp_path / "net.json"
    save_network(net, path)
    back = load_network(path)
    assert network_to_dict(back) == network_to_dict(net)
    for a, b in zip(back.units, net.units):
        assert a.receiver_coil.inductance == pytest.approx(b.receiver_coil.inductance, rel=1e-12)
    data = json.loads(path.read_text())
    assert data["L_t_uH"] == 86.84 and data["f_kHz"] == 85.0


def test_json_open_motor(net):
    d = network_to_dict(net.with_load(OPEN_CIRCUIT))
    assert d["units"][0]["R_L_ohm"] == "open"
    assert math.isinf(network_from_dict(d).motoring.motor.dc_equivalent_resistance)


def test_variants(net):
    ll = net.lossless()
    assert ll.transmitter.coil.ac_resistance == 0.0
    assert ll.motoring.receiver_compensation.filter_resistance == 0.0
    tuned = net.tuned()
    assert tuned.transmitter.resonant_frequency == pytest.approx(85e3, rel=1e-12)
    assert not any(d.value > 1e-9 for d in validate_network(tuned) if d.kind == "detuning")
    assert net.with_load(5.0).motoring.motor.dc_equivalent_resistance == 5.0
    assert net.motoring.motor.dc_equivalent_resistance == pytest.approx(87.7 / 7.2)


@settings(max_examples=30)
@given(st.floats(0.5, 2.0), st.floats(0.5, 2.0))
def test_scaled_mutuals(a, b):
    s = table1_preset().scaled_mutuals(a, b)
    assert s.motoring.link_to_transmitter.mutual_inductance == pytest.approx(13.56e-6 * a)
    assert s.motoring.link_repeater_to_receiver.mutual_inductance == pytest.approx(21.44e-6 * b)
