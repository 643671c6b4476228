import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wmdsim.circuit import (
    OPEN_CIRCUIT,
    SeriesCompensation,
    dc_load_from_ac,
    design_series_cap,
    equivalent_ac_load,
    table1_preset,
)
from wmdsim.pfm import harmonic_rms, pattern_harmonics, pattern_from_duty, synthesize
from wmdsim.phasor import (
    OperatingPoint,
    UndefinedRatioError,
    apply_dc_limiter,
    current_ratio,
    receiver_variants,
    input_impedance_sweep,
    load_sweep,
    phase_zero_crossings,
    reflected_loads,
    solve_full,
    solve_reduced,
    solve_spectrum,
)

F = 85e3
U1 = harmonic_rms(110, 1.0)
R_RATED = 87.7 / 7.2


def test_rated_point(net):
    s = solve_full(net, OperatingPoint(F, U1, R_RATED))
    assert abs(s.i_t) == pytest.approx(6.85, abs=0.01)
    assert s.r_le == pytest.approx(equivalent_ac_load(R_RATED))
    assert 0.9 < s.efficiency < 1.0
    assert s.p_out == pytest.approx(abs(s.i_fm) ** 2 * s.r_le)


def test_zero_drive(net):
    s = solve_full(net, OperatingPoint(F, 0.0, R_RATED))
    assert abs(s.i_t) == 0 and s.p_in == 0 and s.efficiency == 0.0


def test_negative_drive_rejected():
    with pytest.raises(ValueError):
        OperatingPoint(F, -1.0, 10.0)
    with pytest.raises(ValueError):
        OperatingPoint(0.0, 1.0, 10.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 500.0), st.floats(70e3, 100e3))
def test_power_balance(r_l, f):
    s = solve_full(table1_preset(), OperatingPoint(f, 50.0, r_l))
    assert s.p_in == pytest.approx(s.p_out + s.total_loss, rel=1e-9, abs=1e-9)


def test_idle_unit_carries_no_current(net):
    s = solve_full(net, OperatingPoint(F, U1, R_RATED))
    idle = s.unit_currents[1]
    assert all(abs(v) < 1e-12 for v in idle.values())


def test_series_receiver_lossless_oracle(net):
    # tuned, lossless, series receiver: Z_in = (M_1/M_2)^2 R_Le at resonance
    lrm = net.motoring.receiver_coil.inductance
    n = net.with_receiver(SeriesCompensation(design_series_cap(lrm, F))).tuned().lossless()
    for r_l in (5.0, 20.0, 80.0):
        s = solve_full(n, OperatingPoint(F, 10.0, r_l))
        expected = (13.56 / 21.44) ** 2 * equivalent_ac_load(r_l)
        assert s.z_in == pytest.approx(complex(expected, 0), rel=1e-9, abs=1e-9)


def test_lcc_output_current_is_load_independent(net):
    n = net.tuned().lossless()
    i_fm = [abs(solve_full(n, OperatingPoint(F, U1, r)).i_fm) for r in (1.0, 10.0, 50.0, 200.0)]
    assert max(i_fm) / min(i_fm) - 1 < 1e-9
    # and it equals I_12 * M_2 / L_fm
    s = solve_full(n, OperatingPoint(F, U1, 10.0))
    m2 = net.motoring.link_repeater_to_receiver.mutual_inductance
    assert abs(s.i_fm) == pytest.approx(abs(s.i_12) * m2 / net.motoring.receiver_compensation.filter_inductance,
                                        rel=1e-9)


def test_reflected_loads_formula(net):
    w = 2 * math.pi * F
    u = net.motoring
    r_le = 9.0
    lx = u.receiver_coil.inductance - 1 / (w * w * u.receiver_compensation.series_capacitance)
    r_lr = (w * lx) ** 2 / (r_le + 0.02) + 0.08
    got = reflected_loads(net, r_le)
    assert got.r_lr == pytest.approx(r_lr, rel=1e-12)
    assert got.r_l12 == pytest.approx((w * 21.44e-6) ** 2 / r_lr + 0.17, rel=1e-12)
    coil = reflected_loads(net, r_le, variant="coil")
    assert coil.r_lr > got.r_lr
    with pytest.raises(ValueError):
        reflected_loads(net, r_le, variant="other")


@pytest.mark.parametrize("r_le", [1.0, 3.0, 10.0, 30.0, 100.0])
def test_reduced_matches_full(net, r_le):
    op = OperatingPoint(F, U1, dc_load_from_ac(r_le))
    a, b = solve_full(net, op), solve_reduced(net, op)
    for x, y in ((a.i_t, b.i_t), (a.i_12, b.i_12), (a.i_rm, b.i_rm)):
        assert abs(y) == pytest.approx(abs(x), rel=5e-3)


def test_current_ratio_lossless_at_loop_resonance(net):
    n = net.lossless()
    u = n.motoring
    f_loop = math.sqrt(u.repeater_elastance / u.repeater_inductance) / (2 * math.pi)
    s = solve_full(n, OperatingPoint(f_loop, U1, R_RATED))
    cr = current_ratio(n, s)
    assert cr.predicted == pytest.approx(21.44 / 13.56)
    assert cr.relative_error < 1e-9


def test_current_ratio_undefined(net):
    from dataclasses import replace

    n = net.replace_motoring(replace(net.motoring, receiver_connected=False))
    s = solve_full(n, OperatingPoint(F, U1, R_RATED))
    with pytest.raises(UndefinedRatioError):
        current_ratio(n, s)


def test_limiter(net):
    s = solve_full(net, OperatingPoint(F, U1, OPEN_CIRCUIT))
    assert abs(s.i_t) > 100  # unclamped run-away
    lim = apply_dc_limiter(s, net.source)
    assert lim.limiter_engaged and abs(lim.i_t) == pytest.approx(7.0, rel=1e-12)
    ok = solve_full(net, OperatingPoint(F, U1, R_RATED))
    assert apply_dc_limiter(ok, net.source) is ok


def test_motor_short_suppresses(net):
    normal = solve_full(net, OperatingPoint(F, U1, R_RATED))
    short = solve_full(net, OperatingPoint(F, U1, 0.0))
    assert abs(short.i_t) < 0.1 * abs(normal.i_t)
    assert short.p_out == 0.0


def test_frequency_sweep(net):
    t = input_impedance_sweep(net, 25.0, 70e3, 100e3, 121)
    assert len(t) == 121
    f = t.column("frequency_hz")
    assert f[0] == 70e3 and f[-1] == 100e3
    zc = phase_zero_crossings(t)
    assert any(abs(z - F) < 500 for z in zc)
    assert t.to_csv() == input_impedance_sweep(net, 25.0, 70e3, 100e3, 121, jobs=4).to_csv()
    assert t.to_csv().splitlines()[0].startswith("frequency_hz,z_in_abs_ohm,phase_deg")


def test_sweep_domain(net):
    with pytest.raises(ValueError):
        input_impedance_sweep(net, 25.0, 100e3, 70e3, 10)
    with pytest.raises(ValueError):
        input_impedance_sweep(net, 25.0, 70e3, 100e3, 1)
    with pytest.raises(ValueError):
        load_sweep(receiver_variants(net), F, [])


def test_efficiency_drops_at_very_high_load(net):
    eff = [solve_full(net, OperatingPoint(F, U1, r)).efficiency for r in (100.0, 1e3, 1e4, 1e5)]
    assert eff == sorted(eff, reverse=True)
    assert eff[-1] < 0.5


def test_receiver_variants(net):
    v = receiver_variants(net)
    assert set(v) == {"lcc_0.5", "lcc_0.25", "series", "lcc_0.5_M1x1", "lcc_0.5_M1.2x1.2"}
    tables = load_sweep(v, F, np.linspace(1, 100, 12))
    assert all(len(t) == 12 for t in tables.values())


def test_spectrum_superposition(net):
    tr = synthesize(pattern_from_duty(1.0), 110.0)
    lines = [(f, v) for f, v in pattern_harmonics(tr, 9) if v > 1e-9]
    h = solve_spectrum(net, R_RATED, lines)
    fund = solve_full(net, OperatingPoint(F, U1, R_RATED))
    assert h.i_t_rms >= abs(fund.i_t)
    assert h.i_t_rms == pytest.approx(abs(fund.i_t), rel=0.02)  # tanks filter the harmonics
    assert h.p_in == pytest.approx(sum(s.p_in for s in h.lines))
