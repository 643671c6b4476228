import math
from dataclasses import replace

import numpy as np
import pytest

from wmdsim.circuit import CouplingLink, SeriesCompensation
from wmdsim.pfm import PfmPattern, pattern_from_duty
from wmdsim.transient import (
    RAD_S_TO_RPM,
    TABLE1_MEDIUM_TORQUE,
    TABLE1_MOTOR,
    ModelError,
    MotorParams,
    SimConfig,
    TransientFault,
    TransientSimulator,
    TransientState,
    compare_with_phasor,
    derivatives,
    fit_motor_params,
    inductance_matrix,
    phasor_counterpart,
    run_to_steady_state,
    waveform_csv,
)

FULL = pattern_from_duty(1.0)


def test_zero_state_zero_drive(net, motor_fit):
    dx = derivatives(TransientState(), 0.0, net, motor_fit.rated)
    assert np.all(dx == 0.0)


def test_derivative_signs(net, motor_fit):
    # positive bridge voltage on a quiet network ramps i_t at U / L_t (corrected for coupling)
    dx = derivatives(TransientState(), 10.0, net, motor_fit.rated)
    linv = inductance_matrix(net)
    assert dx[0] == pytest.approx(linv[0, 0] * 10.0)
    assert dx[0] > 0 and dx[1] > 0  # M couples with a positive sign into the repeater loop


def test_state_round_trip():
    x = np.arange(12, dtype=float)
    s = TransientState.from_array(x, time=1.5)
    assert np.all(s.to_array() == x) and s.time == 1.5
    with pytest.raises(ModelError):
        TransientState(i_t=math.nan)


def test_coupling_too_strong(net):
    u = net.motoring
    bad = net.replace_motoring(replace(u, link_to_transmitter=CouplingLink(200e-6)))
    with pytest.raises(ModelError):
        inductance_matrix(bad)


def test_config_and_motor_invariants():
    with pytest.raises(ModelError):
        SimConfig(steps_per_period=50)
    with pytest.raises(ModelError):
        SimConfig(steps_per_period=401)
    with pytest.raises(ModelError):
        SimConfig(tolerance=0.0)
    with pytest.raises(ModelError):
        MotorParams(1.0, 2e-3, 0.0, 1e-5, 0.0)
    with pytest.raises(ModelError):
        MotorParams(-1.0, 2e-3, 0.7, 1e-5, 0.0)


def test_lossless_lc_loop_oscillation(net):
    # transmitter tank alone (coupling negligible), tuned to the base frequency
    n = net.tuned().lossless()
    n = n.replace_motoring(replace(n.motoring, link_to_transmitter=CouplingLink(1e-15)))
    sim = TransientSimulator(n, TABLE1_MOTOR.with_load(0.0), FULL, config=SimConfig(limiter=False),
                             drive_scale=0.0)
    sim.x[4] = 1.0  # 1 V on C_t
    w0 = sim.stored_energy()
    steps = sim.steps_per_pattern
    trace = []
    for _ in range(100):
        sim._run(1.0, steps, 0.0)
        trace.append(sim.x[4])
    assert sim.stored_energy() == pytest.approx(w0, rel=1e-6)
    # back at the initial phase after every period: oscillation at 1/(2 pi sqrt(LC))
    assert np.allclose(trace, 1.0, atol=1e-6)


def test_decoupled_motor_on_stiff_voltage(net):
    # huge DC-link capacitor = constant U_m; the motor settles at the fit targets
    sim = TransientSimulator(net, TABLE1_MOTOR, FULL, config=SimConfig(limiter=False, dc_link_capacitance=1e4),
                             drive_scale=0.0)
    sim.x[9] = 87.7
    for _ in range(40):
        sim.run_block(100)
    i_ss, w_ss = TABLE1_MOTOR.steady_state(87.7)
    assert sim.x[10] == pytest.approx(i_ss, rel=1e-4)
    assert sim.x[11] == pytest.approx(w_ss, rel=1e-4)
    assert i_ss == pytest.approx(7.2, rel=1e-9)
    assert w_ss * RAD_S_TO_RPM == pytest.approx(1119.0, rel=1e-9)


def test_rated_point(rated_report):
    r = rated_report
    assert r.converged and not r.timed_out
    assert r.u_m == pytest.approx(87.7, rel=0.10)
    assert r.i_m == pytest.approx(7.2, rel=0.10)
    assert 0.0 <= r.efficiency <= 1.0
    assert r.energy_audit_max < 5e-3
    assert not r.limiter_engaged
    assert r.p_in > r.p_out > 0


def test_cross_check(net, rated_report):
    cc = compare_with_phasor(rated_report, phasor_counterpart(net, rated_report))
    assert cc.i_t_deviation < 0.05 and cc.i_rm_deviation < 0.05
    assert not cc.flagged


def test_detuned_network_deviation_grows(net, motor_fit, rated_report):
    tx = replace(net.transmitter, compensation=SeriesCompensation(2 * net.transmitter.compensation.capacitance))
    bad = replace(net, transmitter=tx)
    r = run_to_steady_state(bad, motor_fit.rated, FULL)
    base = compare_with_phasor(rated_report, phasor_counterpart(net, rated_report))
    cc = compare_with_phasor(r, phasor_counterpart(bad, r))
    assert cc.i_t_deviation > base.i_t_deviation


def test_lossless_power_balance(net, motor_fit):
    r = run_to_steady_state(net.lossless(), motor_fit.rated, FULL)
    assert r.p_out == pytest.approx(r.p_in, rel=1e-3)


def test_waveform_capture_and_rectifier_sign(net, motor_fit):
    cfg = SimConfig(decimation=10)
    r = run_to_steady_state(net, motor_fit.rated, FULL, config=cfg)
    wf = r.waveform
    assert wf.shape[1] == 7 and len(wf) > 100
    assert np.all(wf[:, 4] >= 0)  # DC link never negative
    assert set(np.unique(np.abs(wf[:, 1]))) == {110.0}
    head = waveform_csv(wf[:3]).splitlines()
    assert head[0] == "time_s,u_in_v,i_t_a,i_rm_a,u_m_v,i_m_a,speed_rpm" and len(head) == 4


def test_rectifier_current_never_negative(net, motor_fit):
    sim = TransientSimulator(net, motor_fit.rated, FULL)
    sim.warm_start(None, (87.7, 7.2, 117.0))
    worst = math.inf
    for _ in range(300):
        sim.pattern_period()
        # the bridge output current is |i_fm| only when conducting; the DC link
        # voltage stays non-negative throughout
        worst = min(worst, sim.x[9])
    assert worst >= 0.0


def test_zero_drive(net, motor_fit):
    r = run_to_steady_state(net, motor_fit.no_load, FULL, drive_scale=0.0)
    assert r.converged
    assert all(v == 0.0 for v in r.rms.values())
    assert r.speed_rpm == 0.0 and r.efficiency == 0.0


def test_timeout_report(net, motor_fit):
    r = run_to_steady_state(net, motor_fit.rated, FULL, config=SimConfig(max_pattern_periods=50, warm_start=False))
    assert r.timed_out and r.summary().splitlines()[0].startswith("status              TIMEOUT")
    assert np.all(np.isfinite(r.final_state))


def test_limiter_contract(net, motor_fit):
    sim = TransientSimulator(net, motor_fit.rated, FULL, config=SimConfig(limiter=False),
                             fault=TransientFault(motor_open=True))
    sim.run_block(400)
    assert max(sim.period_bus) > 7.0
    r = run_to_steady_state(net, motor_fit.rated, FULL, config=SimConfig(max_pattern_periods=3000),
                            fault=TransientFault(motor_open=True))
    assert r.limiter_engaged
    assert r.max_bus_current <= 7.0 * 1.01


def test_diode_drop_reduces_output(net, motor_fit, rated_report):
    r = run_to_steady_state(net, motor_fit.rated, FULL, config=SimConfig(diode_drop=1.0))
    assert r.energy_audit_max < 5e-3
    assert r.u_m < rated_report.u_m


def test_medium_torque_between(motor_fit):
    assert 0 < motor_fit.medium_torque < motor_fit.rated.load_torque
    assert motor_fit.medium_torque == TABLE1_MEDIUM_TORQUE


@pytest.mark.slow
def test_fit_reproduces_stored_constants(net):
    fit = fit_motor_params(net)
    assert fit.rated.back_emf_constant == pytest.approx(TABLE1_MOTOR.back_emf_constant, rel=1e-12)
    assert fit.rated.viscous_friction == pytest.approx(TABLE1_MOTOR.viscous_friction, rel=1e-3)
    assert fit.rated.load_torque == pytest.approx(TABLE1_MOTOR.load_torque, rel=1e-3)
    assert fit.medium_torque == pytest.approx(TABLE1_MEDIUM_TORQUE, rel=1e-2)
    assert abs(fit.residuals["no_load_speed_rel"]) < 1e-3
    assert abs(fit.residuals["medium_speed_rel"]) < 2e-3
    assert abs(fit.residuals["rated_u_m_rel"]) < 0.10


def test_pfm_pattern_runs(net, motor_fit):
    r = run_to_steady_state(net, motor_fit.rated, PfmPattern(1, 1), config=SimConfig(max_pattern_periods=4000))
    assert r.energy_audit_max < 5e-3
    assert abs(r.drive_fundamental) == pytest.approx(110 * 2 * math.sqrt(2) / math.pi / 2, rel=1e-3)
