import hashlib
import json
import math
import os

import pytest
from hypothesis import given, strategies as st

from wmdsim.circuit import table1_preset
from wmdsim.phasor import OperatingPoint, solve_full
from wmdsim.scenarios import (
    EXPECTED_VERDICTS,
    FaultKind,
    ScenarioConfig,
    Verdict,
    band_statistics,
    classify,
    config_hash,
    curve_csv,
    drive_rms,
    efficiency_vs_power,
    emit_report,
    run_all_faults,
    run_fault,
)
from wmdsim.transient import SimConfig

RATED_RL = 87.7 / 7.2


@pytest.fixture(scope="module")
def phasor_faults(net):
    return {r.kind: r for r in run_all_faults(net)}


def test_phasor_verdict_table(phasor_faults):
    for kind, r in phasor_faults.items():
        assert r.verdict == EXPECTED_VERDICTS[kind], kind


def test_phasor_safety_contract(phasor_faults):
    for r in phasor_faults.values():
        assert r.post_i_t <= 7.0 * (1 + 1e-6)


def test_suppressed_faults_are_small(phasor_faults):
    pre = phasor_faults[FaultKind.NONE].pre_i_t
    for k in (FaultKind.MOTOR_SHORT, FaultKind.RECEIVER_OPEN):
        assert phasor_faults[k].post_i_t < 0.1 * pre


def test_no_fault_equals_plain_solve(net, phasor_faults):
    sol = solve_full(net, OperatingPoint(85e3, drive_rms(net), RATED_RL))
    r = phasor_faults[FaultKind.NONE]
    assert r.post_i_t == pytest.approx(abs(sol.i_t), rel=1e-12)
    assert r.post_i_rm == pytest.approx(abs(sol.i_rm), rel=1e-12)
    assert r.pre_i_t == r.post_i_t


def test_parallel_matches_serial(net, phasor_faults):
    par = run_all_faults(net, jobs=3)
    assert [(r.kind, r.post_i_t) for r in par] == [(k, phasor_faults[k].post_i_t) for k in FaultKind]


def test_bad_inputs(net):
    with pytest.raises(ValueError):
        run_fault(net, "melted")
    with pytest.raises(ValueError):
        run_fault(net, "none", engine="spice")
    with pytest.raises(ValueError):
        run_fault(net, "none", engine="transient")
    with pytest.raises(ValueError):
        ScenarioConfig(suppression_threshold=1.5)


@given(pre=st.floats(0.1, 10), ratio=st.floats(0, 2), th=st.floats(0.01, 0.99))
def test_classify_properties(pre, ratio, th):
    assert classify(pre, pre * ratio, True, th) == Verdict.LIMITED
    v = classify(pre, pre * ratio, False, th)
    assert v == (Verdict.SUPPRESSED if ratio < th else Verdict.NORMAL)


def test_transient_fault_verdicts(net, motor_fit):
    cfg = SimConfig(max_pattern_periods=12000)
    kinds = [FaultKind.MOTOR_SHORT, FaultKind.RECEIVER_OPEN, FaultKind.MOTOR_OPEN]
    for k in kinds:
        r = run_fault(net, k, engine="transient", motor=motor_fit.rated, sim_config=cfg)
        assert r.matches_expected, (k, r.verdict)
        assert r.post_report is not None
        if r.verdict == Verdict.LIMITED:
            assert r.post_report.max_bus_current <= 7.0 * 1.01


def test_curve_sorted_and_single_point(net):
    pts = efficiency_vs_power(net, [3, 10, 30, 100, 50])
    assert [p.power for p in pts] == sorted(p.power for p in pts)
    one = efficiency_vs_power(net, [RATED_RL])
    assert len(one) == 1 and one[0].efficiency == pytest.approx(0.9438, abs=2e-3)
    with pytest.raises(ValueError):
        efficiency_vs_power(net, [])


def test_curve_parallel_and_limiter(net):
    grid = [2, 5, 12, 40]
    assert efficiency_vs_power(net, grid) == efficiency_vs_power(net, grid, jobs=4)
    lim = efficiency_vs_power(net, grid, limiter=True)
    assert all(p.i_t <= 7.0 * (1 + 1e-6) for p in lim)
    assert any(p.limiter_engaged for p in lim)


def test_band_statistics(net):
    st_ = band_statistics(efficiency_vs_power(net, [1, 3, 10, 30, 100]))
    assert st_["band_points"] >= 1
    assert 0 < st_["band_min_efficiency"] <= st_["peak_efficiency"] <= 1
    empty = band_statistics([])
    assert math.isnan(empty["peak_efficiency"])


def test_emit_report_is_deterministic(tmp_path, net, phasor_faults):
    curve = efficiency_vs_power(net, [3, 10, 30])
    results = {"faults": list(phasor_faults.values()), "curve": curve, "note": "hello"}
    cfg = {"network": net, "grid": [3, 10, 30]}
    a = emit_report(results, tmp_path / "a", cfg)
    b = emit_report(results, tmp_path / "b", cfg)
    assert sorted(a) == ["curve.csv", "faults.csv", "manifest.json", "summary.txt"]
    for name in a:
        assert open(a[name], "rb").read() == open(b[name], "rb").read()
    manifest = json.load(open(a["manifest.json"]))
    assert manifest["config_hash"] == config_hash(cfg)
    for name, digest in manifest["artifacts"].items():
        assert hashlib.sha256(open(a[name], "rb").read()).hexdigest() == digest
    assert open(a["curve.csv"]).read() == curve_csv(curve)
    assert "PASS" in open(a["summary.txt"]).read()


def test_config_hash_sensitivity(net):
    assert config_hash({"n": net}) == config_hash({"n": table1_preset()})
    assert config_hash({"n": net}) != config_hash({"n": net.with_load(10.0)})


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_emit_report_unwritable(tmp_path):
    d = tmp_path / "ro"
    d.mkdir()
    d.chmod(0o500)
    with pytest.raises(OSError):
        emit_report({"x": "y"}, d / "sub")


def test_emit_report_destination_is_file(tmp_path):
    f = tmp_path / "file"
    f.write_text("x")
    with pytest.raises(OSError):
        emit_report({"x": "y"}, f)
