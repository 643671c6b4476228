"""Transient steady states at no-load, medium and rated load, with the phasor cross-check."""

from wmdsim.circuit import table1_preset
from wmdsim.pfm import pattern_from_duty
from wmdsim.transient import compare_with_phasor, phasor_counterpart, run_to_steady_state, table1_motor_fit


def main():
    net = table1_preset()
    fit = table1_motor_fit()
    for name, motor, duty in (("no load", fit.no_load, 1.0), ("medium", fit.medium, 0.8),
                              ("rated", fit.rated, 1.0)):
        r = run_to_steady_state(net, motor, pattern_from_duty(duty))
        cc = compare_with_phasor(r, phasor_counterpart(net, r))
        print(f"{name:<8} duty {duty:.2f}: {r.speed_rpm:7.1f} rpm  U_m {r.u_m:6.2f} V  I_m {r.i_m:5.2f} A  "
              f"eff {r.efficiency:.4f}  limiter {'on' if r.limiter_engaged else 'off'}  "
              f"I_t dev {cc.i_t_deviation:.2%}")


if __name__ == "__main__":
    main()
