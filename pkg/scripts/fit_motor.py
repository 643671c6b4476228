"""Fit the DC-motor parameters against the prototype operating points and print residuals."""

import argparse

from wmdsim.circuit import table1_preset
from wmdsim.transient import RAD_S_TO_RPM, TABLE1_MEDIUM_TORQUE, TABLE1_MOTOR, fit_motor_params


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--quick", action="store_true", help="quasi-static fit only (no transient refinement)")
    args = ap.parse_args()
    fit = fit_motor_params(table1_preset(), refine=not args.quick)
    m = fit.rated
    print(f"R_a  = {m.armature_resistance:.6g} ohm   (chosen)")
    print(f"L_a  = {m.armature_inductance:.6g} H     (chosen)")
    print(f"J    = {m.inertia:.6g} kg m^2 (chosen)")
    print(f"k_e  = {m.back_emf_constant!r} V s/rad")
    print(f"B    = {m.viscous_friction!r} N m s/rad")
    print(f"T_L rated  = {m.load_torque!r} N m")
    print(f"T_L medium = {fit.medium_torque!r} N m")
    print(f"unloaded speed at duty 4/5: {fit.medium_speed_ceiling * RAD_S_TO_RPM:.1f} rpm")
    for k, v in fit.residuals.items():
        print(f"residual {k:<20} {v:+.4%}")
    stored = {"B": (m.viscous_friction, TABLE1_MOTOR.viscous_friction),
              "T_rated": (m.load_torque, TABLE1_MOTOR.load_torque),
              "T_medium": (fit.medium_torque, TABLE1_MEDIUM_TORQUE)}
    for k, (new, old) in stored.items():
        print(f"stored {k:<9} {old:.6g}  refit {new:.6g}  ({new / old - 1:+.2e})")


if __name__ == "__main__":
    main()
