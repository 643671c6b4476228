"""Time-domain simulation of the switched drive.

PFM full bridge -> transmitter -> hybrid repeater -> LCC receiver -> diode
bridge -> DC-link capacitor C_m -> brushed PM DC motor.  Fixed-step RK4 with
an ideal-diode state machine; the inner loop is compiled with numba.

State layout (see ``STATE_NAMES``)::

    0 i_t   1 i_12   2 i_rm   3 i_fm
    4 v_Ct  5 v_C1m  6 v_C2m  7 v_Crm  8 v_Cfm
    9 v_Cm  10 i_m  11 w_m

Only the motoring unit is simulated; idling units have no coupling to the
transmitter and carry no current.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from wmdsim.circuit import (
    RATED_MOTOR_CURRENT,
    RATED_MOTOR_VOLTAGE,
    DcSource,
    LccCompensation,
    NetworkDescription,
    dc_load_from_ac,
    equivalent_ac_load,
)
from wmdsim.pfm import PfmPattern, fourier_coefficient, synthesize

STATE_NAMES = ("i_t", "i_12", "i_rm", "i_fm", "v_Ct", "v_C1m", "v_C2m", "v_Crm", "v_Cfm",
               "v_Cm", "i_m", "w_m")
N_STATE = 12

# parameter vector slots
P_RT, P_R12, P_RRM, P_RFM, P_CT, P_C1, P_C2, P_CRM, P_CFM, P_CM = range(10)
P_RA, P_LA, P_KE, P_J, P_B, P_TL, P_VD, P_WEPS, P_WPROJ = range(10, 19)
N_PARAM = 19

# accumulator slots (time integrals over the current window)
(A_EIN, A_OHM_T, A_OHM_12, A_OHM_RM, A_OHM_FM, A_DIODE, A_RA, A_FRIC, A_LOAD, A_BUS,
 A_IT2, A_I122, A_IRM2, A_IFM2, A_VCM, A_IM, A_POUT, A_W, A_ITC, A_ITS, A_IRMC, A_IRMS,
 A_UC, A_US, A_IDC, A_DISCARD, A_U2) = range(27)
N_ACC = 27

# flags
F_RX, F_FILTER, F_MOTOR, F_DCSHORT = range(4)

RAD_S_TO_RPM = 60.0 / (2 * math.pi)
TWO_SQRT2_OVER_PI = 2 * math.sqrt(2) / math.pi


class ModelError(ValueError):
    pass


@njit(cache=True)
def _bridge_mode(x, p, flags):
    """Rectifier state for the next step: +1 / -1 conducting, 0 blocking."""
    if flags[F_FILTER] == 0:
        return 0
    if x[3] > 0.0:
        return 1
    if x[3] < 0.0:
        return -1
    thr = (0.0 if flags[F_DCSHORT] != 0 else x[9]) + 2.0 * p[P_VD]
    if x[8] > thr:
        return 1
    if x[8] < -thr:
        return -1
    return 0


@njit(cache=True)
def _deriv(x, t, u, s, mode, linv, p, flags, dx, aux):
    i_t, i_12, i_rm, i_fm = x[0], x[1], x[2], x[3]
    v_cfm = x[8]
    dc_short = flags[F_DCSHORT] != 0
    v_cm = 0.0 if dc_short else x[9]
    i_m, w_m = x[10], x[11]
    vd = p[P_VD]

    # ideal diode bridge, state frozen over the step
    if mode != 0:
        v_rect = mode * (v_cm + 2.0 * vd)
        i_dc = mode * i_fm
        diode = 2.0 * vd * i_dc
    else:
        v_rect = v_cfm  # blocking: no voltage across L_fm
        i_dc = 0.0
        diode = 0.0

    v0 = u - p[P_RT] * i_t - x[4]
    v1 = -p[P_R12] * i_12 - x[5] - x[6]
    v2 = -p[P_RRM] * i_rm - x[7] - v_cfm
    v3 = v_cfm - p[P_RFM] * i_fm - v_rect
    for k in range(4):
        dx[k] = linv[k, 0] * v0 + linv[k, 1] * v1 + linv[k, 2] * v2 + linv[k, 3] * v3
    dx[4] = i_t / p[P_CT]
    dx[5] = i_12 / p[P_C1]
    dx[6] = i_12 / p[P_C2]
    dx[7] = i_rm / p[P_CRM]
    dx[8] = (i_rm - i_fm) / p[P_CFM]

    if flags[F_MOTOR] != 0:
        dx[10] = (v_cm - p[P_RA] * i_m - p[P_KE] * w_m) / p[P_LA]
    else:
        dx[10] = 0.0
        i_m = 0.0
    dx[9] = 0.0 if dc_short else (i_dc - i_m) / p[P_CM]
    r = w_m / p[P_WEPS]
    if r > 1.0:
        r = 1.0
    elif r < -1.0:
        r = -1.0
    t_load = p[P_TL] * r
    dx[11] = (p[P_KE] * i_m - t_load - p[P_B] * w_m) / p[P_J]

    c = math.cos(p[P_WPROJ] * t)
    sn = math.sin(p[P_WPROJ] * t)
    aux[A_EIN] = u * i_t
    aux[A_OHM_T] = p[P_RT] * i_t * i_t
    aux[A_OHM_12] = p[P_R12] * i_12 * i_12
    aux[A_OHM_RM] = p[P_RRM] * i_rm * i_rm
    aux[A_OHM_FM] = p[P_RFM] * i_fm * i_fm
    aux[A_DIODE] = diode
    aux[A_RA] = p[P_RA] * i_m * i_m
    aux[A_FRIC] = p[P_B] * w_m * w_m
    aux[A_LOAD] = t_load * w_m
    aux[A_BUS] = s * i_t
    aux[A_IT2] = i_t * i_t
    aux[A_I122] = i_12 * i_12
    aux[A_IRM2] = i_rm * i_rm
    aux[A_IFM2] = i_fm * i_fm
    aux[A_VCM] = v_cm
    aux[A_IM] = i_m
    aux[A_POUT] = v_cm * i_m
    aux[A_W] = w_m
    aux[A_ITC] = i_t * c
    aux[A_ITS] = i_t * sn
    aux[A_IRMC] = i_rm * c
    aux[A_IRMS] = i_rm * sn
    aux[A_UC] = u * c
    aux[A_US] = u * sn
    aux[A_IDC] = i_dc
    aux[A_DISCARD] = 0.0
    aux[A_U2] = u * u


@njit(cache=True)
def _advance(x, t, nsteps, dt, u, s, linv, p, flags, acc, buf, stride, counter):
    """Advance ``nsteps`` RK4 steps with constant bridge voltage ``u``.

    Returns (t, counter).  Rows [t, u, i_t, i_rm, v_Cm, i_m, w_m] are written to
    ``buf`` every ``stride`` steps when ``stride > 0``.
    """
    n = x.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    a1 = np.empty(N_ACC)
    a2 = np.empty(N_ACC)
    a3 = np.empty(N_ACC)
    a4 = np.empty(N_ACC)
    xt = np.empty(n)
    half = 0.5 * dt
    l_fm = 1.0 / linv[3, 3] if linv[3, 3] != 0.0 else 0.0
    for _ in range(nsteps):
        mode = _bridge_mode(x, p, flags)
        _deriv(x, t, u, s, mode, linv, p, flags, k1, a1)
        for i in range(n):
            xt[i] = x[i] + half * k1[i]
        _deriv(xt, t + half, u, s, mode, linv, p, flags, k2, a2)
        for i in range(n):
            xt[i] = x[i] + half * k2[i]
        _deriv(xt, t + half, u, s, mode, linv, p, flags, k3, a3)
        for i in range(n):
            xt[i] = x[i] + dt * k3[i]
        _deriv(xt, t + dt, u, s, mode, linv, p, flags, k4, a4)
        for i in range(n):
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        for i in range(N_ACC):
            acc[i] += dt / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i])
        if flags[F_DCSHORT] != 0:
            x[9] = 0.0
        # diode turn-off: the bridge current cannot reverse while the
        # filter-capacitor voltage is inside the blocking window
        if mode != 0 and mode * x[3] < 0.0:
            thr = (0.0 if flags[F_DCSHORT] != 0 else x[9]) + 2.0 * p[P_VD]
            if abs(x[8]) <= thr:
                acc[A_DISCARD] += 0.5 * l_fm * x[3] * x[3]
                x[3] = 0.0
        t += dt
        if stride > 0:
            if counter % stride == 0:
                row = counter // stride
                if row < buf.shape[0]:
                    buf[row, 0] = t
                    buf[row, 1] = u
                    buf[row, 2] = x[0]
                    buf[row, 3] = x[2]
                    buf[row, 4] = x[9]
                    buf[row, 5] = x[10]
                    buf[row, 6] = x[11]
            counter += 1
    return t, counter


# -- configuration -------------------------------------------------------------

@dataclass(frozen=True)
class MotorParams:
    armature_resistance: float
    armature_inductance: float
    back_emf_constant: float  # also the torque constant
    inertia: float
    viscous_friction: float
    load_torque: float = 0.0

    def __post_init__(self):
        vals = (self.armature_resistance, self.armature_inductance, self.inertia,
                self.viscous_friction, self.load_torque)
        if any(v < 0 for v in vals):
            raise ModelError("motor parameters must be >= 0")
        if not self.back_emf_constant > 0:
            raise ModelError("back-EMF constant must be > 0")
        if not (self.armature_inductance > 0 and self.inertia > 0):
            raise ModelError("armature inductance and inertia must be > 0")

    def with_load(self, torque: float) -> "MotorParams":
        return replace(self, load_torque=torque)

    def steady_state(self, voltage: float) -> tuple:
        """(current, speed) of the motor alone on a stiff DC voltage."""
        ra, k, b, tl = (self.armature_resistance, self.back_emf_constant,
                        self.viscous_friction, self.load_torque)
        # k i = T_L + B w ; v = R_a i + k w
        w = (k * voltage - ra * tl) / (k * k + ra * b)
        w = max(w, 0.0)
        i = (voltage - k * w) / ra
        return i, w


@dataclass(frozen=True)
class SimConfig:
    steps_per_period: int = 400
    max_pattern_periods: int = 40000
    tolerance: float = 1e-4
    diode_drop: float = 0.0
    dc_link_capacitance: float = 100e-6
    block_time: float = 0.5e-3
    limiter: bool = True
    warm_start: bool = True
    load_speed_band: float = 1.0  # rad/s over which the load torque builds up
    decimation: int = 0  # waveform capture stride in steps; 0 disables

    def __post_init__(self):
        if self.steps_per_period < 100 or self.steps_per_period % 2:
            raise ModelError("steps per period must be an even number >= 100")
        if not self.tolerance > 0:
            raise ModelError("tolerance must be > 0")
        if self.max_pattern_periods < 1:
            raise ModelError("max_pattern_periods must be >= 1")


@dataclass(frozen=True)
class TransientFault:
    """Topology switches applied to the simulated unit."""

    receiver_open: bool = False
    filter_open: bool = False
    motor_open: bool = False
    motor_short: bool = False


@dataclass
class SteadyStateReport:
    rms: dict
    u_m: float
    i_m: float
    speed_rpm: float
    p_in: float
    p_out: float
    efficiency: float
    limiter_engaged: bool
    cycles_to_converge: int
    converged: bool
    i_t_fundamental: complex
    i_rm_fundamental: complex
    drive_fundamental: complex
    max_bus_current: float
    min_fold: float
    energy_audit_max: float
    energy_audit: list
    discarded_energy: float
    window: float
    steps_per_period: int
    final_state: np.ndarray
    time: float
    waveform: np.ndarray | None = None
    history: list = field(default_factory=list)

    @property
    def timed_out(self) -> bool:
        return not self.converged

    @property
    def r_l_equivalent(self) -> float:
        return self.u_m / self.i_m if self.i_m > 1e-12 else math.inf

    def summary(self) -> str:
        status = "converged" if self.converged else "TIMEOUT"
        return "\n".join([
            f"status              {status} after {self.cycles_to_converge} pattern periods",
            f"I_t rms             {self.rms['i_t']:.6g} A",
            f"I_12 rms            {self.rms['i_12']:.6g} A",
            f"I_rm rms            {self.rms['i_rm']:.6g} A",
            f"I_fm rms            {self.rms['i_fm']:.6g} A",
            f"U_m                 {self.u_m:.6g} V",
            f"I_m                 {self.i_m:.6g} A",
            f"speed               {self.speed_rpm:.6g} rpm",
            f"P_in                {self.p_in:.6g} W",
            f"P_out               {self.p_out:.6g} W",
            f"efficiency          {self.efficiency:.6g}",
            f"limiter engaged     {self.limiter_engaged}",
            f"max bus current     {self.max_bus_current:.6g} A",
            f"energy audit (max)  {self.energy_audit_max:.3e}",
        ]) + "\n"


@dataclass(frozen=True)
class TransientState:
    i_t: float = 0.0
    i_12: float = 0.0
    i_rm: float = 0.0
    i_fm: float = 0.0
    v_ct: float = 0.0
    v_c1m: float = 0.0
    v_c2m: float = 0.0
    v_crm: float = 0.0
    v_cfm: float = 0.0
    v_cm: float = 0.0
    i_m: float = 0.0
    w_m: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.to_array()):
            raise ModelError("state must be finite")

    def to_array(self) -> np.ndarray:
        return np.array([self.i_t, self.i_12, self.i_rm, self.i_fm, self.v_ct, self.v_c1m,
                         self.v_c2m, self.v_crm, self.v_cfm, self.v_cm, self.i_m, self.w_m])

    @classmethod
    def from_array(cls, x, time: float = 0.0) -> "TransientState":
        return cls(*(float(v) for v in x[:N_STATE]), time=time)


def inductance_matrix(net: NetworkDescription, fault: TransientFault = TransientFault()) -> np.ndarray:
    u = net.motoring
    comp = u.receiver_compensation
    if not isinstance(comp, LccCompensation):
        raise ModelError("the transient engine models LCC receivers only")
    m1 = u.link_to_transmitter.mutual_inductance
    m2 = u.link_repeater_to_receiver.mutual_inductance
    lt = net.transmitter.coil.inductance
    l12 = u.repeater_inductance
    lrm = u.receiver_coil.inductance
    if m1 >= math.sqrt(lt * l12) or m2 >= math.sqrt(l12 * lrm):
        raise ModelError("coupled inductance block is not positive definite (|M| >= sqrt(L1 L2))")
    lmat = np.array([[lt, -m1, 0.0, 0.0],
                     [-m1, l12, -m2, 0.0],
                     [0.0, -m2, lrm, 0.0],
                     [0.0, 0.0, 0.0, comp.filter_inductance]])
    active = [0, 1]
    if u.receiver_connected and not fault.receiver_open:
        active.append(2)
    if u.filter_connected and not fault.filter_open:
        active.append(3)
    sub = lmat[np.ix_(active, active)]
    if np.linalg.eigvalsh(sub).min() <= 0:
        raise ModelError("inductance matrix is not positive definite")
    linv = np.zeros((4, 4))
    linv[np.ix_(active, active)] = np.linalg.inv(sub)
    return linv


def stored_energy(x: np.ndarray, lmat: np.ndarray, p: np.ndarray, dc_short: bool) -> float:
    i = x[:4]
    w = 0.5 * i @ lmat @ i
    w += 0.5 * (p[P_CT] * x[4] ** 2 + p[P_C1] * x[5] ** 2 + p[P_C2] * x[6] ** 2
                + p[P_CRM] * x[7] ** 2 + p[P_CFM] * x[8] ** 2)
    if not dc_short:
        w += 0.5 * p[P_CM] * x[9] ** 2
    w += 0.5 * p[P_LA] * x[10] ** 2 + 0.5 * p[P_J] * x[11] ** 2
    return float(w)


class TransientSimulator:
    """Stateful driver around the compiled RK4 kernel."""

    def __init__(self, network: NetworkDescription, motor: MotorParams, pattern: PfmPattern,
                 source: DcSource | None = None, config: SimConfig = SimConfig(),
                 fault: TransientFault = TransientFault(), drive_scale: float = 1.0):
        self.network = network
        self.motor = motor
        self.pattern = pattern
        self.source = source or network.source
        self.config = config
        self.fault = fault
        self.drive_scale = drive_scale
        u = network.motoring
        comp = u.receiver_compensation
        self.linv = inductance_matrix(network, fault)
        m1 = u.link_to_transmitter.mutual_inductance
        m2 = u.link_repeater_to_receiver.mutual_inductance
        self.lmat = np.array([[network.transmitter.coil.inductance, -m1, 0, 0],
                              [-m1, u.repeater_inductance, -m2, 0],
                              [0, -m2, u.receiver_coil.inductance, 0],
                              [0, 0, 0, comp.filter_inductance]], dtype=float)
        p = np.zeros(N_PARAM)
        p[P_RT] = network.transmitter.coil.ac_resistance
        p[P_R12] = u.repeater_resistance
        p[P_RRM] = u.receiver_coil.ac_resistance
        p[P_RFM] = comp.filter_resistance
        p[P_CT] = network.transmitter.compensation.capacitance
        p[P_C1] = u.repeater_part1.compensation.capacitance
        p[P_C2] = u.repeater_part2.compensation.capacitance
        p[P_CRM] = comp.series_capacitance
        p[P_CFM] = comp.filter_capacitance
        p[P_CM] = config.dc_link_capacitance
        p[P_RA] = motor.armature_resistance
        p[P_LA] = motor.armature_inductance
        p[P_KE] = motor.back_emf_constant
        p[P_J] = motor.inertia
        p[P_B] = motor.viscous_friction
        p[P_TL] = motor.load_torque
        p[P_VD] = config.diode_drop
        p[P_WEPS] = config.load_speed_band
        p[P_WPROJ] = 2 * math.pi * pattern.base_frequency
        self.p = p
        self.flags = np.array([
            int(u.receiver_connected and not fault.receiver_open),
            int(u.filter_connected and not fault.filter_open),
            int(not fault.motor_open),
            int(fault.motor_short),
        ], dtype=np.int64)
        self.dt = 1.0 / (pattern.base_frequency * config.steps_per_period)
        train = synthesize(pattern, 1.0)
        self.segments = [(lvl, int(round(d / self.dt))) for lvl, d in zip(train.levels, train.durations)]
        self.steps_per_pattern = sum(n for _, n in self.segments)
        self.x = np.zeros(N_STATE)
        self.t = 0.0
        self.acc = np.zeros(N_ACC)
        self.counter = 0
        self.buf = np.zeros((1, 7))
        self.stride = 0
        self.period_bus = []
        self.period_fold = []
        self._e_prev = None
        self._slope = None

    @property
    def dc_short(self) -> bool:
        return bool(self.flags[F_DCSHORT])

    def stored_energy(self) -> float:
        return stored_energy(self.x, self.lmat, self.p, self.dc_short)

    # -- stepping --------------------------------------------------------------

    def _run(self, level: float, nsteps: int, e_eff: float):
        t, self.counter = _advance(self.x, self.t, nsteps, self.dt, level * e_eff, level, self.linv,
                                   self.p, self.flags, self.acc, self.buf, self.stride, self.counter)
        self.t = t

    def _run_pattern(self, e_eff: float):
        for level, nsteps in self.segments:
            self._run(level, nsteps, e_eff)

    def pattern_period(self):
        """One pattern period with the DC input limiter.

        The supply folds E back so that the bus current averaged over the
        pattern period stays at or below the current limit.  Over one period
        the bus current is close to affine in E, so a secant search on the
        replayed period converges in two or three passes.
        """
        e_full = self.source.voltage_limit * self.drive_scale
        duration = self.steps_per_pattern * self.dt
        if not self.config.limiter:
            bus0 = self.acc[A_BUS]
            self._run_pattern(e_full)
            self.period_bus.append((self.acc[A_BUS] - bus0) / duration)
            self.period_fold.append(1.0)
            return
        lim = self.source.current_limit
        x0, acc0, t0, c0 = self.x.copy(), self.acc.copy(), self.t, self.counter

        def attempt(e):
            self.x[:] = x0
            self.acc[:] = acc0
            self.t, self.counter = t0, c0
            self._run_pattern(e)
            return (self.acc[A_BUS] - acc0[A_BUS]) / duration

        # start from the previous period's voltage; Newton steps on the
        # (nearly affine) bus-current characteristic
        e = self._e_prev if self._e_prev is not None else e_full
        bus = attempt(e)
        lo = None  # best admissible point (e, bus)
        for _ in range(12):
            if bus <= lim:
                lo = (e, bus) if lo is None or e > lo[0] else lo
                if e >= e_full or bus >= lim * (1 - 1e-7):
                    break
            if self._slope is None:
                e2 = 0.0 if e > 0 else e_full
                bus2 = attempt(e2)
                self._slope = (bus - bus2) / (e - e2)
                e, bus = e2, bus2
                continue
            e_new = min(max(e + (lim * (1 - 2e-8) - bus) / self._slope, 0.0), e_full)
            if e_new == e:
                break
            bus_new = attempt(e_new)
            if bus_new != bus:
                slope = (bus_new - bus) / (e_new - e)
                if slope > 0:
                    self._slope = slope
            e, bus = e_new, bus_new
        if bus > lim:
            e = lo[0] if lo is not None else 0.0
            bus = attempt(e)
        self._e_prev = e
        self.period_bus.append(bus)
        self.period_fold.append(e / e_full if e_full else 0.0)

    # -- windows ---------------------------------------------------------------

    def _window_metrics(self, acc: np.ndarray, duration: float) -> np.ndarray:
        return np.array([
            math.sqrt(max(acc[A_IT2], 0) / duration),
            math.sqrt(max(acc[A_I122], 0) / duration),
            math.sqrt(max(acc[A_IRM2], 0) / duration),
            math.sqrt(max(acc[A_IFM2], 0) / duration),
            acc[A_VCM] / duration,
            acc[A_IM] / duration,
            acc[A_W] / duration,
        ])

    def run_block(self, n_periods: int):
        """Simulate ``n_periods`` pattern periods; return (acc delta, audit list)."""
        start_acc = self.acc.copy()
        audits = []
        self.period_bus = []
        self.period_fold = []
        for _ in range(n_periods):
            w0 = self.stored_energy()
            a0 = self.acc.copy()
            self.pattern_period()
            d = self.acc - a0
            dw = self.stored_energy() - w0
            diss = (d[A_OHM_T] + d[A_OHM_12] + d[A_OHM_RM] + d[A_OHM_FM] + d[A_DIODE]
                    + d[A_RA] + d[A_FRIC] + d[A_LOAD] + d[A_DISCARD])
            through = max(abs(d[A_EIN]), diss, 1e-300)
            audits.append(abs(d[A_EIN] - dw - diss) / through)
        return self.acc - start_acc, audits

    def warm_start(self, phasor_solution=None, motor_state=None):
        """Initialise tanks from a phasor solution and the motor from (U_m, I_m, w)."""
        if phasor_solution is not None:
            u = self.network.motoring
            comp = u.receiver_compensation
            w = 2 * math.pi * phasor_solution.frequency
            # the square drive starts at +E, i.e. its fundamental is a sine
            rot = complex(math.cos(-math.pi / 2), math.sin(-math.pi / 2))
            ph = [phasor_solution.i_t, phasor_solution.i_12, phasor_solution.i_rm, phasor_solution.i_fm]
            ph = [c * rot / (phasor_solution.drive / abs(phasor_solution.drive)) if abs(phasor_solution.drive) else 0j
                  for c in ph]
            caps = [(0, self.p[P_CT]), (1, self.p[P_C1]), (1, self.p[P_C2]), (2, self.p[P_CRM])]
            for k in range(4):
                if self.linv[k, k] != 0.0:
                    self.x[k] = math.sqrt(2) * ph[k].real
            for j, (k, c) in enumerate(caps):
                self.x[4 + j] = math.sqrt(2) * (ph[k] / (1j * w * c)).real if self.linv[k, k] else 0.0
            self.x[8] = math.sqrt(2) * ((ph[2] - ph[3]) / (1j * w * comp.filter_capacitance)).real
        if motor_state is not None:
            v, i, w_m = motor_state
            if not self.dc_short:
                self.x[9] = v
            if self.flags[F_MOTOR]:
                self.x[10] = i
            self.x[11] = w_m


def derivatives(state: TransientState, u_in: float, network: NetworkDescription, motor: MotorParams,
                config: SimConfig = SimConfig(), fault: TransientFault = TransientFault()) -> np.ndarray:
    """Time derivatives of the state vector (order of ``STATE_NAMES``) for bridge voltage ``u_in``."""
    from wmdsim.pfm import PfmPattern

    sim = TransientSimulator(network, motor, PfmPattern(1, 0, network.nominal_frequency), config=config,
                             fault=fault)
    x = state.to_array()
    dx = np.zeros(N_STATE)
    aux = np.zeros(N_ACC)
    _deriv(x, state.time, u_in, 1.0 if u_in >= 0 else -1.0, _bridge_mode(x, sim.p, sim.flags), sim.linv,
           sim.p, sim.flags, dx, aux)
    return dx


def drive_fundamental_rms(pattern: PfmPattern, amplitude: float) -> float:
    """Exact RMS of the base-frequency line of the PFM drive."""
    if amplitude <= 0:
        return 0.0
    c = fourier_coefficient(synthesize(pattern, amplitude), pattern.base_frequency)
    return math.sqrt(2) * abs(c)


@dataclass(frozen=True)
class QuasiStaticPoint:
    u_m: float
    i_m: float
    w_m: float
    solution: object
    fold: float = 1.0


def quasi_static_operating_point(network: NetworkDescription, motor: MotorParams, drive_rms: float,
                                 source: DcSource | None = None, limiter: bool = False,
                                 iterations: int = 200) -> QuasiStaticPoint:
    """Phasor + DC-motor fixed point.

    The rectifier is represented by R_Le = 8 R_L / pi^2 and the DC current by
    the mean of the rectified sinusoidal output current.  With ``limiter``
    the drive is folded back so that the mean bus current P_in / E stays at
    the source current limit.
    """
    from wmdsim.phasor import OperatingPoint, solve_full

    src = source or network.source
    f = network.nominal_frequency
    if drive_rms <= 0:
        sol = solve_full(network, OperatingPoint(f, 0.0, RATED_MOTOR_VOLTAGE / RATED_MOTOR_CURRENT))
        return QuasiStaticPoint(0.0, 0.0, 0.0, sol)
    ra, k, b, tl = (motor.armature_resistance, motor.back_emf_constant, motor.viscous_friction,
                    motor.load_torque)

    def evaluate(r_l):
        sol = solve_full(network, OperatingPoint(f, drive_rms, r_l))
        fold = 1.0
        if limiter:
            i_bus = sol.p_in / src.voltage_limit
            if i_bus > src.current_limit:
                fold = src.current_limit / i_bus
                sol = sol.scaled(fold)
        i_dc = TWO_SQRT2_OVER_PI * abs(sol.i_fm)
        w_m = max((k * i_dc - tl) / b, 0.0) if b > 0 else 0.0
        return sol, fold, i_dc, w_m

    r_l = RATED_MOTOR_VOLTAGE / RATED_MOTOR_CURRENT
    for _ in range(iterations):
        sol, fold, i_dc, w_m = evaluate(r_l)
        new = (ra * i_dc + k * w_m) / i_dc if i_dc > 0 else r_l
        if abs(new - r_l) < 1e-12 * r_l:
            break
        r_l = 0.5 * (r_l + new)
    sol, fold, i_dc, w_m = evaluate(r_l)
    return QuasiStaticPoint(ra * i_dc + k * w_m, i_dc, w_m, sol, fold)


def _fault_initial_phasor(network, fault: TransientFault, drive_rms: float):
    from wmdsim.circuit import OPEN_CIRCUIT
    from wmdsim.phasor import OperatingPoint, solve_full

    u = network.motoring
    if fault.receiver_open:
        u = replace(u, receiver_connected=False)
    if fault.filter_open:
        u = replace(u, filter_connected=False)
    net = network.replace_motoring(u)
    r_l = 0.0 if fault.motor_short else OPEN_CIRCUIT if fault.motor_open else None
    if r_l is None:
        return None
    return solve_full(net, OperatingPoint(network.nominal_frequency, drive_rms, r_l))


def run_to_steady_state(network: NetworkDescription, motor: MotorParams, pattern: PfmPattern,
                        source: DcSource | None = None, config: SimConfig = SimConfig(),
                        fault: TransientFault = TransientFault(), drive_scale: float = 1.0,
                        capture_periods: int = 0) -> SteadyStateReport:
    """Simulate until block-to-block changes fall below ``config.tolerance``.

    Convergence is judged on block averages (``config.block_time`` long, whole
    pattern periods) of the tank RMS currents, U_m, I_m and speed; two
    consecutive blocks must pass.  The report covers one further block.
    """
    sim = TransientSimulator(network, motor, pattern, source, config, fault, drive_scale)
    src = sim.source
    u1 = drive_fundamental_rms(pattern, src.voltage_limit * drive_scale)
    if config.warm_start and u1 > 0:
        if fault == TransientFault():
            qs = quasi_static_operating_point(network, motor, u1, src, config.limiter)
            sim.warm_start(qs.solution, (qs.u_m, qs.i_m, qs.w_m))
        else:
            sol = _fault_initial_phasor(network, fault, u1)
            if sol is not None and config.limiter and abs(sol.i_t) > src.current_limit:
                sol = sol.scaled(0.5 * src.current_limit / abs(sol.i_t))
            if sol is not None:
                sim.warm_start(sol)

    pattern_period = sim.steps_per_pattern * sim.dt
    block = max(1, int(round(config.block_time / pattern_period)))
    prev = None
    passes = 0
    periods = 0
    history = []
    converged = False
    while periods + block <= config.max_pattern_periods:
        acc, _ = sim.run_block(block)
        periods += block
        m = sim._window_metrics(acc, block * pattern_period)
        history.append(m)
        if prev is not None:
            scale = np.maximum(np.abs(m), np.abs(prev))
            floor = 1e-9 + 1e-6 * np.array([scale[:4].max()] * 4 + [scale[4], scale[5], scale[6]])
            change = np.abs(m - prev) / np.maximum(scale, floor)
            passes = passes + 1 if change.max() < config.tolerance else 0
            if passes >= 2:
                converged = True
                break
        prev = m

    n_report = max(block, capture_periods)
    if config.decimation > 0:
        sim.stride = config.decimation
        sim.counter = 0
        rows = n_report * sim.steps_per_pattern // config.decimation + 1
        sim.buf = np.full((rows, 7), np.nan)
    acc, audits = sim.run_block(n_report)
    periods_total = periods
    window = n_report * pattern_period
    m = sim._window_metrics(acc, window)

    def phasor(c, s):
        # i(t) = sqrt2 Re(I e^{jwt})  =>  I = (2/T) int i e^{-jwt} dt / sqrt2
        return (2.0 / window) * complex(c, -s) / math.sqrt(2)

    p_in = acc[A_EIN] / window
    p_out = acc[A_POUT] / window
    eff = min(max(p_out / p_in, 0.0), 1.0) if p_in > 0 else 0.0
    waveform = None
    if config.decimation > 0:
        waveform = sim.buf[~np.isnan(sim.buf[:, 0])]
        waveform = np.column_stack([waveform[:, 0], waveform[:, 1], waveform[:, 2], waveform[:, 3],
                                    waveform[:, 4], waveform[:, 5], waveform[:, 6] * RAD_S_TO_RPM])
    return SteadyStateReport(
        rms={"i_t": float(m[0]), "i_12": float(m[1]), "i_rm": float(m[2]), "i_fm": float(m[3])},
        u_m=float(m[4]), i_m=float(m[5]), speed_rpm=float(m[6] * RAD_S_TO_RPM),
        p_in=p_in, p_out=p_out, efficiency=eff,
        limiter_engaged=bool(min(sim.period_fold) < 1.0),
        cycles_to_converge=periods_total,
        converged=converged,
        i_t_fundamental=phasor(acc[A_ITC], acc[A_ITS]),
        i_rm_fundamental=phasor(acc[A_IRMC], acc[A_IRMS]),
        drive_fundamental=phasor(acc[A_UC], acc[A_US]),
        max_bus_current=float(max(sim.period_bus)),
        min_fold=float(min(sim.period_fold)),
        energy_audit_max=float(max(audits)),
        energy_audit=audits,
        discarded_energy=float(acc[A_DISCARD]),
        window=window,
        steps_per_period=config.steps_per_period,
        final_state=sim.x.copy(),
        time=sim.t,
        waveform=waveform,
        history=history,
    )


# -- cross-engine check -------------------------------------------------------------

@dataclass(frozen=True)
class CrossCheck:
    i_t_transient: float
    i_t_phasor: float
    i_rm_transient: float
    i_rm_phasor: float
    threshold: float = 0.05

    @property
    def i_t_deviation(self) -> float:
        return abs(self.i_t_transient - self.i_t_phasor) / self.i_t_phasor

    @property
    def i_rm_deviation(self) -> float:
        return abs(self.i_rm_transient - self.i_rm_phasor) / self.i_rm_phasor

    @property
    def flagged(self) -> bool:
        return self.i_t_deviation > self.threshold or self.i_rm_deviation > self.threshold


def phasor_counterpart(network: NetworkDescription, report: SteadyStateReport):
    """Phasor solution at the transient run's drive fundamental and equivalent load."""
    from wmdsim.phasor import OperatingPoint, solve_full

    return solve_full(network, OperatingPoint(network.nominal_frequency, abs(report.drive_fundamental),
                                              report.r_l_equivalent))


def compare_with_phasor(report: SteadyStateReport, solution, threshold: float = 0.05) -> CrossCheck:
    """Fundamental RMS of i_t and i_rm from the transient window against phasor magnitudes."""
    return CrossCheck(abs(report.i_t_fundamental), abs(solution.i_t),
                      abs(report.i_rm_fundamental), abs(solution.i_rm), threshold)


def waveform_csv(waveform: np.ndarray) -> str:
    head = "time_s,u_in_v,i_t_a,i_rm_a,u_m_v,i_m_a,speed_rpm\n"
    return head + "".join(",".join(f"{v:.9g}" for v in row) + "\n" for row in waveform)


# -- motor fit -------------------------------------------------------------------

@dataclass(frozen=True)
class MotorFit:
    """Motor parameters fitted to the prototype operating points.

    ``rated`` carries the rated load torque; ``no_load`` and ``medium`` are the
    same motor with zero and medium load torque.
    """

    rated: MotorParams
    medium_torque: float
    rated_speed: float
    no_load_speed: float
    medium_speed_target: float
    medium_speed_ceiling: float
    residuals: dict = field(default_factory=dict)

    @property
    def no_load(self) -> MotorParams:
        return self.rated.with_load(0.0)

    @property
    def medium(self) -> MotorParams:
        return self.rated.with_load(self.medium_torque)


def _bisect_log(fun, lo, hi, iterations=200):
    """Root of a decreasing function on [lo, hi], bisecting in log space."""
    for _ in range(iterations):
        mid = math.sqrt(lo * hi)
        if fun(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi / lo - 1 < 1e-13:
            break
    return math.sqrt(lo * hi)


def fit_motor_params(network: NetworkDescription, source: DcSource | None = None,
                     armature_resistance: float = 1.0, armature_inductance: float = 2e-3,
                     inertia: float = 1e-5, rated_rpm: float = 1119.0, no_load_rpm: float = 1633.0,
                     medium_rpm: float = 1245.0, medium_duty: float = 0.8, medium_position: float = 0.5,
                     refine: bool = True,
                     config: SimConfig = SimConfig()) -> MotorFit:
    """Fit k_e, B and the load torques with the drive itself as the plant.

    k_e = (U_rated - R_a I_rated) / w_rated.  B is chosen so the unloaded motor
    under full drive (DC limiter active) spins at ``no_load_rpm``: first on the
    quasi-static phasor model, then corrected with transient runs when
    ``refine`` is set.  Rated torque is k I_rated - B w_rated.  The medium
    torque puts the reduced-drive (``medium_duty``) speed at ``medium_rpm``;
    when that speed is out of reach it falls back to ``medium_position``
    between the rated speed and the lower of the no-load speed and the
    unloaded reduced-drive speed.
    """
    from wmdsim.pfm import pattern_from_duty

    src = source or network.source
    f = network.nominal_frequency
    w_r = rated_rpm / RAD_S_TO_RPM
    w_nl = no_load_rpm / RAD_S_TO_RPM
    k = (RATED_MOTOR_VOLTAGE - armature_resistance * RATED_MOTOR_CURRENT) / w_r
    full_pattern = pattern_from_duty(1.0, base_frequency=f)
    med_pattern = pattern_from_duty(medium_duty, base_frequency=f)
    full = drive_fundamental_rms(full_pattern, src.voltage_limit)

    def motor(b, tl=0.0):
        return MotorParams(armature_resistance, armature_inductance, k, inertia, b, tl)

    def qs_speed(b):
        return quasi_static_operating_point(network, motor(b), full, src, limiter=True).w_m

    b = _bisect_log(lambda bb: qs_speed(bb) - w_nl, 1e-6, 10.0)

    def tr(m, pattern):
        return run_to_steady_state(network, m, pattern, src, config)

    residuals = {}
    if refine:
        # secant on log(speed) vs log(B), starting from the quasi-static value
        pts = []
        for _ in range(8):
            w = tr(motor(b), full_pattern).speed_rpm / RAD_S_TO_RPM
            if abs(w / w_nl - 1) < 2e-4:
                break
            pts.append((math.log(b), math.log(w)))
            if len(pts) < 2:
                b *= w / w_nl
                continue
            (x0, y0), (x1, y1) = pts[-2:]
            slope = (y1 - y0) / (x1 - x0) if x1 != x0 else -1.0
            if not slope < 0:
                slope = -1.0
            b = math.exp(x1 + (math.log(w_nl) - y1) / slope)
    b = float(b)
    t_rated = k * RATED_MOTOR_CURRENT - b * w_r
    rated = motor(b, t_rated)

    if refine:
        ceiling = tr(motor(b), med_pattern)
        rated_run = tr(rated, full_pattern)
        w_ceiling = ceiling.speed_rpm / RAD_S_TO_RPM
        w_rated_sim = rated_run.speed_rpm / RAD_S_TO_RPM
        i_ceiling = ceiling.i_m
    else:
        med_drive = drive_fundamental_rms(med_pattern, src.voltage_limit)
        qs = quasi_static_operating_point(network, motor(b), med_drive, src, limiter=True)
        w_ceiling, i_ceiling = qs.w_m, qs.i_m
        w_rated_sim = quasi_static_operating_point(network, rated, full, src, limiter=True).w_m
    if w_ceiling <= w_rated_sim:
        raise ModelError("reduced drive cannot exceed the rated speed; no medium torque exists")
    target = medium_rpm / RAD_S_TO_RPM
    if not w_rated_sim < target < min(w_ceiling, w_nl):
        target = w_rated_sim + medium_position * (min(w_ceiling, w_nl) - w_rated_sim)
    t_med = max(k * i_ceiling - b * target, 0.0)
    if refine:
        # speed falls monotonically with torque: bracketed regula falsi
        def speed_at(tl):
            return tr(rated.with_load(tl), med_pattern).speed_rpm / RAD_S_TO_RPM

        lo_t, lo_w = 0.0, w_ceiling
        hi_t = max(t_med, 1e-3)
        hi_w = speed_at(hi_t)
        while hi_w > target:
            lo_t, lo_w = hi_t, hi_w
            hi_t *= 2.0
            hi_w = speed_at(hi_t)
        side = 0
        w = hi_w
        for _ in range(30):
            t_med = hi_t - (hi_w - target) * (hi_t - lo_t) / (hi_w - lo_w)
            w = speed_at(t_med)
            if abs(w / target - 1) < 1e-3:
                break
            if w > target:
                lo_t, lo_w = t_med, w
                if side == -1:
                    hi_w = target + 0.5 * (hi_w - target)
                side = -1
            else:
                hi_t, hi_w = t_med, w
                if side == 1:
                    lo_w = target + 0.5 * (lo_w - target)
                side = 1
        residuals = {
            "rated_u_m_rel": rated_run.u_m / RATED_MOTOR_VOLTAGE - 1,
            "rated_i_m_rel": rated_run.i_m / RATED_MOTOR_CURRENT - 1,
            "rated_speed_rel": w_rated_sim / w_r - 1,
            "no_load_speed_rel": tr(motor(b), full_pattern).speed_rpm / no_load_rpm - 1,
            "medium_speed_rel": w / target - 1,
        }
    residuals = {key: float(v) for key, v in residuals.items()}
    return MotorFit(rated=rated, medium_torque=float(t_med), rated_speed=w_r, no_load_speed=w_nl,
                    medium_speed_target=float(target), medium_speed_ceiling=float(w_ceiling),
                    residuals=residuals)


# Output of ``fit_motor_params(table1_preset())`` (scripts/fit_motor.py prints
# the residuals).  R_a, L_a and J are chosen, not fitted.
TABLE1_MOTOR = MotorParams(
    armature_resistance=1.0,
    armature_inductance=2e-3,
    back_emf_constant=0.686969057313543,
    inertia=1e-5,
    viscous_friction=0.0009915644011818379,
    load_torque=4.829984302008397,
)
TABLE1_MEDIUM_TORQUE = 3.3709321581065175


def table1_motor_fit() -> MotorFit:
    """Stored fit for the preset drive: no-load 1633 rpm, medium 1245 rpm at duty 4/5."""
    return MotorFit(
        rated=TABLE1_MOTOR,
        medium_torque=TABLE1_MEDIUM_TORQUE,
        rated_speed=1119.0 / RAD_S_TO_RPM,
        no_load_speed=1633.0 / RAD_S_TO_RPM,
        medium_speed_target=1245.0 / RAD_S_TO_RPM,
        medium_speed_ceiling=math.nan,
    )
