"""Fixed-step closed-loop integration of the turbine and its controller.

run_scenario advances all four controller stages and the five-state plant
on a common grid. Within each step the rotor voltages, pitch and wind are
zero-order-held while the plant integrates with classical RK4; the
observer state advances with its own RK4 over the same step; the polar
angle is re-optimised only at scheduler phase boundaries and reference
breakpoints, encoding the intended time-scale separation.

The hot path is the numba kernel in _fastloop; reference_loop restates it
with the public step functions and exists so tests can pin the two
against each other.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _fastloop
from .controller import (EstimatorState, GainConfig, PitchState,
                         SchedulerState, TorqueQuadratic, _gain_vector,
                         derive_torque_quadratic, performance_index,
                         pitch_step, polar_to_control, rotor_voltages,
                         scheduler_step, steady_state_maps, theta_minimize,
                         torque_estimator_step, torque_floor)
from .errors import ConfigError, NonFinite
from .linalg import eig4_real
from .plant import (OMEGA_TORQUE_FLOOR, TurbineParams, build_A_B, cp_value,
                    flux_current_maps)

logger = logging.getLogger(__name__)

LOG_COLUMNS = (
    "t", "v_w", "flux_ds", "flux_qs", "flux_dr", "flux_qr",
    "i_ds", "i_qs", "i_dr", "i_qr", "omega_r", "omega_rd",
    "torque_est", "torque_excess", "theta", "beta", "v_dr", "v_qr",
    "p", "q", "pf", "cp", "tsr", "perf", "p_d", "q_d",
)


@dataclass(frozen=True)
class SimConfig:
    """Integration grid, logging stride and initial plant state.

    flux0 None means "start at the electrical equilibrium of the initial
    control", which avoids an unphysical magnetisation transient.
    """

    dt: float = 5e-4
    duration: float = 900.0
    log_stride: int = 20
    flux0: np.ndarray | None = None
    omega_r0: float = 0.05
    seed: int = 1

    def __post_init__(self):
        if self.flux0 is not None:
            object.__setattr__(self, "flux0", np.asarray(self.flux0, dtype=float))
            if self.flux0.shape != (4,):
                raise ConfigError("flux0 must have four components")
        if self.dt <= 0.0 or self.duration <= 0.0:
            raise ConfigError("dt and duration must be positive")
        if self.log_stride < 1:
            raise ConfigError("log_stride must be at least 1")
        if self.omega_r0 <= 0.0:
            raise ConfigError("initial rotor speed must be positive")


@dataclass(frozen=True)
class Drive:
    """Exogenous inputs: wind knots and the reference schedules.

    Wind is linearly interpolated and clamped beyond its knots. The active
    power reference is a right-continuous step schedule. The reactive
    reference is either its own step schedule or, when pf_d is set,
    derived each sample from the measured active power so the delivered
    power factor tracks pf_d even when p_d is unreachable.
    """

    wind_t: np.ndarray
    wind_v: np.ndarray
    pd_t: np.ndarray
    pd_v: np.ndarray
    qd_t: np.ndarray | None = None
    qd_v: np.ndarray | None = None
    pf_d: float | None = None

    def __post_init__(self):
        for name in ("wind_t", "wind_v", "pd_t", "pd_v", "qd_t", "qd_v"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, np.asarray(val, dtype=float))
        has_schedule = self.qd_t is not None and self.qd_v is not None
        if has_schedule == (self.pf_d is not None):
            raise ConfigError("provide exactly one of a q_d schedule or pf_d")
        if self.pf_d is not None and not 0.0 < self.pf_d <= 1.0:
            raise ConfigError("pf_d must lie in (0, 1]")


@dataclass
class SimLog:
    """Uniformly sampled time series of every loop signal."""

    data: np.ndarray  # (n_rows, len(LOG_COLUMNS))

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[:, LOG_COLUMNS.index(name)]

    def __len__(self) -> int:
        return self.data.shape[0]


def rk4_step(f, x, t, dt):
    """One classical Runge-Kutta step of dx/dt = f(t, x).

    Works for scalar, vector or batched array states. Raises NonFinite if
    any stage produces a NaN or Inf.
    """
    if dt <= 0.0:
        raise ConfigError("dt must be positive")
    x = np.asarray(x, dtype=float)
    k1 = np.asarray(f(t, x))
    k2 = np.asarray(f(t + 0.5 * dt, x + 0.5 * dt * k1))
    k3 = np.asarray(f(t + 0.5 * dt, x + 0.5 * dt * k2))
    k4 = np.asarray(f(t + dt, x + dt * k3))
    for stage in (k1, k2, k3, k4):
        if not np.all(np.isfinite(stage)):
            raise NonFinite(f"integration stage produced a non-finite value at t={t}")
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def closed_loop_matrix(p: TurbineParams, gc: GainConfig) -> np.ndarray:
    a, b = build_A_B(p)
    return a - b @ gc.K


def max_stable_dt(p: TurbineParams, gc: GainConfig) -> float:
    """Stability guard 2 / max|eig| of the electrical closed loop."""
    eigs = eig4_real(closed_loop_matrix(p, gc))
    return 2.0 / float(np.max(np.abs(eigs)))


def _pack(p: TurbineParams, gc: GainConfig, tq: TorqueQuadratic):
    pv = np.array([p.v_ds, p.v_qs, p.inertia, p.friction, p.mech_power_scale,
                   p.tsr_per_speed, *p.cp_coeffs])
    cv = _gain_vector(gc, p)
    _, phi_base, phi_per_u, l_inv = steady_state_maps(p, gc.K)
    a, _ = build_A_B(p)
    inv_sqrt_d = 1.0 / np.sqrt(tq.eigvals)
    return pv, cv, a, l_inv, phi_base, phi_per_u, inv_sqrt_d


def _initial_state(p: TurbineParams, gc: GainConfig, sim: SimConfig,
                   tq: TorqueQuadratic, p_d0: float, q_d0: float):
    """Consistent start: torque estimate at the known floor term, flux at
    the electrical equilibrium of the initial control."""
    est0 = -torque_floor(p)
    z0 = est0 - gc.h * sim.omega_r0
    excess0 = max(est0 + gc.alpha * math.log(sim.omega_r0 / gc.omega_rd_init), 0.0)
    theta0 = theta_minimize(p, gc.K, tq, gc, excess0, gc.omega_rd_init, p_d0, q_d0)
    if sim.flux0 is not None:
        flux0 = sim.flux0
    else:
        u1, u2 = polar_to_control(tq, math.sqrt(excess0), theta0)
        _, phi_base, phi_per_u, _ = steady_state_maps(p, gc.K)
        flux0 = phi_base + phi_per_u @ np.array([u1, u2])
    return flux0, z0, theta0


def run_scenario(p: TurbineParams, gc: GainConfig, sim: SimConfig,
                 drive: Drive) -> SimLog:
    """Simulate the closed loop and return the sampled log.

    Raises ConfigError when dt violates the stability guard of the
    electrical closed loop, and NonFinite (with the offending time) if the
    state diverges.
    """
    guard = max_stable_dt(p, gc)
    if sim.dt > guard:
        raise ConfigError(f"dt={sim.dt} exceeds the stability guard {guard:.4g} s")
    n_steps = int(round(sim.duration / sim.dt))
    if n_steps < 1:
        raise ConfigError("duration must cover at least one step")

    tq = derive_torque_quadratic(p, gc.K)
    pv, cv, a, l_inv, phi_base, phi_per_u, inv_sqrt_d = _pack(p, gc, tq)
    if drive.pf_d is not None:
        qd_t = np.zeros(1)
        qd_v = np.zeros(1)
        qd_is_schedule = False
        pf_ratio = math.sqrt(1.0 / drive.pf_d**2 - 1.0)
        q_d0 = 0.0
    else:
        qd_t = drive.qd_t
        qd_v = drive.qd_v
        qd_is_schedule = True
        pf_ratio = 0.0
        q_d0 = float(qd_v[0])

    flux0, z0, theta0 = _initial_state(p, gc, sim, tq, float(drive.pd_v[0]), q_d0)
    n_rows = n_steps // sim.log_stride + 1
    log = np.empty((n_rows, len(LOG_COLUMNS)))
    status, fail_k, floor_count = _fastloop.run_loop(
        pv, cv, a, gc.K.astype(float), l_inv, phi_base, phi_per_u, tq.eigvecs,
        inv_sqrt_d, tq.u_center, drive.wind_t, drive.wind_v, drive.pd_t,
        drive.pd_v, qd_t, qd_v, qd_is_schedule, pf_ratio, sim.dt, n_steps,
        sim.log_stride, flux0, sim.omega_r0, z0, theta0, log)
    if status != 0:
        raise NonFinite(f"state diverged at t={fail_k * sim.dt:.6g} s")
    if floor_count:
        logger.warning("rotor speed floored at 1e-6 pu on %d steps (startup guard)",
                       floor_count)
    return SimLog(data=log)


def reference_loop(p: TurbineParams, gc: GainConfig, sim: SimConfig,
                   drive: Drive) -> SimLog:
    """Pure-Python restatement of run_scenario built from the step ops.

    Slow; used by tests to pin the numba path. Semantics must match
    run_loop exactly: same ordering, same zero-order holds.
    """
    n_steps = int(round(sim.duration / sim.dt))
    tq = derive_torque_quadratic(p, gc.K)
    a, _ = build_A_B(p)
    _, l_inv = flux_current_maps(p)
    dt = sim.dt

    if drive.pf_d is not None:
        pf_ratio = math.sqrt(1.0 / drive.pf_d**2 - 1.0)
        q_d0 = 0.0
    else:
        pf_ratio = None
        q_d0 = float(drive.qd_v[0])

    def sched_value(ts, vs, t):
        idx = int(np.searchsorted(ts, t, side="right")) - 1
        return float(vs[max(idx, 0)])

    flux0, z0, theta0 = _initial_state(p, gc, sim, tq, float(drive.pd_v[0]), q_d0)
    flux = flux0.copy()
    w = sim.omega_r0
    est = EstimatorState(z=z0, torque_est=z0 + gc.h * sim.omega_r0)
    sch = SchedulerState(omega_rd=gc.omega_rd_init, omega_rd_prev=gc.omega_rd_init)
    pitch = PitchState(beta=p.beta_min)
    theta = theta0
    theta_target = theta0
    u_meas = 0.0
    p_meas = 0.0
    prev_pd = 0.0
    prev_qd = 0.0

    rows = []
    for k in range(n_steps + 1):
        t = k * dt
        v_w = float(np.interp(t, drive.wind_t, drive.wind_v))
        p_d = sched_value(drive.pd_t, drive.pd_v, t)
        if pf_ratio is None:
            q_d = sched_value(drive.qd_t, drive.qd_v, t)
        else:
            q_d = pf_ratio * p_meas
        need_theta = k == 0 or p_d != prev_pd
        if pf_ratio is None and k > 0 and q_d != prev_qd:
            need_theta = True
        prev_pd, prev_qd = p_d, q_d

        if k > 0:
            phase_before = sch.phase
            sch = scheduler_step(gc, sch, u_meas, dt)
            if sch.phase is not phase_before:
                need_theta = True

        est_next, excess = torque_estimator_step(gc, est, w, sch.omega_rd, dt)
        if need_theta:
            theta_target = theta_minimize(p, gc.K, tq, gc, excess, sch.omega_rd,
                                          p_d, q_d)
        if k > 0:
            gap = (theta_target - theta + math.pi) % (2.0 * math.pi) - math.pi
            max_move = gc.theta_rate * dt
            if gap > max_move:
                theta = (theta + max_move + math.pi) % (2.0 * math.pi) - math.pi
            elif gap < -max_move:
                theta = (theta - max_move + math.pi) % (2.0 * math.pi) - math.pi
            else:
                theta = theta_target

        u1, u2 = polar_to_control(tq, math.sqrt(excess), theta)
        v_dr, v_qr = rotor_voltages(gc.K, flux, w, u1, u2)

        i = l_inv @ flux
        p_tot = -p.v_ds * i[0] - p.v_qs * i[1] - v_dr * i[2] - v_qr * i[3]
        q_tot = -p.v_qs * i[0] + p.v_ds * i[1] - v_qr * i[2] + v_dr * i[3]
        apparent = math.hypot(p_tot, q_tot)
        pf = p_tot / apparent if apparent > 0.0 else 0.0
        wq = max(w, OMEGA_TORQUE_FLOOR)
        tsr = p.tsr_per_speed * wq / v_w
        cp = float(cp_value(p, tsr, pitch.beta))
        perf = performance_index(gc, p_tot, q_tot, p_d, q_d)

        if k % sim.log_stride == 0:
            rows.append([t, v_w, *flux, *i, w, sch.omega_rd,
                         est.z + gc.h * w, excess, theta, pitch.beta,
                         v_dr, v_qr, p_tot, q_tot, pf, cp, tsr, perf, p_d, q_d])
        u_meas = perf
        p_meas = p_tot
        if k == n_steps:
            break

        beta_now = pitch.beta

        def plant_rhs(_t, x):
            d = np.empty(5)
            fl = x[:4]
            om = x[4]
            d[:4] = a @ fl
            d[0] += p.v_ds
            d[1] += p.v_qs
            d[2] += v_dr - om * fl[3]
            d[3] += v_qr + om * fl[2]
            ii = l_inv @ fl
            te = fl[1] * ii[0] - fl[0] * ii[1]
            omq = max(om, OMEGA_TORQUE_FLOOR)
            lam = p.tsr_per_speed * omq / v_w
            tm = p.mech_power_scale * float(cp_value(p, lam, beta_now)) * v_w**3 / omq
            d[4] = (tm - te - p.friction * om) / p.inertia
            return d

        state = rk4_step(plant_rhs, np.concatenate([flux, [w]]), t, dt)
        flux = state[:4]
        w = max(float(state[4]), _fastloop.OMEGA_STATE_FLOOR)
        est = est_next
        pitch = pitch_step(gc, pitch, p_meas, p.p_rated, dt, p.beta_min, p.beta_max)

    return SimLog(data=np.array(rows))
