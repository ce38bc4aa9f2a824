"""Numba kernels behind the fixed-step simulation engine.

The public modules keep readable numpy implementations of every controller
and plant operation; these kernels restate the same arithmetic as scalar
code so multi-million-step closed-loop runs stay fast. sim_engine owns the
packing of parameters into the flat arrays used here, and the test suite
pins this path against the pure-Python reference loop.

Log column layout (shared with sim_engine.SimLog):
  0 t      1 v_w    2-5 flux   6-9 currents   10 omega_r  11 omega_rd
  12 torque_est  13 torque_excess  14 theta  15 beta  16 v_dr  17 v_qr
  18 p  19 q  20 pf  21 cp  22 tsr  23 perf  24 p_d  25 q_d
"""

import math

import numpy as np
from numba import njit

N_COLS = 26

# plant vector layout
PV_V_DS, PV_V_QS, PV_J, PV_FRICTION, PV_PM_SCALE, PV_TSR_COEFF = range(6)
PV_C1, PV_C2, PV_C3, PV_C4, PV_C5, PV_C6 = range(6, 12)

# controller vector layout
(CV_ALPHA, CV_H, CV_J, CV_W_P, CV_W_Q, CV_W_PQ, CV_STEP_MAX, CV_GRAD_SCALE,
 CV_PITCH_GAIN, CV_AVG_WINDOW, CV_HOLD_TIME, CV_RAMP_TIME, CV_STEP_INIT,
 CV_OMEGA_RD_MIN, CV_OMEGA_RD_MAX, CV_OMEGA_RD_INIT, CV_BETA_MIN,
 CV_BETA_MAX, CV_P_RATED, CV_THETA_RATE) = range(20)

OMEGA_TORQUE_FLOOR = 1e-3
OMEGA_STATE_FLOOR = 1e-6
DEGENERATE_STEP_TOL = 1e-9
THETA_GRID_POINTS = 720
THETA_REFINE_TOL = 1e-6
RAMP_MOTION_FRACTION = 0.5
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@njit(cache=True)
def _cp(tsr, beta, pv):
    inv_li = 1.0 / (tsr + 0.08 * beta) - 0.035 / (beta * beta * beta + 1.0)
    raw = (pv[PV_C1] * (pv[PV_C2] * inv_li - pv[PV_C3] * beta - pv[PV_C4])
           * math.exp(-pv[PV_C5] * inv_li) + pv[PV_C6] * tsr)
    return raw if raw > 0.0 else 0.0


@njit(cache=True)
def _mech_torque(w, beta, v_w, pv):
    wq = w if w > OMEGA_TORQUE_FLOOR else OMEGA_TORQUE_FLOOR
    tsr = pv[PV_TSR_COEFF] * wq / v_w
    p_m = pv[PV_PM_SCALE] * _cp(tsr, beta, pv) * v_w * v_w * v_w
    return p_m / wq


@njit(cache=True)
def _wrap(theta):
    return (theta + math.pi) % (2.0 * math.pi) - math.pi


@njit(cache=True)
def _predict_index(theta, radius, omega_rd, p_d, q_d, pv, cv,
                   k_fb, l_inv, phi_base, s_u, evecs, inv_sqrt_d, u_center):
    z1 = radius * math.cos(theta)
    z2 = radius * math.sin(theta)
    w1 = z1 * inv_sqrt_d[0]
    w2 = z2 * inv_sqrt_d[1]
    u1 = evecs[0, 0] * w1 + evecs[0, 1] * w2 + u_center[0]
    u2 = evecs[1, 0] * w1 + evecs[1, 1] * w2 + u_center[1]
    f0 = phi_base[0] + s_u[0, 0] * u1 + s_u[0, 1] * u2
    f1 = phi_base[1] + s_u[1, 0] * u1 + s_u[1, 1] * u2
    f2 = phi_base[2] + s_u[2, 0] * u1 + s_u[2, 1] * u2
    f3 = phi_base[3] + s_u[3, 0] * u1 + s_u[3, 1] * u2
    i0 = l_inv[0, 0] * f0 + l_inv[0, 1] * f1 + l_inv[0, 2] * f2 + l_inv[0, 3] * f3
    i1 = l_inv[1, 0] * f0 + l_inv[1, 1] * f1 + l_inv[1, 2] * f2 + l_inv[1, 3] * f3
    i2 = l_inv[2, 0] * f0 + l_inv[2, 1] * f1 + l_inv[2, 2] * f2 + l_inv[2, 3] * f3
    i3 = l_inv[3, 0] * f0 + l_inv[3, 1] * f1 + l_inv[3, 2] * f2 + l_inv[3, 3] * f3
    v_dr = (omega_rd * f3 + u1
            - (k_fb[0, 0] * f0 + k_fb[0, 1] * f1 + k_fb[0, 2] * f2 + k_fb[0, 3] * f3))
    v_qr = (-omega_rd * f2 + u2
            - (k_fb[1, 0] * f0 + k_fb[1, 1] * f1 + k_fb[1, 2] * f2 + k_fb[1, 3] * f3))
    p = -pv[PV_V_DS] * i0 - pv[PV_V_QS] * i1 - v_dr * i2 - v_qr * i3
    q = -pv[PV_V_QS] * i0 + pv[PV_V_DS] * i1 - v_qr * i2 + v_dr * i3
    ep = p - p_d
    eq = q - q_d
    return 0.5 * (cv[CV_W_P] * ep * ep + 2.0 * cv[CV_W_PQ] * ep * eq
                  + cv[CV_W_Q] * eq * eq)


@njit(cache=True)
def _theta_argmin(torque_excess, omega_rd, p_d, q_d, pv, cv,
                  k_fb, l_inv, phi_base, s_u, evecs, inv_sqrt_d, u_center):
    radius = math.sqrt(torque_excess) if torque_excess > 0.0 else 0.0
    step = 2.0 * math.pi / THETA_GRID_POINTS
    best_theta = -math.pi
    best_val = 1e300
    for j in range(THETA_GRID_POINTS):
        theta = -math.pi + step * j
        val = _predict_index(theta, radius, omega_rd, p_d, q_d, pv, cv, k_fb,
                             l_inv, phi_base, s_u, evecs, inv_sqrt_d, u_center)
        if val < best_val:
            best_val = val
            best_theta = theta

    lo = best_theta - step
    hi = best_theta + step
    c = hi - _INV_PHI * (hi - lo)
    d = lo + _INV_PHI * (hi - lo)
    fc = _predict_index(_wrap(c), radius, omega_rd, p_d, q_d, pv, cv, k_fb,
                        l_inv, phi_base, s_u, evecs, inv_sqrt_d, u_center)
    fd = _predict_index(_wrap(d), radius, omega_rd, p_d, q_d, pv, cv, k_fb,
                        l_inv, phi_base, s_u, evecs, inv_sqrt_d, u_center)
    while hi - lo > THETA_REFINE_TOL:
        if fc < fd:
            hi = d
            d = c
            fd = fc
            c = hi - _INV_PHI * (hi - lo)
            fc = _predict_index(_wrap(c), radius, omega_rd, p_d, q_d, pv, cv,
                                k_fb, l_inv, phi_base, s_u, evecs, inv_sqrt_d,
                                u_center)
        else:
            lo = c
            c = d
            fc = fd
            d = lo + _INV_PHI * (hi - lo)
            fd = _predict_index(_wrap(d), radius, omega_rd, p_d, q_d, pv, cv,
                                k_fb, l_inv, phi_base, s_u, evecs, inv_sqrt_d,
                                u_center)
    refined = _wrap(0.5 * (lo + hi))
    val = _predict_index(refined, radius, omega_rd, p_d, q_d, pv, cv, k_fb,
                         l_inv, phi_base, s_u, evecs, inv_sqrt_d, u_center)
    if val < best_val:
        return refined
    return best_theta


@njit(cache=True)
def _plant_rhs(f0, f1, f2, f3, w, v_dr, v_qr, beta, v_w, a, l_inv, pv):
    d0 = a[0, 0] * f0 + a[0, 1] * f1 + a[0, 2] * f2 + a[0, 3] * f3 + pv[PV_V_DS]
    d1 = a[1, 0] * f0 + a[1, 1] * f1 + a[1, 2] * f2 + a[1, 3] * f3 + pv[PV_V_QS]
    d2 = a[2, 0] * f0 + a[2, 1] * f1 + a[2, 2] * f2 + a[2, 3] * f3 + v_dr - w * f3
    d3 = a[3, 0] * f0 + a[3, 1] * f1 + a[3, 2] * f2 + a[3, 3] * f3 + v_qr + w * f2
    i0 = l_inv[0, 0] * f0 + l_inv[0, 1] * f1 + l_inv[0, 2] * f2 + l_inv[0, 3] * f3
    i1 = l_inv[1, 0] * f0 + l_inv[1, 1] * f1 + l_inv[1, 2] * f2 + l_inv[1, 3] * f3
    te = f1 * i0 - f0 * i1
    tm = _mech_torque(w, beta, v_w, pv)
    dw = (tm - te - pv[PV_FRICTION] * w) / pv[PV_J]
    return d0, d1, d2, d3, dw


@njit(cache=True)
def run_loop(pv, cv, a, k_fb, l_inv, phi_base, s_u, evecs, inv_sqrt_d,
             u_center, wind_t, wind_v, pd_t, pd_v, qd_t, qd_v,
             qd_is_schedule, pf_ratio, dt, n_steps, stride,
             flux0, omega_r0, z0, theta0, log):
    """Closed-loop fixed-step run; fills `log` row by row.

    Returns (status, fail_step, floor_count): status 0 on success, 1 when
    a non-finite state appeared at step fail_step.
    """
    f0, f1, f2, f3 = flux0[0], flux0[1], flux0[2], flux0[3]
    w = omega_r0
    z = z0
    beta = cv[CV_BETA_MIN]
    theta = theta0
    theta_target = theta0

    phase = 0  # 0 hold, 1 ramp
    clock = 0.0
    omega_rd = cv[CV_OMEGA_RD_INIT]
    omega_prev = omega_rd
    delta = 0.0
    acc = 0.0
    first_avg = 0.0
    has_first = False

    u_meas = 0.0
    p_meas = 0.0
    prev_p_d = 0.0
    prev_q_d = 0.0

    iw = 0
    ipd = 0
    iqd = 0
    nw = wind_t.shape[0]
    npd = pd_t.shape[0]
    nqd = qd_t.shape[0]
    floor_count = 0
    row = 0

    for k in range(n_steps + 1):
        t = k * dt

        while iw + 1 < nw and wind_t[iw + 1] <= t:
            iw += 1
        if t <= wind_t[0]:
            v_w = wind_v[0]
        elif iw + 1 >= nw:
            v_w = wind_v[nw - 1]
        else:
            frac = (t - wind_t[iw]) / (wind_t[iw + 1] - wind_t[iw])
            v_w = wind_v[iw] + frac * (wind_v[iw + 1] - wind_v[iw])

        while ipd + 1 < npd and pd_t[ipd + 1] <= t:
            ipd += 1
        p_d = pd_v[ipd]
        if qd_is_schedule:
            while iqd + 1 < nqd and qd_t[iqd + 1] <= t:
                iqd += 1
            q_d = qd_v[iqd]
        else:
            q_d = pf_ratio * p_meas

        need_theta = k == 0 or p_d != prev_p_d
        if qd_is_schedule and k > 0 and q_d != prev_q_d:
            need_theta = True
        prev_p_d = p_d
        prev_q_d = q_d

        if k > 0:
            clock += dt
            phase_before = phase
            if phase == 0:
                if clock > cv[CV_HOLD_TIME] - cv[CV_AVG_WINDOW]:
                    acc += u_meas * dt
                if clock >= cv[CV_HOLD_TIME]:
                    avg = acc / cv[CV_AVG_WINDOW]
                    if not has_first:
                        delta = cv[CV_STEP_INIT]
                    elif abs(delta) < DEGENERATE_STEP_TOL:
                        delta = cv[CV_STEP_MAX]
                    else:
                        quot = (avg - first_avg) / (cv[CV_GRAD_SCALE] * delta)
                        if quot > 1.0:
                            quot = 1.0
                        elif quot < -1.0:
                            quot = -1.0
                        delta = -cv[CV_STEP_MAX] * quot
                    first_avg = avg
                    has_first = True
                    acc = 0.0
                    omega_prev = omega_rd
                    phase = 1
                    clock -= cv[CV_HOLD_TIME]
            else:
                if clock >= cv[CV_RAMP_TIME]:
                    omega_rd = omega_prev + delta
                    phase = 0
                    clock -= cv[CV_RAMP_TIME]
                else:
                    tau = clock / (RAMP_MOTION_FRACTION * cv[CV_RAMP_TIME])
                    if tau > 1.0:
                        tau = 1.0
                    omega_rd = omega_prev + delta * tau * tau * (3.0 - 2.0 * tau)
            if omega_rd < cv[CV_OMEGA_RD_MIN]:
                omega_rd = cv[CV_OMEGA_RD_MIN]
            elif omega_rd > cv[CV_OMEGA_RD_MAX]:
                omega_rd = cv[CV_OMEGA_RD_MAX]
            if phase != phase_before:
                need_theta = True

        torque_est = z + cv[CV_H] * w
        excess = torque_est + cv[CV_ALPHA] * math.log(w / omega_rd)
        if excess < 0.0:
            excess = 0.0

        if need_theta:
            theta_target = _theta_argmin(excess, omega_rd, p_d, q_d, pv, cv,
                                         k_fb, l_inv, phi_base, s_u, evecs,
                                         inv_sqrt_d, u_center)
        if k > 0:
            # rate-limited actuation along the shorter arc keeps the
            # auxiliary inputs slow-varying across re-optimisations
            gap = _wrap(theta_target - theta)
            max_move = cv[CV_THETA_RATE] * dt
            if gap > max_move:
                theta = _wrap(theta + max_move)
            elif gap < -max_move:
                theta = _wrap(theta - max_move)
            else:
                theta = theta_target

        radius = math.sqrt(excess)
        z1 = radius * math.cos(theta)
        z2 = radius * math.sin(theta)
        w1 = z1 * inv_sqrt_d[0]
        w2 = z2 * inv_sqrt_d[1]
        u1 = evecs[0, 0] * w1 + evecs[0, 1] * w2 + u_center[0]
        u2 = evecs[1, 0] * w1 + evecs[1, 1] * w2 + u_center[1]
        v_dr = (w * f3 + u1
                - (k_fb[0, 0] * f0 + k_fb[0, 1] * f1 + k_fb[0, 2] * f2 + k_fb[0, 3] * f3))
        v_qr = (-w * f2 + u2
                - (k_fb[1, 0] * f0 + k_fb[1, 1] * f1 + k_fb[1, 2] * f2 + k_fb[1, 3] * f3))

        i0 = l_inv[0, 0] * f0 + l_inv[0, 1] * f1 + l_inv[0, 2] * f2 + l_inv[0, 3] * f3
        i1 = l_inv[1, 0] * f0 + l_inv[1, 1] * f1 + l_inv[1, 2] * f2 + l_inv[1, 3] * f3
        i2 = l_inv[2, 0] * f0 + l_inv[2, 1] * f1 + l_inv[2, 2] * f2 + l_inv[2, 3] * f3
        i3 = l_inv[3, 0] * f0 + l_inv[3, 1] * f1 + l_inv[3, 2] * f2 + l_inv[3, 3] * f3
        p = -pv[PV_V_DS] * i0 - pv[PV_V_QS] * i1 - v_dr * i2 - v_qr * i3
        q = -pv[PV_V_QS] * i0 + pv[PV_V_DS] * i1 - v_qr * i2 + v_dr * i3
        apparent = math.hypot(p, q)
        pf = p / apparent if apparent > 0.0 else 0.0
        wq = w if w > OMEGA_TORQUE_FLOOR else OMEGA_TORQUE_FLOOR
        tsr = pv[PV_TSR_COEFF] * wq / v_w
        cp = _cp(tsr, beta, pv)
        ep = p - p_d
        eq = q - q_d
        perf = 0.5 * (cv[CV_W_P] * ep * ep + 2.0 * cv[CV_W_PQ] * ep * eq
                      + cv[CV_W_Q] * eq * eq)

        if not (math.isfinite(f0) and math.isfinite(f1) and math.isfinite(f2)
                and math.isfinite(f3) and math.isfinite(w) and math.isfinite(p)):
            return 1, k, floor_count

        if k % stride == 0:
            log[row, 0] = t
            log[row, 1] = v_w
            log[row, 2] = f0
            log[row, 3] = f1
            log[row, 4] = f2
            log[row, 5] = f3
            log[row, 6] = i0
            log[row, 7] = i1
            log[row, 8] = i2
            log[row, 9] = i3
            log[row, 10] = w
            log[row, 11] = omega_rd
            log[row, 12] = torque_est
            log[row, 13] = excess
            log[row, 14] = theta
            log[row, 15] = beta
            log[row, 16] = v_dr
            log[row, 17] = v_qr
            log[row, 18] = p
            log[row, 19] = q
            log[row, 20] = pf
            log[row, 21] = cp
            log[row, 22] = tsr
            log[row, 23] = perf
            log[row, 24] = p_d
            log[row, 25] = q_d
            row += 1

        u_meas = perf
        p_meas = p
        if k == n_steps:
            break

        # plant over [t, t+dt) with zero-order-hold controls and pitch
        k1 = _plant_rhs(f0, f1, f2, f3, w, v_dr, v_qr, beta, v_w, a, l_inv, pv)
        k2 = _plant_rhs(f0 + 0.5 * dt * k1[0], f1 + 0.5 * dt * k1[1],
                        f2 + 0.5 * dt * k1[2], f3 + 0.5 * dt * k1[3],
                        w + 0.5 * dt * k1[4], v_dr, v_qr, beta, v_w, a, l_inv, pv)
        k3 = _plant_rhs(f0 + 0.5 * dt * k2[0], f1 + 0.5 * dt * k2[1],
                        f2 + 0.5 * dt * k2[2], f3 + 0.5 * dt * k2[3],
                        w + 0.5 * dt * k2[4], v_dr, v_qr, beta, v_w, a, l_inv, pv)
        k4 = _plant_rhs(f0 + dt * k3[0], f1 + dt * k3[1],
                        f2 + dt * k3[2], f3 + dt * k3[3],
                        w + dt * k3[4], v_dr, v_qr, beta, v_w, a, l_inv, pv)
        f0 += dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        f1 += dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        f2 += dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        f3 += dt / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
        w += dt / 6.0 * (k1[4] + 2.0 * k2[4] + 2.0 * k3[4] + k4[4])
        if w < OMEGA_STATE_FLOOR:
            w = OMEGA_STATE_FLOOR
            floor_count += 1

        # RK4 on dz/dt = -(h/J) * (z + h*omega_r - excess), with omega_r and
        # the torque command held at their step-start values; torque_est
        # already equals z + h*omega_r at the step start.
        zrate = cv[CV_H] / cv[CV_J]
        hw_const = torque_est - z
        zdot1 = -zrate * (z + hw_const - excess)
        zdot2 = -zrate * (z + 0.5 * dt * zdot1 + hw_const - excess)
        zdot3 = -zrate * (z + 0.5 * dt * zdot2 + hw_const - excess)
        zdot4 = -zrate * (z + dt * zdot3 + hw_const - excess)
        z += dt / 6.0 * (zdot1 + 2.0 * zdot2 + 2.0 * zdot3 + zdot4)

        # pitch Euler with the power measured at the step start
        if beta <= cv[CV_BETA_MIN] and p_meas < cv[CV_P_RATED]:
            beta_rate = 0.0
        elif beta >= cv[CV_BETA_MAX] and p_meas > cv[CV_P_RATED]:
            beta_rate = 0.0
        else:
            beta_rate = -cv[CV_PITCH_GAIN] * (cv[CV_P_RATED] - p_meas)
        beta += beta_rate * dt
        if beta < cv[CV_BETA_MIN]:
            beta = cv[CV_BETA_MIN]
        elif beta > cv[CV_BETA_MAX]:
            beta = cv[CV_BETA_MAX]

    return 0, n_steps, floor_count


@njit(cache=True)
def _lumped_torque(w, beta, v_w, pv, torque_floor):
    tsr = pv[PV_TSR_COEFF] * w / v_w
    p_m = pv[PV_PM_SCALE] * _cp(tsr, beta, pv) * v_w * v_w * v_w
    return p_m / w - torque_floor - pv[PV_FRICTION] * w


@njit(cache=True)
def reduced_grid_run(omega0s, ghat0s, omega_rd, g_eq, alpha, h, inertia,
                     c_lyap, beta, v_w, pv, torque_floor, dt, n_steps, out):
    """Integrate the two-state speed/observer loop from each initial point.

    Tracks, per trajectory: final state, the largest single-step increase
    of the Lyapunov value V(w, gh) = alpha*c*(w*ln(w/w_d) - w + w_d)
    + (g(w) - gh)^2 / 2, and the speed range visited. out has one row per
    point: [w_T, gh_T, max_v_increase, w_min, w_max].
    """
    n = omega0s.shape[0]
    for j in range(n):
        w = omega0s[j]
        gh = ghat0s[j]
        w_min = w
        w_max = w
        g_w = _lumped_torque(w, beta, v_w, pv, torque_floor)
        v_prev = (alpha * c_lyap * (w * math.log(w / omega_rd) - w + omega_rd)
                  + 0.5 * (g_w - gh) * (g_w - gh))
        max_inc = -1e300
        ok = True
        for _ in range(n_steps):
            g1 = _lumped_torque(w, beta, v_w, pv, torque_floor)
            r1 = gh + alpha * math.log(w / omega_rd)
            if r1 < 0.0:
                r1 = 0.0
            dw1 = (g1 - r1) / inertia
            dg1 = h * (g1 - gh) / inertia

            wa = w + 0.5 * dt * dw1
            ga = gh + 0.5 * dt * dg1
            if wa <= 0.0:
                ok = False
                break
            g2 = _lumped_torque(wa, beta, v_w, pv, torque_floor)
            r2 = ga + alpha * math.log(wa / omega_rd)
            if r2 < 0.0:
                r2 = 0.0
            dw2 = (g2 - r2) / inertia
            dg2 = h * (g2 - ga) / inertia

            wb = w + 0.5 * dt * dw2
            gb = gh + 0.5 * dt * dg2
            if wb <= 0.0:
                ok = False
                break
            g3 = _lumped_torque(wb, beta, v_w, pv, torque_floor)
            r3 = gb + alpha * math.log(wb / omega_rd)
            if r3 < 0.0:
                r3 = 0.0
            dw3 = (g3 - r3) / inertia
            dg3 = h * (g3 - gb) / inertia

            wc = w + dt * dw3
            gc = gh + dt * dg3
            if wc <= 0.0:
                ok = False
                break
            g4 = _lumped_torque(wc, beta, v_w, pv, torque_floor)
            r4 = gc + alpha * math.log(wc / omega_rd)
            if r4 < 0.0:
                r4 = 0.0
            dw4 = (g4 - r4) / inertia
            dg4 = h * (g4 - gc) / inertia

            w += dt / 6.0 * (dw1 + 2.0 * dw2 + 2.0 * dw3 + dw4)
            gh += dt / 6.0 * (dg1 + 2.0 * dg2 + 2.0 * dg3 + dg4)
            if w <= 0.0:
                ok = False
                break
            if w < w_min:
                w_min = w
            if w > w_max:
                w_max = w
            g_w = _lumped_torque(w, beta, v_w, pv, torque_floor)
            v_now = (alpha * c_lyap * (w * math.log(w / omega_rd) - w + omega_rd)
                     + 0.5 * (g_w - gh) * (g_w - gh))
            inc = v_now - v_prev
            if inc > max_inc:
                max_inc = inc
            v_prev = v_now
        if not ok:
            out[j, 0] = np.nan
            out[j, 1] = np.nan
            out[j, 2] = np.inf
            out[j, 3] = 0.0
            out[j, 4] = w_max
        else:
            out[j, 0] = w
            out[j, 1] = gh
            out[j, 2] = max_inc
            out[j, 3] = w_min
            out[j, 4] = w_max
