"""Acceptance suite: one test per release criterion.

Each test prints a single pass/fail line with the measured numbers, so a
`pytest tests/test_acceptance.py -v -s` run doubles as the release report.
Criteria 1-5 judge the closed loop on frozen scenarios; 6-12 are exact
property checks at pinned tolerances.
"""

import math
import time

import numpy as np
import pytest

from dfigsim.controller import (derive_torque_quadratic, equilibrium_flux,
                                performance_index, polar_to_control,
                                steady_state_maps, theta_minimize)
from dfigsim.linalg import eig4_real
from dfigsim.plant import build_A_B, flux_current_maps
from dfigsim.verify import (check_estimator_decay, check_stability_region,
                            estimator_gain_bound,
                            estimator_gain_bound_bruteforce, SlopeBounds)


def report(criterion, passed, detail):
    print(f"[criterion {criterion:>2}] {'PASS' if passed else 'FAIL'} - {detail}")
    assert passed, detail


def block_means(t, x, width, lo, hi):
    out = []
    for b0 in np.arange(lo, hi - width + 1e-9, width):
        mask = (t >= b0) & (t < b0 + width)
        if np.any(mask):
            out.append(x[mask].mean())
    return np.array(out)


def moving_average(t, x, width):
    csum = np.concatenate([[0.0], np.cumsum(x)])
    start = np.searchsorted(t, t - width)
    count = np.maximum(np.arange(1, len(x) + 1) - start, 1)
    return (csum[1:] - csum[start]) / count


def test_criterion_1_mpt_steady_state(mpt_result):
    log, wall = mpt_result
    t = log["t"]
    cp_mean = log["cp"][t > 600.0].mean()
    passed = cp_mean >= 0.47 and wall < 60.0
    report(1, passed,
           f"MPT mean Cp after 600 s = {cp_mean:.4f} (>= 0.47), "
           f"runtime {wall:.1f} s (< 60 s)")


def test_criterion_2_pr_steady_state(pr_log):
    t = pr_log["t"]
    p = pr_log["p"][t > 600.0]
    err = abs(p.mean() - 0.3)
    passed = err < 0.01 and p.std() < 0.02
    report(2, passed,
           f"PR |mean(P) - 0.3| = {err:.4f} (< 0.01), std(P) = {p.std():.4f} "
           f"(< 0.02)")


def test_criterion_3_mode_switching(switch_log):
    t = switch_log["t"]
    p = switch_log["p"]
    cp_ma = moving_average(t, switch_log["cp"], 60.0)
    max_p = np.abs(p[t >= 60.0]).max()

    def ma_at(when):
        return cp_ma[np.searchsorted(t, when)]

    mpt1 = ma_at(1195.0)
    pr_low = min(ma_at(1500.0), ma_at(2100.0))
    pr_late = ma_at(2395.0)
    recovered = max(ma_at(2700.0), ma_at(3000.0), ma_at(3400.0))
    dropped = mpt1 - pr_low > 0.02
    recovers = recovered - pr_late > 0.02 or recovered > 0.46
    passed = max_p <= 1.1 and dropped and recovers
    report(3, passed,
           f"max|P| after startup = {max_p:.3f} (<= 1.1); 60 s Cp averages "
           f"{mpt1:.3f} -> {pr_low:.3f} (drop) -> {recovered:.3f} (recovery)")


def test_criterion_4_power_factor(mpt_result, pr_log, switch_log):
    windows = {
        "mpt": (mpt_result[0], [(600.0, 900.0)]),
        "pr": (pr_log, [(600.0, 900.0)]),
        "switch": (switch_log, [(600.0, 1200.0), (1500.0, 2400.0),
                                (2700.0, 3600.0)]),
    }
    worst = 0.0
    for log, spans in windows.values():
        t = log["t"]
        for lo, hi in spans:
            means = block_means(t, log["pf"], 60.0, lo, hi)
            worst = max(worst, np.abs(means - 0.995).max())
    passed = worst < 0.01
    report(4, passed,
           f"worst 60 s-average |PF - 0.995| over settled windows = {worst:.4f} "
           f"(< 0.01)")


def test_criterion_5_pitch_protection(pitch_log):
    t = pitch_log["t"]
    p = pitch_log["p"]
    beta = pitch_log["beta"]
    p10 = moving_average(t, p, 10.0)
    p60 = moving_average(t, p, 60.0)
    over = np.where((p10 > 1.0) & (t >= 60.0))[0]
    assert over.size > 0, "scenario never pushed the 10 s average above rating"
    missed = 0
    for j in over[::25]:
        window = (t >= t[j]) & (t <= t[j] + 30.0)
        if not np.any(beta[window] > 1e-6):
            missed += 1
    max_p60 = p60[t >= 120.0].max()
    passed = missed == 0 and max_p60 <= 1.05
    report(5, passed,
           f"{over.size} over-rating samples, pitch responded within 30 s in "
           f"all sampled cases ({missed} missed); max 60 s-average P = "
           f"{max_p60:.4f} (<= 1.05)")


def test_criterion_6_torque_identity(params, gains, tq):
    a, b = build_A_B(params)
    a_cl = a - b @ gains.K
    _, l_inv = flux_current_maps(params)
    rng = np.random.default_rng(123)
    worst = 0.0
    for _ in range(1000):
        radius = math.sqrt(rng.uniform(0.0, 60.0))
        theta = rng.uniform(-math.pi, math.pi)
        u1, u2 = polar_to_control(tq, radius, theta)
        flux = equilibrium_flux(a_cl, params, u1, u2)
        i = l_inv @ flux
        te = flux[1] * i[0] - flux[0] * i[1]
        worst = max(worst, abs(te - radius**2 - tq.torque_floor))
    floor_ok = abs(tq.torque_floor - (-35.4108)) < 1e-4
    passed = worst < 1e-9 and floor_ok
    report(6, passed,
           f"max|T_e - r^2 - floor| over 1000 draws = {worst:.2e} (< 1e-9), "
           f"floor = {tq.torque_floor:.4f} (-35.4108)")


def test_criterion_7_hessian_positive_definite(params, gains):
    rng = np.random.default_rng(2024)
    checked = 0
    min_eig = np.inf
    tq0 = derive_torque_quadratic(params, gains.K)
    min_eig = min(min_eig, tq0.eigvals[0])
    while checked < 100:
        f = rng.uniform(0.8, 1.2, size=5)
        try:
            pert = params.with_overrides(r_s=params.r_s * f[0],
                                         r_r=params.r_r * f[1],
                                         l_s=params.l_s * f[2],
                                         l_r=params.l_r * f[3],
                                         l_m=params.l_m * f[4])
        except Exception:
            continue
        tq_p = derive_torque_quadratic(pert, gains.K)
        min_eig = min(min_eig, tq_p.eigvals[0])
        checked += 1
    passed = min_eig > 0.0 and checked == 100
    report(7, passed,
           f"torque Hessian positive definite on reference + {checked} "
           f"perturbed sets (min eigenvalue {min_eig:.3e})")


def test_criterion_8_pole_placement(params, gains):
    a, b = build_A_B(params)
    eigs = eig4_real(a - b @ gains.K)
    stable = bool(np.all(eigs.real < 0.0))
    targets = [-10 + 0j, -15 + 0j, -20 + 5j, -20 - 5j]
    left = list(eigs)
    worst = 0.0
    for want in targets:
        j = int(np.argmin([abs(g - want) for g in left]))
        worst = max(worst, abs(left[j] - want) / abs(want))
        left.pop(j)
    passed = stable and worst <= 0.10
    report(8, passed,
           f"closed-loop eigenvalues stable, worst relative distance to "
           f"(-10, -15, -20+/-5j) = {worst:.3f} (<= 0.10)")


def test_criterion_9_stability_region(params, gains):
    start = time.perf_counter()
    rep = check_stability_region(params, gains, beta=0.0, v_w=10.0,
                                 omega_rd=0.8)
    wall = time.perf_counter() - start
    n = rep.omega0.size
    passed = (n == 400 and rep.all_ok and wall < 30.0)
    report(9, passed,
           f"20x20 grid: {int(rep.converged.sum())}/{n} converged "
           f"(residual < 1e-3 at 200 s), invariance "
           f"{int(rep.invariant_ok.sum())}/{n}, Lyapunov non-increasing "
           f"{int(rep.lyapunov_ok.sum())}/{n} (tol 1e-9), "
           f"runtime {wall:.1f} s (< 30 s)")


def test_criterion_10_gain_bound_identity():
    rng = np.random.default_rng(7)
    worst = 0.0
    for j in range(50):
        lo = -float(10.0 ** rng.uniform(-1.0, 1.0))
        regime = j % 3
        if regime == 0:
            hi = -lo * rng.uniform(1.0, 3.0)
        elif regime == 1:
            hi = -lo * rng.uniform(1.0 / 3.0, 1.0)
        else:
            hi = -lo * rng.uniform(0.05, 1.0 / 3.0)
        bounds = SlopeBounds(lower=lo, upper=float(hi))
        closed = estimator_gain_bound(bounds)
        brute = estimator_gain_bound_bruteforce(bounds)
        worst = max(worst, abs(closed - brute) / abs(brute))
    passed = worst < 1e-3
    report(10, passed,
           f"closed form vs brute force over 50 bound pairs (3 regimes): "
           f"worst relative gap = {worst:.2e} (< 0.1%)")


def test_criterion_11_estimator_decay(params, gains):
    dev = check_estimator_decay(params.inertia, gains.h, f_const=2.0, x0=0.3,
                                horizon=5.0, dt=1e-3)
    passed = dev < 1e-5
    report(11, passed,
           f"observer error vs exp(-h t / J): max relative deviation = "
           f"{dev:.2e} (< 1e-5)")


def test_criterion_12_theta_minimizer_optimality(params, gains, tq):
    # vectorised brute force over a 10^4-point grid, built from the affine
    # steady-state maps independently of the production search kernel
    _, phi_base, phi_per_u, l_inv = steady_state_maps(params, gains.K)
    grid = np.linspace(-math.pi, math.pi, 10_000, endpoint=False)
    zdir = np.vstack([np.cos(grid), np.sin(grid)])
    rng = np.random.default_rng(99)
    worst = -np.inf
    for _ in range(100):
        excess = rng.uniform(0.0, 50.0)
        omega_rd = rng.uniform(0.3, 1.3)
        p_d = rng.uniform(0.0, 1.2)
        q_d = rng.uniform(-0.3, 0.5)
        radius = math.sqrt(excess)
        u = tq.eigvecs @ (radius * zdir / np.sqrt(tq.eigvals)[:, None]) \
            + tq.u_center[:, None]
        phi = phi_base[:, None] + phi_per_u @ u
        cur = l_inv @ phi
        v_dr = omega_rd * phi[3] - gains.K[0] @ phi + u[0]
        v_qr = -omega_rd * phi[2] - gains.K[1] @ phi + u[1]
        p = -params.v_ds * cur[0] - params.v_qs * cur[1] \
            - v_dr * cur[2] - v_qr * cur[3]
        q = -params.v_qs * cur[0] + params.v_ds * cur[1] \
            - v_qr * cur[2] + v_dr * cur[3]
        values = 0.5 * (gains.w_p * (p - p_d) ** 2
                        + 2.0 * gains.w_pq * (p - p_d) * (q - q_d)
                        + gains.w_q * (q - q_d) ** 2)
        star = theta_minimize(params, gains.K, tq, gains, excess, omega_rd,
                              p_d, q_d)
        u_s = np.array(polar_to_control(tq, radius, star))
        phi_s = phi_base + phi_per_u @ u_s
        cur_s = l_inv @ phi_s
        v_dr_s = omega_rd * phi_s[3] - gains.K[0] @ phi_s + u_s[0]
        v_qr_s = -omega_rd * phi_s[2] - gains.K[1] @ phi_s + u_s[1]
        p_s = -params.v_ds * cur_s[0] - params.v_qs * cur_s[1] \
            - v_dr_s * cur_s[2] - v_qr_s * cur_s[3]
        q_s = -params.v_qs * cur_s[0] + params.v_ds * cur_s[1] \
            - v_qr_s * cur_s[2] + v_dr_s * cur_s[3]
        u_star = performance_index(gains, float(p_s), float(q_s), p_d, q_d)
        worst = max(worst, u_star - values.min())
    passed = worst <= 1e-10
    report(12, passed,
           f"U(theta*) - brute-force minimum over 10^4-point grids, 100 "
           f"draws: worst gap = {worst:.2e} (<= 1e-10)")
