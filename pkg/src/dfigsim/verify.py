"""Numerical certification of the closed-loop stability theory.

The speed/observer loop reduces, after the electrical transients settle,
to two states (omega_r, torque estimate). This module checks the claims
made about that reduced system on concrete parameter sets: slope bounds
of the lumped torque, the minimum observer gain that guarantees a
decreasing Lyapunov function, convergence and positive invariance over a
grid of initial conditions, and the exponential error decay of the
observer on a known-constant benchmark system.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _fastloop
from .controller import (GainConfig, first_uncertainty_zero,
                         lumped_uncertainty, torque_floor)
from .errors import DomainError
from .plant import TurbineParams
from .sim_engine import rk4_step

logger = logging.getLogger(__name__)

BRUTE_FORCE_GRID = np.logspace(-4.0, 4.0, 100_000)


@dataclass(frozen=True)
class SlopeBounds:
    """Lower/upper bounds on d(lumped torque)/d(omega_r)."""

    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < 0.0 < self.upper:
            raise DomainError("slope bounds must straddle zero")


def estimate_slope_bounds(p: TurbineParams, beta: float, v_w: float,
                          omega_grid: np.ndarray,
                          margin: float = 0.1) -> SlopeBounds:
    """Slope bounds of the lumped torque by central differences.

    The grid must resolve the torque curve knee (log spacing recommended);
    a relative safety margin widens both bounds.
    """
    omega_grid = np.asarray(omega_grid, dtype=float)
    if omega_grid.size < 1000:
        raise DomainError("use at least 1000 grid points")
    if np.any(omega_grid <= 0.0):
        raise DomainError("grid speeds must be positive")
    g = lumped_uncertainty(p, omega_grid, beta, v_w)
    slopes = (g[2:] - g[:-2]) / (omega_grid[2:] - omega_grid[:-2])
    lo = float(slopes.min())
    hi = float(slopes.max())
    return SlopeBounds(lower=lo - margin * abs(lo), upper=hi + margin * abs(hi))


def default_slope_grid(omega_max: float, n: int = 4000) -> np.ndarray:
    """Log-spaced speed grid from 1e-3 pu up to omega_max."""
    return np.logspace(-3.0, math.log10(omega_max), n)


def _gain_bound_integrand(x, bounds: SlopeBounds):
    lo = (bounds.lower + x) ** 2
    hi = (bounds.upper + x) ** 2
    return np.maximum(lo, hi) / (4.0 * x)


def estimator_gain_bound(bounds: SlopeBounds) -> float:
    """Minimum observer gain for the Lyapunov argument, closed form.

    Equals upper when upper >= -lower/3, otherwise
    -(upper - lower)^2 / (8 * (lower + upper)).
    """
    if bounds.upper >= -bounds.lower / 3.0:
        return bounds.upper
    return -(bounds.upper - bounds.lower) ** 2 / (8.0 * (bounds.lower + bounds.upper))


def estimator_gain_bound_bruteforce(bounds: SlopeBounds) -> float:
    """Same bound by direct minimisation over a dense log grid."""
    return float(np.min(_gain_bound_integrand(BRUTE_FORCE_GRID, bounds)))


def lyapunov_weight(bounds: SlopeBounds) -> float:
    """Weight c of the Lyapunov function, the brute-force argmin."""
    values = _gain_bound_integrand(BRUTE_FORCE_GRID, bounds)
    return float(BRUTE_FORCE_GRID[int(np.argmin(values))])


@dataclass(frozen=True)
class StabilityReport:
    """Per-initial-condition outcome of the reduced-loop grid check."""

    omega_rd: float
    omega_r1: float
    g_eq: float
    gain_bound: float
    lyap_weight: float
    omega0: np.ndarray       # (n,)
    ghat0: np.ndarray        # (n,)
    final_residual: np.ndarray
    max_v_increase: np.ndarray
    omega_min: np.ndarray
    omega_max: np.ndarray
    residual_tol: float
    v_tol: float

    @property
    def converged(self) -> np.ndarray:
        return np.isfinite(self.final_residual) & (self.final_residual < self.residual_tol)

    @property
    def invariant_ok(self) -> np.ndarray:
        return (self.omega_min > 0.0) & \
            (self.omega_max <= self.omega_r1 * (1.0 + 1e-9))

    @property
    def lyapunov_ok(self) -> np.ndarray:
        return self.max_v_increase < self.v_tol

    @property
    def all_ok(self) -> bool:
        return bool(np.all(self.converged & self.invariant_ok & self.lyapunov_ok))

    def csv_lines(self) -> list[str]:
        lines = ["omega_r0,torque_est0,converged,max_v_increase,final_residual,"
                 "omega_min,omega_max"]
        conv = self.converged
        for j in range(self.omega0.size):
            lines.append(f"{self.omega0[j]:.9g},{self.ghat0[j]:.9g},"
                         f"{int(conv[j])},{self.max_v_increase[j]:.9g},"
                         f"{self.final_residual[j]:.9g},{self.omega_min[j]:.9g},"
                         f"{self.omega_max[j]:.9g}")
        return lines


def default_initial_grid(p: TurbineParams, beta: float, v_w: float,
                         omega_rd: float, omega_r1: float,
                         n_omega: int = 20, n_ghat: int = 20):
    """Grid of initial conditions: a decade around the reference speed
    inside (0, omega_r1], and estimates spanning twice the realistic
    lumped-torque range."""
    floor = torque_floor(p)
    probe = default_slope_grid(omega_r1)
    g_max = float(np.max(lumped_uncertainty(p, probe, beta, v_w)))
    omega = np.logspace(math.log10(omega_rd / 10.0),
                        math.log10(min(10.0 * omega_rd, omega_r1)), n_omega)
    ghat = np.linspace(-2.0 * abs(floor), 2.0 * g_max, n_ghat)
    return np.meshgrid(omega, ghat, indexing="ij")


def check_stability_region(p: TurbineParams, gc: GainConfig, beta: float,
                           v_w: float, omega_rd: float,
                           initial_grid=None, horizon: float = 200.0,
                           dt: float = 1e-3, residual_tol: float = 1e-3,
                           v_tol: float = 1e-9) -> StabilityReport:
    """Integrate the reduced loop from a grid and certify the theory.

    Checks, per initial condition: convergence of (omega_r, estimate) to
    the equilibrium within residual_tol at the horizon, positive
    invariance of (0, omega_r1], and a per-step non-increase of the
    Lyapunov value within v_tol. The observer gain is compared against
    the sufficient bound; a too-small gain only logs a warning, since the
    bound is sufficient, not necessary.
    """
    omega_r1 = first_uncertainty_zero(p, beta, v_w)
    if not 0.0 < omega_rd <= omega_r1:
        raise DomainError(f"omega_rd must lie in (0, {omega_r1:.4g}]")
    bounds = estimate_slope_bounds(p, beta, v_w, default_slope_grid(1.2 * omega_r1))
    bound = estimator_gain_bound(bounds)
    if gc.h <= bound:
        logger.warning("observer gain %.3g below the sufficient bound %.3g; "
                       "the certificate does not apply", gc.h, bound)
    c_lyap = lyapunov_weight(bounds)
    if initial_grid is None:
        omega0, ghat0 = default_initial_grid(p, beta, v_w, omega_rd, omega_r1)
    else:
        omega0, ghat0 = initial_grid
    omega0 = np.asarray(omega0, dtype=float).ravel()
    ghat0 = np.asarray(ghat0, dtype=float).ravel()
    if np.any(omega0 <= 0.0) or np.any(omega0 > omega_r1):
        raise DomainError("initial speeds must lie in (0, omega_r1]")

    pv = np.array([p.v_ds, p.v_qs, p.inertia, p.friction, p.mech_power_scale,
                   p.tsr_per_speed, *p.cp_coeffs])
    g_eq = float(lumped_uncertainty(p, omega_rd, beta, v_w))
    out = np.empty((omega0.size, 5))
    n_steps = int(round(horizon / dt))
    _fastloop.reduced_grid_run(omega0, ghat0, omega_rd, g_eq, gc.alpha, gc.h,
                               p.inertia, c_lyap, beta, v_w, pv,
                               torque_floor(p), dt, n_steps, out)
    residual = np.abs(out[:, 0] - omega_rd) + np.abs(out[:, 1] - g_eq)
    return StabilityReport(omega_rd=omega_rd, omega_r1=omega_r1, g_eq=g_eq,
                           gain_bound=bound, lyap_weight=c_lyap,
                           omega0=omega0, ghat0=ghat0, final_residual=residual,
                           max_v_increase=out[:, 2], omega_min=out[:, 3],
                           omega_max=out[:, 4], residual_tol=residual_tol,
                           v_tol=v_tol)


@dataclass(frozen=True)
class EstimatorDemo:
    """Trajectory of the known-constant benchmark loop."""

    t: np.ndarray
    x: np.ndarray
    f_hat: np.ndarray
    f_const: float


def simulate_estimator_demo(inertia: float, h: float, f_const: float,
                            x0: float, horizon: float, dt: float = 1e-3,
                            alpha: float = 5.0, x_d: float = 1.0,
                            z0: float = 0.0) -> EstimatorDemo:
    """Simulate the first-order loop with constant unknown input.

    dx/dt = (f + u)/J with u = -f_hat - alpha*(x - x_d) and the
    reduced-order observer f_hat = z + h*x, dz/dt = -(h/J)*(u + f_hat).
    """
    if inertia <= 0.0 or h <= 0.0:
        raise DomainError("inertia and observer gain must be positive")
    n = int(round(horizon / dt))

    def rhs(_t, s):
        x, z = s[0], s[1]
        f_hat = z + h * x
        u = -f_hat - alpha * (x - x_d)
        return np.array([(f_const + u) / inertia, -(h / inertia) * (u + f_hat)])

    t = np.empty(n + 1)
    xs = np.empty(n + 1)
    zs = np.empty(n + 1)
    state = np.array([x0, z0])
    t[0], xs[0], zs[0] = 0.0, x0, z0
    for k in range(n):
        state = rk4_step(rhs, state, k * dt, dt)
        t[k + 1] = (k + 1) * dt
        xs[k + 1] = state[0]
        zs[k + 1] = state[1]
    return EstimatorDemo(t=t, x=xs, f_hat=zs + h * xs, f_const=f_const)


def check_estimator_decay(inertia: float, h: float, f_const: float,
                          x0: float, horizon: float, dt: float = 1e-3,
                          alpha: float = 5.0, x_d: float = 1.0,
                          z0: float = 0.0) -> float:
    """Max relative deviation of the observer error from exp(-h t / J).

    The estimation error of the benchmark loop contracts exactly like
    exp(-h t / J); returns how far the simulated error strays from that,
    relative to the closed form (absolute when the initial error is zero).
    """
    demo = simulate_estimator_demo(inertia, h, f_const, x0, horizon, dt,
                                   alpha, x_d, z0)
    err0 = f_const - (z0 + h * x0)
    sim = f_const - demo.f_hat
    closed = err0 * np.exp(-h * demo.t / inertia)
    if err0 == 0.0:
        return float(np.max(np.abs(sim)))
    return float(np.max(np.abs(sim - closed) / np.abs(closed)))


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    lines: list[str] = field(default_factory=list)
    csv: list[str] = field(default_factory=list)


def run_stability_suite(p: TurbineParams | None = None,
                        gc: GainConfig | None = None, beta: float = 0.0,
                        v_w: float = 10.0, omega_rd: float = 0.8) -> SuiteResult:
    p = p or TurbineParams()
    gc = gc or GainConfig()
    report = check_stability_region(p, gc, beta, v_w, omega_rd)
    n = report.omega0.size
    lines = [
        f"first lumped-torque zero: {report.omega_r1:.6g} pu",
        f"observer gain bound: {report.gain_bound:.6g} (gain {gc.h})",
        f"lyapunov weight: {report.lyap_weight:.6g}",
        f"converged: {int(np.sum(report.converged))}/{n} "
        f"(residual tol {report.residual_tol:g})",
        f"positively invariant: {int(np.sum(report.invariant_ok))}/{n}",
        f"lyapunov non-increasing: {int(np.sum(report.lyapunov_ok))}/{n} "
        f"(per-step tol {report.v_tol:g})",
    ]
    return SuiteResult(name="theorem1", passed=report.all_ok, lines=lines,
                       csv=report.csv_lines())


def run_quadratic_suite(seed: int = 2024, n_perturbations: int = 100,
                        n_samples: int = 1000) -> SuiteResult:
    from .controller import derive_torque_quadratic, polar_to_control
    from .plant import flux_current_maps, build_A_B
    from .linalg import solve4

    p = TurbineParams()
    gc = GainConfig()
    rng = np.random.default_rng(seed)
    lines = []
    ok = True

    tq = derive_torque_quadratic(p, gc.K)
    floor_expected = -(p.v_ds**2 + p.v_qs**2) / (4.0 * p.omega_s * p.r_s)
    floor_err = abs(tq.torque_floor - floor_expected)
    lines.append(f"torque floor: {tq.torque_floor:.6f} pu")

    a, b = build_A_B(p)
    a_cl = a - b @ gc.K
    _, l_inv = flux_current_maps(p)
    worst = 0.0
    for _ in range(n_samples):
        radius = math.sqrt(rng.uniform(0.0, 60.0))
        theta = rng.uniform(-math.pi, math.pi)
        u1, u2 = polar_to_control(tq, radius, theta)
        flux = solve4(a_cl, -np.array([p.v_ds, p.v_qs, u1, u2]))
        i = l_inv @ flux
        te = flux[1] * i[0] - flux[0] * i[1]
        worst = max(worst, abs(te - radius**2 - tq.torque_floor))
    identity_ok = worst < 1e-9
    ok &= identity_ok
    lines.append(f"torque identity max error over {n_samples} draws: {worst:.3e} "
                 f"({'ok' if identity_ok else 'FAIL'})")

    pd_count = 0
    trials = 0
    while pd_count < n_perturbations and trials < 100 * n_perturbations:
        trials += 1
        factors = rng.uniform(0.8, 1.2, size=5)
        try:
            pert = p.with_overrides(r_s=p.r_s * factors[0], r_r=p.r_r * factors[1],
                                    l_s=p.l_s * factors[2], l_r=p.l_r * factors[3],
                                    l_m=p.l_m * factors[4])
        except Exception:
            continue
        tq_p = derive_torque_quadratic(pert, gc.K)
        if tq_p.eigvals[0] <= 0.0:
            ok = False
            lines.append(f"FAIL: non-positive-definite Hessian at factors {factors}")
            break
        pd_count += 1
    lines.append(f"positive definite Hessian on {pd_count} perturbed parameter sets")
    ok &= pd_count == n_perturbations and floor_err < 1e-6
    return SuiteResult(name="quadratic", passed=bool(ok), lines=lines)


def run_estimator_suite() -> SuiteResult:
    p = TurbineParams()
    gc = GainConfig()
    dev = check_estimator_decay(p.inertia, gc.h, f_const=2.0, x0=0.3, horizon=5.0)
    lines = [f"decay deviation from exp(-h t / J): {dev:.3e}"]
    passed = dev < 1e-5
    demo = simulate_estimator_demo(p.inertia, gc.h, 2.0, 0.3, 20.0)
    tail = demo.t > 10.0
    err = np.abs(demo.x[tail] - 1.0)
    rate = -np.polyfit(demo.t[tail], np.log(err), 1)[0]
    expected = gc.alpha / p.inertia
    rate_ok = abs(rate - expected) < 0.05 * expected
    lines.append(f"tracking rate {rate:.4f} vs alpha/J {expected:.4f} "
                 f"({'ok' if rate_ok else 'FAIL'})")
    return SuiteResult(name="estimator", passed=bool(passed and rate_ok), lines=lines)


def run_gain_bound_suite(seed: int = 7, n_pairs: int = 50) -> SuiteResult:
    rng = np.random.default_rng(seed)
    lines = []
    worst = 0.0
    for j in range(n_pairs):
        lo = -float(10.0 ** rng.uniform(-1.0, 1.0))
        regime = j % 3
        if regime == 0:
            hi = -lo * rng.uniform(1.0, 3.0)
        elif regime == 1:
            hi = -lo * rng.uniform(1.0 / 3.0, 1.0)
        else:
            hi = -lo * rng.uniform(0.05, 1.0 / 3.0)
        b = SlopeBounds(lower=lo, upper=float(hi))
        closed = estimator_gain_bound(b)
        brute = estimator_gain_bound_bruteforce(b)
        worst = max(worst, abs(closed - brute) / abs(brute))
    lines.append(f"max closed-form vs brute-force mismatch over {n_pairs} pairs: "
                 f"{worst:.3e}")
    # continuity across the regime boundary upper = -lower/3
    lo = -3.0
    left = estimator_gain_bound(SlopeBounds(lower=lo, upper=1.0 - 1e-12))
    right = estimator_gain_bound(SlopeBounds(lower=lo, upper=1.0 + 1e-12))
    cont = abs(left - right)
    lines.append(f"regime-boundary continuity gap: {cont:.3e}")
    passed = worst < 1e-3 and cont < 1e-9
    return SuiteResult(name="gainbound", passed=bool(passed), lines=lines)


SUITES = {
    "theorem1": run_stability_suite,
    "quadratic": run_quadratic_suite,
    "estimator": run_estimator_suite,
    "gainbound": run_gain_bound_suite,
}
