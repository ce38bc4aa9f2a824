"""Four-stage nonlinear controller for the DFIG turbine.

The cascade, fastest to slowest:

1. rotor_voltages: feedback linearization of the flux dynamics plus state
   feedback K, leaving two slow auxiliary inputs (u1, u2).
2. torque_estimator_step: drives the rotor speed to a reference omega_rd
   through a logarithmic tracking term, with a reduced-order observer
   estimating the lumped unknown torque (aerodynamics, friction, wind).
3. scheduler_step / theta_minimize: a hold-and-ramp gradient scheme moves
   omega_rd downhill on a measured power-error index, while the polar
   angle of the (u1, u2) plane is chosen to minimize the same index
   through a steady-state prediction.
4. pitch_step: blade pitch integrates toward clipping the active power at
   its rated value.

All steps are pure: they take a state value and return the next one.
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import DomainError, NotPositiveDefinite, ValidationError
from .linalg import eig2_sym, solve4
from .plant import TurbineParams, build_A_B, flux_current_maps, mechanical_power

# State feedback placing the electrical closed-loop eigenvalues at
# -10, -15 and -20 +/- 5j for the default turbine parameters.
K_DEFAULT = np.array([
    [12277.0, -4493.8, 32.7, -6.3],
    [-1615.4, 12117.0, -0.4, 32.2],
])

# Previous scheduler step below this magnitude cannot normalise a gradient
# estimate; the scheduler falls back to a fresh exploration step instead.
DEGENERATE_STEP_TOL = 1e-9


@dataclass(frozen=True)
class GainConfig:
    """Controller gains, weights and timing constants."""

    K: np.ndarray = field(default_factory=lambda: K_DEFAULT.copy())  # 2x4 state feedback
    alpha: float = 5.0            # log tracking gain, pu
    h: float = 16.0               # observer gain, pu
    inertia: float = 10.08        # rotor inertia as known to the controller, pu
    w_p: float = 10.0             # active-power error weight
    w_q: float = 1.0              # reactive-power error weight
    w_pq: float = 0.0             # cross weight
    step_max: float = 0.025       # scheduler step bound, pu
    grad_scale: float = 2.0       # gradient normalisation scale
    pitch_gain: float = 2.7       # pitch rate per pu of power error, deg/s
    avg_window: float = 1.0       # averaging window at the end of a hold, s
    hold_time: float = 4.0        # hold phase duration, s
    ramp_time: float = 6.0        # ramp phase duration, s
    step_init: float = 0.025      # first scheduler step, pu
    omega_rd_min: float = 0.05    # reference speed bounds, pu
    omega_rd_max: float = 1.4
    omega_rd_init: float = 0.5    # initial reference speed, pu
    theta_rate: float = 0.005     # polar-angle actuation rate limit, rad/s

    def __post_init__(self):
        object.__setattr__(self, "K", np.asarray(self.K, dtype=float))
        if self.K.shape != (2, 4):
            raise ValidationError("state feedback gain must be 2x4")
        if not (self.w_p > 0.0 and self.w_p * self.w_q > self.w_pq**2):
            raise ValidationError("power-error weights must be positive definite "
                                  "(w_p > 0 and w_p*w_q > w_pq^2)")
        if not self.avg_window < self.hold_time:
            raise ValidationError("avg_window must be shorter than hold_time")
        for name in ("alpha", "h", "inertia", "step_max", "grad_scale",
                     "pitch_gain", "avg_window", "ramp_time", "theta_rate"):
            if getattr(self, name) <= 0.0:
                raise ValidationError(f"{name} must be positive")
        if not self.omega_rd_min < self.omega_rd_max:
            raise ValidationError("omega_rd_min must be below omega_rd_max")
        if not self.omega_rd_min <= self.omega_rd_init <= self.omega_rd_max:
            raise ValidationError("omega_rd_init must lie inside the reference bounds")

    def with_overrides(self, **kwargs) -> "GainConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class TorqueQuadratic:
    """Electromagnetic torque as a convex quadratic of (u1, u2).

    At the electrical steady state, torque = u'Qu + lin'u + const with a
    positive definite Q. eigvecs/eigvals factor Q; torque_floor is the
    global minimum of the quadratic, reached at u_center, and equals
    -(v_ds^2 + v_qs^2) / (4 * omega_s * r_s) independently of K.
    """

    quad: np.ndarray        # (2,2) symmetric positive definite
    lin: np.ndarray         # (2,)
    const: float
    eigvecs: np.ndarray     # (2,2), orthonormal columns
    eigvals: np.ndarray     # (2,), ascending and positive
    torque_floor: float
    u_center: np.ndarray    # (2,) minimiser of the quadratic


class Phase(Enum):
    HOLD = 0
    RAMP = 1


@dataclass(frozen=True)
class EstimatorState:
    """Reduced-order observer state z and derived torque estimate."""

    z: float = 0.0
    torque_est: float = 0.0


@dataclass(frozen=True)
class SchedulerState:
    """Hold-and-ramp phase machine for the speed reference omega_rd."""

    phase: Phase = Phase.HOLD
    phase_clock: float = 0.0
    omega_rd: float = 0.5
    omega_rd_prev: float = 0.5
    delta: float = 0.0            # step executed by the current/last ramp, pu
    avg_accumulator: float = 0.0  # integral of the index over the window, pu^2*s
    first_avg: float | None = None
    theta: float = -math.pi       # polar control angle chosen at boundaries


@dataclass(frozen=True)
class PitchState:
    beta: float = 0.0


def torque_floor(p: TurbineParams) -> float:
    """Minimum electromagnetic torque reachable at the electrical steady
    state: -(v_ds^2 + v_qs^2) / (4 * omega_s * r_s), always negative and
    independent of the feedback gain."""
    return -(p.v_ds**2 + p.v_qs**2) / (4.0 * p.omega_s * p.r_s)


def rotor_voltages(k: np.ndarray, flux: np.ndarray, omega_r: float,
                   u1: float, u2: float) -> tuple[float, float]:
    """Rotor voltages cancelling the speed coupling and applying feedback.

    v_dr =  omega_r*phi_qr - K[0]@flux + u1
    v_qr = -omega_r*phi_dr - K[1]@flux + u2
    """
    v_dr = omega_r * flux[3] - float(k[0] @ flux) + u1
    v_qr = -omega_r * flux[2] - float(k[1] @ flux) + u2
    return v_dr, v_qr


def equilibrium_flux(a_cl: np.ndarray, p: TurbineParams,
                     u1: float, u2: float) -> np.ndarray:
    """Steady-state flux of the linearised loop for constant (u1, u2)."""
    rhs = np.array([p.v_ds, p.v_qs, u1, u2])
    return solve4(a_cl, -rhs)


def torque_flux_form(p: TurbineParams) -> np.ndarray:
    """Symmetric 4x4 form with torque = flux' @ form @ flux."""
    _, l_inv = flux_current_maps(p)
    form = np.outer(np.eye(4)[1], l_inv[0]) - np.outer(np.eye(4)[0], l_inv[1])
    return 0.5 * (form + form.T)


def derive_torque_quadratic(p: TurbineParams, k: np.ndarray) -> TorqueQuadratic:
    """Steady-state torque map u -> T_e as an exact convex quadratic.

    Composes the affine equilibrium flux map with the quadratic torque
    form directly (quad = S' E S etc.); extracting the 1e-6-magnitude
    Hessian entries by finite probing would lose seven digits against
    O(1) torque values. Raises NotPositiveDefinite if the Hessian is not
    positive definite.
    """
    _, phi_base, phi_per_u, _ = steady_state_maps(p, k)
    form = torque_flux_form(p)
    quad = phi_per_u.T @ form @ phi_per_u
    quad = 0.5 * (quad + quad.T)
    lin = 2.0 * (phi_per_u.T @ (form @ phi_base))
    const = float(phi_base @ form @ phi_base)

    eigvals, eigvecs = eig2_sym(quad)
    if eigvals[0] <= 0.0:
        raise NotPositiveDefinite(f"torque Hessian eigenvalues {eigvals} not positive")
    u_center = -0.5 * (eigvecs @ ((eigvecs.T @ lin) / eigvals))
    return TorqueQuadratic(quad=quad, lin=lin, const=const, eigvecs=eigvecs,
                           eigvals=eigvals, torque_floor=torque_floor(p),
                           u_center=u_center)


def polar_to_control(tq: TorqueQuadratic, radius: float, theta: float) -> tuple[float, float]:
    """Map polar coordinates of the whitened control plane back to (u1, u2).

    The radius fixes the torque (torque = radius^2 + torque_floor) while
    theta moves along the level set, which is the redundancy the power
    scheduler exploits.
    """
    if radius < 0.0:
        raise DomainError("radius must be nonnegative")
    z = np.array([radius * math.cos(theta), radius * math.sin(theta)])
    u = tq.eigvecs @ (z / np.sqrt(tq.eigvals)) + tq.u_center
    return float(u[0]), float(u[1])


def control_to_polar(tq: TorqueQuadratic, u1: float, u2: float) -> tuple[float, float]:
    """Forward whitening map; inverse of polar_to_control."""
    u = np.array([u1, u2])
    z = np.sqrt(tq.eigvals) * (tq.eigvecs.T @ u) + \
        0.5 * (tq.eigvecs.T @ tq.lin) / np.sqrt(tq.eigvals)
    return float(np.hypot(z[0], z[1])), float(math.atan2(z[1], z[0]))


def torque_estimator_step(gc: GainConfig, est: EstimatorState, omega_r: float,
                          omega_rd: float, dt: float) -> tuple[EstimatorState, float]:
    """One sampling step of the torque tracking loop with its observer.

    Returns the advanced estimator state and the commanded torque excess
    (the squared radius for polar_to_control):

        torque_est   = z + h*omega_r
        torque_excess = max(torque_est + alpha*ln(omega_r/omega_rd), 0)
        dz/dt        = -(h/J) * (torque_est - torque_excess)

    z is advanced with the same fixed-step RK4 as the plant, holding
    omega_r and the commanded excess over the step.
    """
    if omega_r <= 0.0 or omega_rd <= 0.0:
        raise DomainError("rotor speed and its reference must be positive")
    if dt <= 0.0:
        raise DomainError("dt must be positive")
    torque_est = est.z + gc.h * omega_r
    excess = max(torque_est + gc.alpha * math.log(omega_r / omega_rd), 0.0)
    rate = gc.h / gc.inertia

    def zdot(z):
        return -rate * (z + gc.h * omega_r - excess)

    z = est.z
    k1 = zdot(z)
    k2 = zdot(z + 0.5 * dt * k1)
    k3 = zdot(z + 0.5 * dt * k2)
    k4 = zdot(z + dt * k3)
    z_new = z + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return EstimatorState(z=z_new, torque_est=z_new + gc.h * omega_r), excess


def performance_index(gc: GainConfig, p: float, q: float,
                      p_d: float, q_d: float) -> float:
    """Weighted quadratic distance of (p, q) from its reference."""
    ep = p - p_d
    eq = q - q_d
    return 0.5 * (gc.w_p * ep * ep + 2.0 * gc.w_pq * ep * eq + gc.w_q * eq * eq)


def predict_pq(p: TurbineParams, k: np.ndarray, tq: TorqueQuadratic,
               torque_excess: float, theta: float,
               omega_rd: float) -> tuple[float, float]:
    """Steady-state (P, Q) the loop would settle to for given knobs.

    Chains the polar map, the equilibrium flux, the current map and the
    rotor-voltage law (evaluated at omega_r = omega_rd) into the stator
    and rotor power expressions. This is the known part of the index that
    theta can be optimised against.
    """
    if torque_excess < 0.0:
        raise DomainError("torque excess must be nonnegative")
    a, b = build_A_B(p)
    a_cl = a - b @ np.asarray(k, dtype=float)
    u1, u2 = polar_to_control(tq, math.sqrt(torque_excess), theta)
    flux = equilibrium_flux(a_cl, p, u1, u2)
    _, l_inv = flux_current_maps(p)
    i = l_inv @ flux
    v_dr, v_qr = rotor_voltages(k, flux, omega_rd, u1, u2)
    p_tot = -p.v_ds * i[0] - p.v_qs * i[1] - v_dr * i[2] - v_qr * i[3]
    q_tot = -p.v_qs * i[0] + p.v_ds * i[1] - v_qr * i[2] + v_dr * i[3]
    return float(p_tot), float(q_tot)


def steady_state_maps(p: TurbineParams, k: np.ndarray):
    """Affine maps of the electrical steady state used by the predictors.

    Returns (a_cl, phi_base, phi_per_u, l_inv) with the equilibrium flux
    equal to phi_base + phi_per_u @ (u1, u2).
    """
    from .linalg import inv4  # local import keeps module load order simple
    a, b = build_A_B(p)
    a_cl = a - b @ np.asarray(k, dtype=float)
    s = -inv4(a_cl)
    phi_base = s @ np.array([p.v_ds, p.v_qs, 0.0, 0.0])
    phi_per_u = np.ascontiguousarray(s[:, 2:])
    _, l_inv = flux_current_maps(p)
    return a_cl, phi_base, phi_per_u, l_inv


def theta_minimize(p: TurbineParams, k: np.ndarray, tq: TorqueQuadratic,
                   gc: GainConfig, torque_excess: float, omega_rd: float,
                   p_d: float, q_d: float) -> float:
    """Polar angle minimising the predicted performance index.

    Uniform 720-point scan over [-pi, pi) captures the global basin (the
    index is a low-order trigonometric polynomial of theta), then a
    golden-section refinement narrows the bracket below 1e-6. Ties break
    toward the smallest angle. Delegates to the compiled kernel so the
    simulation engine and this entry point share one implementation.
    """
    from . import _fastloop
    if torque_excess < 0.0:
        raise DomainError("torque excess must be nonnegative")
    _, phi_base, phi_per_u, l_inv = steady_state_maps(p, k)
    pv = np.array([p.v_ds, p.v_qs, p.inertia, p.friction, p.mech_power_scale,
                   p.tsr_per_speed, *p.cp_coeffs])
    cv = _gain_vector(gc, p)
    inv_sqrt_d = 1.0 / np.sqrt(tq.eigvals)
    return float(_fastloop._theta_argmin(
        torque_excess, omega_rd, p_d, q_d, pv, cv,
        np.asarray(k, dtype=float), l_inv, phi_base, phi_per_u, tq.eigvecs,
        inv_sqrt_d, tq.u_center))


def _gain_vector(gc: GainConfig, p: TurbineParams) -> np.ndarray:
    """Flat packing of gains shared with the compiled kernels."""
    return np.array([gc.alpha, gc.h, gc.inertia, gc.w_p, gc.w_q, gc.w_pq,
                     gc.step_max, gc.grad_scale, gc.pitch_gain, gc.avg_window,
                     gc.hold_time, gc.ramp_time, gc.step_init, gc.omega_rd_min,
                     gc.omega_rd_max, gc.omega_rd_init, p.beta_min, p.beta_max,
                     p.p_rated, gc.theta_rate])


# The S-motion completes in this fraction of the ramp phase. The remainder
# of the phase lets the speed loop settle before the next averaging window
# opens; averaging while the rotor still exchanges kinetic energy biases
# the gradient estimate downhill and stalls the tracking short of the
# optimum.
RAMP_MOTION_FRACTION = 0.5


def _smoothstep(tau: float) -> float:
    tau = min(max(tau, 0.0), 1.0)
    return tau * tau * (3.0 - 2.0 * tau)


def scheduler_step(gc: GainConfig, sch: SchedulerState, index_now: float,
                   dt: float) -> SchedulerState:
    """Advance the hold-and-ramp reference scheduler by one sample.

    During the final avg_window of each hold the performance index is
    integrated. When a hold ends, the two most recent window averages
    form a normalised gradient estimate, and the next step is

        delta = -step_max * sat((avg2 - avg1) / (grad_scale * delta_prev))

    saturated to +/-step_max. A vanishing previous step cannot normalise
    the quotient, so the scheduler falls back to a fresh +step_max
    exploration step. The ramp eases omega_rd to its new target along the
    smoothstep 3*tau^2 - 2*tau^3, completing the motion in the first
    RAMP_MOTION_FRACTION of the phase; the second average becomes the
    first of the next cycle. The reference is clamped to its bounds.
    """
    if dt <= 0.0:
        raise DomainError("dt must be positive")
    phase = sch.phase
    clock = sch.phase_clock + dt
    omega_rd = sch.omega_rd
    omega_prev = sch.omega_rd_prev
    delta = sch.delta
    acc = sch.avg_accumulator
    first_avg = sch.first_avg

    if phase is Phase.HOLD:
        if clock > gc.hold_time - gc.avg_window:
            acc += index_now * dt
        if clock >= gc.hold_time:
            avg = acc / gc.avg_window
            if first_avg is None:
                delta = gc.step_init
            elif abs(delta) < DEGENERATE_STEP_TOL:
                delta = gc.step_max
            else:
                quotient = (avg - first_avg) / (gc.grad_scale * delta)
                delta = -gc.step_max * min(max(quotient, -1.0), 1.0)
            first_avg = avg
            acc = 0.0
            omega_prev = omega_rd
            phase = Phase.RAMP
            clock -= gc.hold_time
    else:
        if clock >= gc.ramp_time:
            omega_rd = omega_prev + delta
            phase = Phase.HOLD
            clock -= gc.ramp_time
        else:
            tau = clock / (RAMP_MOTION_FRACTION * gc.ramp_time)
            omega_rd = omega_prev + delta * _smoothstep(tau)

    omega_rd = min(max(omega_rd, gc.omega_rd_min), gc.omega_rd_max)
    return SchedulerState(phase=phase, phase_clock=clock, omega_rd=omega_rd,
                          omega_rd_prev=omega_prev, delta=delta,
                          avg_accumulator=acc, first_avg=first_avg,
                          theta=sch.theta)


def pitch_step(gc: GainConfig, pitch: PitchState, p_now: float, p_rated: float,
               dt: float, beta_min: float, beta_max: float) -> PitchState:
    """Euler step of the pitch law clipping active power at its rating.

    The rate is -pitch_gain * (p_rated - p_now) except at a bound that the
    power error is pushing into, where the pitch holds still.
    """
    if dt <= 0.0:
        raise DomainError("dt must be positive")
    beta = pitch.beta
    if beta <= beta_min and p_now < p_rated:
        rate = 0.0
    elif beta >= beta_max and p_now > p_rated:
        rate = 0.0
    else:
        rate = -gc.pitch_gain * (p_rated - p_now)
    beta = min(max(beta + rate * dt, beta_min), beta_max)
    return PitchState(beta=beta)


def lumped_uncertainty(p: TurbineParams, omega_r, beta, v_w):
    """Ground-truth lumped torque the observer estimates online.

    mechanical torque minus the torque floor and friction:
    g = P_m/omega_r - torque_floor - friction*omega_r. Only verification
    code and tests may call this; the controller never sees it.
    """
    p_m, _, _ = mechanical_power(p, omega_r, beta, v_w)
    omega_r = np.asarray(omega_r, dtype=float)
    return (p_m / omega_r - torque_floor(p) - p.friction * omega_r)[()]


def first_uncertainty_zero(p: TurbineParams, beta: float, v_w: float,
                           omega_lo: float = 1e-3,
                           tol: float = 1e-10) -> float:
    """First rotor speed where the lumped torque crosses zero, by bisection.

    The lumped torque is positive on (0, zero); the crossing bounds the
    admissible speed references of the tracking loop.
    """
    g_lo = lumped_uncertainty(p, omega_lo, beta, v_w)
    if g_lo <= 0.0:
        raise DomainError("lumped torque must be positive at the lower bracket")
    hi = max(1.0, 2.0 * omega_lo)
    while lumped_uncertainty(p, hi, beta, v_w) > 0.0:
        hi *= 2.0
        if hi > 1e9:
            raise DomainError("no sign change found below 1e9 pu")
    lo = hi / 2.0 if hi > 2.0 * omega_lo else omega_lo
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if lumped_uncertainty(p, mid, beta, v_w) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def qd_from_power_factor(pf_d: float, p_active: float) -> float:
    """Reactive reference giving power factor pf_d at active power p_active.

    Positive sign: the turbine injects reactive power (lagging).
    """
    if not 0.0 < pf_d <= 1.0:
        raise ValidationError("power factor must lie in (0, 1]")
    return p_active * math.sqrt(1.0 / pf_d**2 - 1.0)
