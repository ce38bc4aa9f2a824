"""Per-unit DFIG wind turbine model.

Electrical dynamics of the four dq fluxes, first-order mechanical dynamics
of the rotor speed, the Heier performance-coefficient surface, and the
power/torque output maps. Everything is a pure function of an immutable
parameter set, so callers may share a TurbineParams freely across threads.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, SingularMatrix, ValidationError
from .linalg import inv4

# Rotor speed below this floor uses the floor value when converting
# mechanical power to torque (startup singularity of P_m / omega_r).
OMEGA_TORQUE_FLOOR = 1e-3


@dataclass(frozen=True)
class TurbineParams:
    """Electrical, mechanical, aerodynamic and per-unit base constants.

    Defaults describe a 1.5 MW, 575 V, 60 Hz machine. All electrical
    quantities are per-unit; geometry is SI; wind speed is m/s.
    """

    omega_s: float = 1.0          # synchronous frame speed, pu
    r_s: float = 0.00706          # stator resistance, pu
    r_r: float = 0.005            # rotor resistance, pu
    l_s: float = 3.071            # stator inductance, pu
    l_r: float = 3.056            # rotor inductance, pu
    l_m: float = 2.9              # mutual inductance, pu
    v_ds: float = 1.0             # stator voltage, d axis, pu
    v_qs: float = 0.0             # stator voltage, q axis, pu
    inertia: float = 10.08        # rotor inertia, pu
    friction: float = 0.01        # viscous friction coefficient, pu
    swept_area: float = 4656.6    # rotor swept area, m^2
    rotor_radius: float = 38.5    # blade radius, m
    beta_min: float = 0.0         # pitch range, deg
    beta_max: float = 30.0
    p_nom: float = 1.5e6          # nominal mechanical power, W
    p_wind_base: float = 0.73     # max power at base wind speed, pu
    p_elec_base: float = 1.5e6 / 0.9  # generator base power, VA
    cp_peak: float = 0.48         # peak of the Cp surface
    lambda_opt: float = 8.1       # tip speed ratio at the Cp peak
    omega_r_base: float = 1.2     # base rotational speed, pu
    omega_r_nom: float = 2.1039   # nominal rotor speed, rad/s
    wind_base: float = 12.0       # base wind speed, m/s
    p_rated: float = 1.0          # rated active power, pu
    cp_coeffs: tuple[float, ...] = (0.5176, 116.0, 0.4, 5.0, 21.0, 0.0068)

    def __post_init__(self):
        if not (self.l_s > self.l_m > 0.0 and self.l_r > self.l_m):
            raise ValidationError("inductances must satisfy l_s > l_m > 0 and l_r > l_m")
        if not 0.0 < self.leakage < 1.0:
            raise ValidationError("leakage coefficient must lie in (0, 1)")
        if self.v_ds == 0.0 and self.v_qs == 0.0:
            raise ValidationError("stator voltages must not both be zero")
        if self.omega_s <= 0.0:
            raise ValidationError("omega_s must be positive")
        if self.inertia <= 0.0:
            raise ValidationError("inertia must be positive")
        if not self.beta_min < self.beta_max:
            raise ValidationError("beta_min must be below beta_max")

    @property
    def leakage(self) -> float:
        """Leakage coefficient sigma = 1 - l_m^2 / (l_s * l_r)."""
        return 1.0 - self.l_m**2 / (self.l_s * self.l_r)

    @property
    def mech_power_scale(self) -> float:
        """Multiplier turning Cp * V_w^3 (m/s) into mechanical power in pu."""
        return (self.p_nom * self.p_wind_base / self.p_elec_base
                / (self.cp_peak * self.wind_base**3))

    @property
    def tsr_per_speed(self) -> float:
        """Tip speed ratio per (omega_r_pu / V_w_mps)."""
        return self.lambda_opt * self.wind_base / self.omega_r_base

    def with_overrides(self, **kwargs) -> "TurbineParams":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class PlantState:
    """Flux vector (phi_ds, phi_qs, phi_dr, phi_qr) and rotor speed, pu."""

    flux: np.ndarray = field(default_factory=lambda: np.zeros(4))
    omega_r: float = 0.05


@dataclass(frozen=True)
class PlantOutputs:
    """Measured outputs: currents, powers, torque and power factor."""

    currents: np.ndarray  # (i_ds, i_qs, i_dr, i_qr), pu
    p_s: float
    q_s: float
    p_r: float
    q_r: float
    p: float
    q: float
    torque: float         # electromagnetic torque, pu
    power_factor: float


def build_A_B(p: TurbineParams) -> tuple[np.ndarray, np.ndarray]:
    """State and input matrices of the flux dynamics.

    d(flux)/dt = A @ flux + B @ (v_dr, v_qr) + (v_ds, v_qs,
    -omega_r*phi_qr, omega_r*phi_dr); the rotational coupling enters
    separately through electrical_derivative.
    """
    sig = p.leakage
    a_ss = -p.r_s / (sig * p.l_s)
    a_sr = p.r_s * p.l_m / (sig * p.l_s * p.l_r)
    a_rs = p.r_r * p.l_m / (sig * p.l_s * p.l_r)
    a_rr = -p.r_r / (sig * p.l_r)
    ws = p.omega_s
    a = np.array([
        [a_ss, ws, a_sr, 0.0],
        [-ws, a_ss, 0.0, a_sr],
        [a_rs, 0.0, a_rr, ws],
        [0.0, a_rs, -ws, a_rr],
    ])
    b = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return a, b


def flux_current_maps(p: TurbineParams) -> tuple[np.ndarray, np.ndarray]:
    """Inductance matrix L with flux = L @ currents, and its inverse."""
    if p.leakage <= 0.0:
        raise SingularMatrix("inductance matrix is singular (leakage <= 0)")
    l = np.array([
        [p.l_s, 0.0, p.l_m, 0.0],
        [0.0, p.l_s, 0.0, p.l_m],
        [p.l_m, 0.0, p.l_r, 0.0],
        [0.0, p.l_m, 0.0, p.l_r],
    ])
    return l, inv4(l)


def electrical_derivative(p: TurbineParams, a: np.ndarray, flux: np.ndarray,
                          omega_r: float, v_dr: float, v_qr: float) -> np.ndarray:
    """Time derivative of the flux vector for given rotor voltages."""
    out = a @ flux
    out[0] += p.v_ds
    out[1] += p.v_qs
    out[2] += v_dr - omega_r * flux[3]
    out[3] += v_qr + omega_r * flux[2]
    return out


def cp_value(p: TurbineParams, tsr, beta):
    """Performance coefficient Cp(tsr, beta) from the Heier surface.

    Negative values of the raw formula are clamped to zero: the turbine
    never absorbs power aerodynamically. Accepts scalars or arrays in tsr.
    """
    tsr = np.asarray(tsr, dtype=float)
    if np.any(tsr <= 0.0):
        raise DomainError("tip speed ratio must be positive")
    c1, c2, c3, c4, c5, c6 = p.cp_coeffs
    inv_li = 1.0 / (tsr + 0.08 * beta) - 0.035 / (beta**3 + 1.0)
    raw = c1 * (c2 * inv_li - c3 * beta - c4) * np.exp(-c5 * inv_li) + c6 * tsr
    return np.maximum(raw, 0.0)[()]


def mechanical_power(p: TurbineParams, omega_r_pu, beta, v_w):
    """Captured mechanical power in pu, plus tip speed ratio and Cp.

    Follows the per-unit chain of the reference 1.5 MW machine:
    P_m = (p_nom * p_wind_base / p_elec_base) * (Cp / cp_peak)
          * (v_w / wind_base)^3. Accepts scalars or arrays.
    """
    omega_r_pu = np.asarray(omega_r_pu, dtype=float)
    v_w = np.asarray(v_w, dtype=float)
    if np.any(v_w <= 0.0):
        raise DomainError("wind speed must be positive")
    if np.any(omega_r_pu <= 0.0):
        raise DomainError("rotor speed must be positive")
    tsr = p.tsr_per_speed * omega_r_pu / v_w
    cp = cp_value(p, tsr, beta)
    p_m = p.mech_power_scale * cp * v_w**3
    return p_m[()], tsr[()], cp


def torque_and_powers(p: TurbineParams, flux: np.ndarray,
                      v_dr: float, v_qr: float) -> PlantOutputs:
    """Currents, stator/rotor/total powers, torque and power factor."""
    _, l_inv = flux_current_maps(p)
    i = l_inv @ flux
    p_s = -p.v_ds * i[0] - p.v_qs * i[1]
    q_s = -p.v_qs * i[0] + p.v_ds * i[1]
    p_r = -v_dr * i[2] - v_qr * i[3]
    q_r = -v_qr * i[2] + v_dr * i[3]
    p_tot = p_s + p_r
    q_tot = q_s + q_r
    torque = flux[1] * i[0] - flux[0] * i[1]
    apparent = np.hypot(p_tot, q_tot)
    pf = p_tot / apparent if apparent > 0.0 else 0.0
    return PlantOutputs(currents=i, p_s=p_s, q_s=q_s, p_r=p_r, q_r=q_r,
                        p=p_tot, q=q_tot, torque=torque, power_factor=pf)


def mechanical_derivative(p: TurbineParams, omega_r: float,
                          t_m: float, t_e: float) -> float:
    """Rotor acceleration (T_m - T_e - friction*omega_r) / inertia."""
    if omega_r <= 0.0:
        raise DomainError("rotor speed must be positive")
    return (t_m - t_e - p.friction * omega_r) / p.inertia


def mechanical_torque(p: TurbineParams, omega_r: float, beta: float,
                      v_w: float) -> float:
    """Mechanical torque P_m / omega_r with the startup speed floor."""
    w = max(omega_r, OMEGA_TORQUE_FLOOR)
    p_m, _, _ = mechanical_power(p, w, beta, v_w)
    return p_m / w


def power_pu_to_watts(p: TurbineParams, power_pu):
    """Electrical power pu -> W on the generator base."""
    return power_pu * p.p_elec_base


def omega_r_pu_to_rad_s(p: TurbineParams, omega_r_pu):
    """Rotor speed pu -> rad/s on the nominal mechanical speed."""
    return omega_r_pu * p.omega_r_nom


def wind_mps_to_pu(p: TurbineParams, v_w):
    """Wind speed m/s -> pu on the base wind speed."""
    return v_w / p.wind_base
