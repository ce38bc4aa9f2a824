"""Scenario files, wind series, result CSVs and plot emission.

Scenario format: UTF-8 text, one `key = value` per line, `#` comments,
flat keys. Schedules are comma-separated `t:value` pairs. Every omitted
key falls back to the defaults of the 1.5 MW reference machine and its
tuned controller, so an empty file is a valid scenario.

Recognised keys
---------------
turbine:   omega_s r_s r_r l_s l_r l_m v_ds v_qs inertia friction
           swept_area rotor_radius beta_min beta_max p_nom p_wind_base
           p_elec_base cp_peak lambda_opt omega_r_base omega_r_nom
           wind_base p_rated cp_coeffs(6 values)
controller: k(8 values, row-major 2x4) alpha h controller_inertia
           w_p w_q w_pq step_max grad_scale pitch_gain avg_window
           hold_time ramp_time step_init omega_rd_min omega_rd_max
           omega_rd_init theta_rate
simulation: dt duration log_stride seed omega_r0 flux0(4 values)
wind:      wind_file | wind_mean wind_relaxation wind_volatility
           wind_min wind_max wind_seed wind_sample_dt
references: pd_schedule, and either qd_schedule or pf_d
"""

import csv
import io
import math
import os
from dataclasses import dataclass, fields

import numpy as np

from .controller import GainConfig
from .errors import ParseError, ValidationError
from .plant import TurbineParams
from .sim_engine import LOG_COLUMNS, Drive, SimConfig, SimLog, run_scenario


@dataclass(frozen=True)
class WindSeries:
    """Sampled wind speed; linear interpolation, clamped beyond the ends."""

    t: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        if self.t.ndim != 1 or self.t.shape != self.v.shape or self.t.size == 0:
            raise ValidationError("wind series needs matching nonempty t and v")
        if np.any(np.diff(self.t) <= 0.0):
            raise ValidationError("wind sample times must be strictly increasing")
        if np.any(self.v <= 0.0):
            raise ValidationError("wind speeds must be positive")


def sample(ws: WindSeries, t):
    """Wind speed at time t (scalar or array)."""
    return np.interp(t, ws.t, ws.v)


@dataclass(frozen=True)
class SyntheticWindSpec:
    """Mean-reverting synthetic wind: OU process, clamped and seeded."""

    mean: float = 10.0
    relaxation: float = 60.0      # mean-reversion time constant, s
    volatility: float = 0.6       # diffusion strength, m/s per sqrt(s)
    v_min: float = 6.0
    v_max: float = 14.0
    seed: int = 1
    sample_dt: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.v_min <= self.mean <= self.v_max:
            raise ValidationError("wind clamp bounds must be positive and "
                                  "contain the mean")
        if self.relaxation <= 0.0 or self.sample_dt <= 0.0:
            raise ValidationError("relaxation and sample_dt must be positive")
        if self.volatility < 0.0:
            raise ValidationError("volatility must be nonnegative")


def gen_wind(spec: SyntheticWindSpec, duration: float,
             dt_sample: float | None = None) -> WindSeries:
    """Generate a clamped mean-reverting wind series.

    Exact OU discretisation: stationary standard deviation is
    volatility * sqrt(relaxation / 2). Deterministic for a given seed.
    """
    dt = dt_sample if dt_sample is not None else spec.sample_dt
    n = int(math.ceil(duration / dt)) + 1
    t = dt * np.arange(n)
    v = np.empty(n)
    v[0] = spec.mean
    if spec.volatility == 0.0:
        v[:] = spec.mean
    else:
        rng = np.random.default_rng(spec.seed)
        rho = math.exp(-dt / spec.relaxation)
        sigma = spec.volatility * math.sqrt(0.5 * spec.relaxation * (1.0 - rho * rho))
        noise = rng.standard_normal(n - 1)
        for k in range(n - 1):
            v[k + 1] = spec.mean + (v[k] - spec.mean) * rho + sigma * noise[k]
            if v[k + 1] < spec.v_min:
                v[k + 1] = spec.v_min
            elif v[k + 1] > spec.v_max:
                v[k + 1] = spec.v_max
    return WindSeries(t=t, v=v)


def load_wind(path) -> WindSeries:
    """Read a two-column wind CSV `time_s,speed_mps`; header optional."""
    ts, vs = [], []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise ParseError(f"expected two columns, got {row!r}", lineno)
            try:
                ts.append(float(row[0]))
                vs.append(float(row[1]))
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ParseError(f"non-numeric wind row {row!r}", lineno) from None
    if not ts:
        raise ParseError("wind file contains no samples")
    return WindSeries(t=np.array(ts), v=np.array(vs))


@dataclass(frozen=True)
class Scenario:
    """Fully resolved simulation request."""

    turbine: TurbineParams
    gains: GainConfig
    sim: SimConfig
    wind_file: str | None
    wind_spec: SyntheticWindSpec
    pd_schedule: tuple[tuple[float, float], ...]
    qd_schedule: tuple[tuple[float, float], ...] | None
    pf_d: float | None


_TURBINE_KEYS = {f.name for f in fields(TurbineParams)} - {"cp_coeffs"}
_GAIN_KEYS = {f.name for f in fields(GainConfig)} - {"K", "inertia"}
_SIM_KEYS = {"dt", "duration", "omega_r0"}
_WIND_KEYS = {"wind_mean": "mean", "wind_relaxation": "relaxation",
              "wind_volatility": "volatility", "wind_min": "v_min",
              "wind_max": "v_max", "wind_sample_dt": "sample_dt"}


def _parse_floats(value: str, count: int, lineno: int) -> tuple[float, ...]:
    parts = [s.strip() for s in value.split(",")]
    if len(parts) != count:
        raise ParseError(f"expected {count} comma-separated values", lineno)
    try:
        return tuple(float(s) for s in parts)
    except ValueError:
        raise ParseError(f"non-numeric value in {value!r}", lineno) from None


def _parse_schedule(value: str, lineno: int) -> tuple[tuple[float, float], ...]:
    pairs = []
    for chunk in value.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ":" not in chunk:
            raise ParseError(f"schedule entry {chunk!r} is not t:value", lineno)
        t_str, v_str = chunk.split(":", 1)
        try:
            pairs.append((float(t_str), float(v_str)))
        except ValueError:
            raise ParseError(f"non-numeric schedule entry {chunk!r}", lineno) from None
    if not pairs:
        raise ParseError("empty schedule", lineno)
    return tuple(pairs)


def _validate_schedule(name: str, sched) -> None:
    times = [t for t, _ in sched]
    if times[0] != 0.0:
        raise ValidationError(f"{name} must start at t = 0")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValidationError(f"{name} times must be strictly increasing")


def parse_scenario(text: str) -> Scenario:
    """Parse scenario text into a fully resolved Scenario.

    Raises ParseError (with the line number) for malformed lines and
    ValidationError when a value violates an invariant.
    """
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(f"expected 'key = value', got {body!r}", lineno)
        key, value = (s.strip() for s in body.split("=", 1))
        if not key or not value:
            raise ParseError("empty key or value", lineno)
        if key in raw:
            raise ParseError(f"duplicate key {key!r} (first on line {raw[key][1]})",
                             lineno)
        raw[key] = (value, lineno)

    turbine_kw: dict = {}
    gain_kw: dict = {}
    sim_kw: dict = {}
    wind_kw: dict = {}
    wind_file = None
    pd_schedule: tuple = ((0.0, 1.0),)
    qd_schedule = None
    pf_d = None
    controller_inertia = None

    def as_float(value, lineno):
        try:
            return float(value)
        except ValueError:
            raise ParseError(f"expected a number, got {value!r}", lineno) from None

    def as_int(value, lineno):
        try:
            return int(value)
        except ValueError:
            raise ParseError(f"expected an integer, got {value!r}", lineno) from None

    for key, (value, lineno) in raw.items():
        if key in _TURBINE_KEYS:
            turbine_kw[key] = as_float(value, lineno)
        elif key == "cp_coeffs":
            turbine_kw[key] = _parse_floats(value, 6, lineno)
        elif key in _GAIN_KEYS:
            gain_kw[key] = as_float(value, lineno)
        elif key == "k":
            flat = _parse_floats(value, 8, lineno)
            gain_kw["K"] = np.array(flat).reshape(2, 4)
        elif key == "controller_inertia":
            controller_inertia = as_float(value, lineno)
        elif key in _SIM_KEYS:
            sim_kw[key] = as_float(value, lineno)
        elif key in ("log_stride", "seed"):
            sim_kw[key] = as_int(value, lineno)
        elif key == "flux0":
            sim_kw["flux0"] = np.array(_parse_floats(value, 4, lineno))
        elif key == "wind_file":
            wind_file = value
        elif key in _WIND_KEYS:
            wind_kw[_WIND_KEYS[key]] = as_float(value, lineno)
        elif key == "wind_seed":
            wind_kw["seed"] = as_int(value, lineno)
        elif key == "pd_schedule":
            pd_schedule = _parse_schedule(value, lineno)
        elif key == "qd_schedule":
            qd_schedule = _parse_schedule(value, lineno)
        elif key == "pf_d":
            pf_d = as_float(value, lineno)
        else:
            raise ParseError(f"unknown key {key!r}", lineno)

    turbine = TurbineParams(**turbine_kw)
    gain_kw["inertia"] = (controller_inertia if controller_inertia is not None
                          else turbine.inertia)
    gains = GainConfig(**gain_kw)
    sim = SimConfig(**sim_kw)
    if "seed" not in wind_kw:
        wind_kw["seed"] = sim.seed
    wind_spec = SyntheticWindSpec(**wind_kw)

    if qd_schedule is not None and pf_d is not None:
        raise ValidationError("qd_schedule and pf_d are mutually exclusive")
    if qd_schedule is None and pf_d is None:
        pf_d = 0.995
    if pf_d is not None and not 0.0 < pf_d <= 1.0:
        raise ValidationError("pf_d must lie in (0, 1]")
    _validate_schedule("pd_schedule", pd_schedule)
    if qd_schedule is not None:
        _validate_schedule("qd_schedule", qd_schedule)
    return Scenario(turbine=turbine, gains=gains, sim=sim, wind_file=wind_file,
                    wind_spec=wind_spec, pd_schedule=pd_schedule,
                    qd_schedule=qd_schedule, pf_d=pf_d)


def serialize_scenario(sc: Scenario) -> str:
    """Write a Scenario back to text; parse(serialize(parse(x))) is stable."""
    out = io.StringIO()

    def emit(key, value):
        out.write(f"{key} = {value}\n")

    def fmt(x):
        return f"{x:.12g}"

    for f in fields(TurbineParams):
        val = getattr(sc.turbine, f.name)
        if f.name == "cp_coeffs":
            emit(f.name, ", ".join(fmt(c) for c in val))
        else:
            emit(f.name, fmt(val))
    emit("k", ", ".join(fmt(x) for x in sc.gains.K.ravel()))
    emit("controller_inertia", fmt(sc.gains.inertia))
    for f in fields(GainConfig):
        if f.name in ("K", "inertia"):
            continue
        emit(f.name, fmt(getattr(sc.gains, f.name)))
    emit("dt", fmt(sc.sim.dt))
    emit("duration", fmt(sc.sim.duration))
    emit("log_stride", sc.sim.log_stride)
    emit("seed", sc.sim.seed)
    emit("omega_r0", fmt(sc.sim.omega_r0))
    if sc.sim.flux0 is not None:
        emit("flux0", ", ".join(fmt(x) for x in sc.sim.flux0))
    if sc.wind_file is not None:
        emit("wind_file", sc.wind_file)
    emit("wind_mean", fmt(sc.wind_spec.mean))
    emit("wind_relaxation", fmt(sc.wind_spec.relaxation))
    emit("wind_volatility", fmt(sc.wind_spec.volatility))
    emit("wind_min", fmt(sc.wind_spec.v_min))
    emit("wind_max", fmt(sc.wind_spec.v_max))
    emit("wind_seed", sc.wind_spec.seed)
    emit("wind_sample_dt", fmt(sc.wind_spec.sample_dt))
    emit("pd_schedule", ", ".join(f"{fmt(t)}:{fmt(v)}" for t, v in sc.pd_schedule))
    if sc.qd_schedule is not None:
        emit("qd_schedule", ", ".join(f"{fmt(t)}:{fmt(v)}" for t, v in sc.qd_schedule))
    else:
        emit("pf_d", fmt(sc.pf_d))
    return out.getvalue()


def scenario_wind(sc: Scenario, wind_csv: str | None = None) -> WindSeries:
    """Wind series for a scenario: explicit CSV > scenario file > synthetic."""
    if wind_csv is not None:
        return load_wind(wind_csv)
    if sc.wind_file is not None:
        return load_wind(sc.wind_file)
    return gen_wind(sc.wind_spec, sc.sim.duration)


def scenario_drive(sc: Scenario, wind: WindSeries) -> Drive:
    pd_t = np.array([t for t, _ in sc.pd_schedule])
    pd_v = np.array([v for _, v in sc.pd_schedule])
    if sc.qd_schedule is not None:
        qd_t = np.array([t for t, _ in sc.qd_schedule])
        qd_v = np.array([v for _, v in sc.qd_schedule])
        return Drive(wind_t=wind.t, wind_v=wind.v, pd_t=pd_t, pd_v=pd_v,
                     qd_t=qd_t, qd_v=qd_v)
    return Drive(wind_t=wind.t, wind_v=wind.v, pd_t=pd_t, pd_v=pd_v,
                 pf_d=sc.pf_d)


def run(sc: Scenario, wind_csv: str | None = None) -> SimLog:
    """Convenience wrapper: resolve the wind and run the scenario."""
    wind = scenario_wind(sc, wind_csv)
    return run_scenario(sc.turbine, sc.gains, sc.sim, scenario_drive(sc, wind))


def write_results(log: SimLog, path) -> None:
    """Write the log as CSV, nine significant digits, fixed column order."""
    if len(log) == 0:
        raise ValidationError("refusing to write an empty log")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(LOG_COLUMNS) + "\n")
        for row in log.data:
            fh.write(",".join(f"{x:.9g}" for x in row) + "\n")


def read_results(path) -> SimLog:
    """Read a results CSV produced by write_results."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header.split(",") != list(LOG_COLUMNS):
            raise ParseError("unexpected results header", 1)
        try:
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise ParseError(f"malformed results row: {exc}") from None
    if data.size == 0 or data.shape[1] != len(LOG_COLUMNS):
        raise ParseError("results file has no valid rows")
    return SimLog(data=data)


def emit_plots(log: SimLog, out_dir) -> list[str]:
    """Eight SVG plots of the main loop signals; returns the paths."""
    import matplotlib
    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    if len(log) == 0:
        raise ValidationError("refusing to plot an empty log")
    os.makedirs(out_dir, exist_ok=True)
    t = log["t"]
    pf_d = np.zeros_like(t)
    apparent_d = np.hypot(log["p_d"], log["q_d"])
    nz = apparent_d > 0.0
    pf_d[nz] = log["p_d"][nz] / apparent_d[nz]

    # zoom on a window late enough to show the settled hold/ramp pattern
    t_hi = t[-1]
    zoom_lo = max(0.0, min(0.6 * t_hi, t_hi - 60.0))
    zoom = (t >= zoom_lo) & (t <= zoom_lo + 60.0)
    if not np.any(zoom):
        zoom = np.ones_like(t, dtype=bool)

    panels = [
        ("wind", "wind speed [m/s]", [(t, log["v_w"], "v_w")]),
        ("cp", "performance coefficient", [(t, log["cp"], "cp")]),
        ("active_power", "active power [pu]",
         [(t, log["p_d"], "p_d"), (t, log["p"], "p")]),
        ("power_factor", "power factor",
         [(t, pf_d, "pf_d"), (t, log["pf"], "pf")]),
        ("rotor_speed", "rotor speed [pu]",
         [(t, log["omega_rd"], "omega_rd"), (t, log["omega_r"], "omega_r")]),
        ("rotor_speed_zoom", "rotor speed [pu] (zoom)",
         [(t[zoom], log["omega_rd"][zoom], "omega_rd"),
          (t[zoom], log["omega_r"][zoom], "omega_r")]),
        ("rotor_voltages", "rotor voltages [pu]",
         [(t, log["v_dr"], "v_dr"), (t, log["v_qr"], "v_qr")]),
        ("pitch", "pitch angle [deg]", [(t, log["beta"], "beta")]),
    ]
    paths = []
    for name, ylabel, series in panels:
        fig, ax = plt.subplots(figsize=(8, 3))
        for xs, ys, label in series:
            ax.plot(xs, ys, label=label, linewidth=0.9)
        ax.set_xlabel("time [s]")
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.3)
        if len(series) > 1:
            ax.legend(loc="best")
        fig.tight_layout()
        path = os.path.join(out_dir, f"{name}.svg")
        fig.savefig(path)
        plt.close(fig)
        paths.append(path)
    return paths
