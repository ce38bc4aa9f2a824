"""DFIG wind turbine closed-loop simulator and nonlinear controller.

Library layout:

- plant: per-unit electrical/mechanical turbine model and the Cp surface
- controller: the four cascaded control stages and their state types
- sim_engine: fixed-step closed-loop integration producing a SimLog
- scenario_io: scenario files, wind ingestion/synthesis, CSV and plots
- verify: numerical certification of the stability theory
- linalg: the few dense routines the model needs
"""

from .controller import (GainConfig, derive_torque_quadratic,
                         lumped_uncertainty, pitch_step, polar_to_control,
                         rotor_voltages, scheduler_step, theta_minimize,
                         torque_estimator_step)
from .plant import PlantState, TurbineParams, cp_value, mechanical_power
from .scenario_io import (Scenario, SyntheticWindSpec, WindSeries, gen_wind,
                          load_wind, parse_scenario, run, serialize_scenario)
from .sim_engine import Drive, SimConfig, SimLog, rk4_step, run_scenario
from .verify import (SlopeBounds, check_estimator_decay,
                     check_stability_region, estimate_slope_bounds,
                     estimator_gain_bound)

__all__ = [
    "Drive", "GainConfig", "PlantState", "Scenario", "SimConfig", "SimLog",
    "SlopeBounds", "SyntheticWindSpec", "TurbineParams", "WindSeries",
    "check_estimator_decay", "check_stability_region", "cp_value",
    "derive_torque_quadratic", "estimate_slope_bounds",
    "estimator_gain_bound", "gen_wind", "load_wind", "lumped_uncertainty",
    "mechanical_power", "parse_scenario", "pitch_step", "polar_to_control",
    "rk4_step", "rotor_voltages", "run", "run_scenario", "scheduler_step",
    "serialize_scenario", "theta_minimize", "torque_estimator_step",
]

__version__ = "0.1.0"
