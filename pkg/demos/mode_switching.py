"""Switching between maximum tracking and power regulation.

The active power command steps 1 -> 0.3 -> 1 pu while gentle synthetic
wind blows around 10 m/s. During regulation the controller sheds
aerodynamic efficiency on purpose (Cp drops), then recovers it when the
command returns to an unreachable level. The power factor holds near its
command throughout.
"""

import numpy as np

from dfigsim import parse_scenario, run
from dfigsim.scenario_io import emit_plots

SCENARIO = """
pd_schedule = 0:1.0, 1200:0.3, 2400:1.0
pf_d = 0.995
wind_mean = 10
wind_relaxation = 120
wind_volatility = 0.08
wind_min = 9.5
wind_max = 10.6
wind_seed = 42
duration = 3600
dt = 0.0005
log_stride = 20
"""


def window_mean(log, name, lo, hi):
    t = log["t"]
    mask = (t >= lo) & (t < hi)
    return log[name][mask].mean()


def main():
    log = run(parse_scenario(SCENARIO))
    print("phase                 mean P      mean Cp     mean PF")
    for label, lo, hi in [("tracking   [600,1200)", 600, 1200),
                          ("regulation [1500,2400)", 1500, 2400),
                          ("tracking   [2700,3600)", 2700, 3600)]:
        print(f"{label}   {window_mean(log, 'p', lo, hi):7.3f}    "
              f"{window_mean(log, 'cp', lo, hi):7.3f}    "
              f"{window_mean(log, 'pf', lo, hi):7.4f}")
    t = log["t"]
    print(f"\nmax |P| after startup: {np.abs(log['p'][t > 60]).max():.3f} pu")
    paths = emit_plots(log, "demos/output/switching")
    print("plots:", *paths, sep="\n  ")


if __name__ == "__main__":
    main()
