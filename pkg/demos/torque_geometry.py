"""Geometry of the steady-state torque map.

At the electrical steady state the electromagnetic torque is a convex
quadratic of the two auxiliary inputs, so its level sets are ellipses.
Whitening them into circles splits the control into a radius (the torque,
offset by a fixed floor) and an angle that moves active and reactive
power along a closed curve at constant torque - the redundancy the power
scheduler exploits. This script draws both pictures.
"""

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from dfigsim import GainConfig, TurbineParams, derive_torque_quadratic
from dfigsim.controller import polar_to_control, predict_pq

OUT = "demos/output/geometry"


def main():
    p = TurbineParams()
    gc = GainConfig()
    tq = derive_torque_quadratic(p, gc.K)
    print(f"torque floor: {tq.torque_floor:.4f} pu "
          f"(minimum torque over all inputs)")
    print(f"Hessian eigenvalues: {tq.eigvals[0]:.3e}, {tq.eigvals[1]:.3e} "
          f"(positive definite)")

    os.makedirs(OUT, exist_ok=True)
    theta = np.linspace(-np.pi, np.pi, 400)

    # torque level sets in the raw input plane
    fig, ax = plt.subplots(figsize=(5, 5))
    for excess in (5.0, 20.0, 35.8):
        u = np.array([polar_to_control(tq, np.sqrt(excess), th)
                      for th in theta])
        ax.plot(u[:, 0], u[:, 1],
                label=f"torque = floor + {excess:.0f} pu")
    ax.plot(*tq.u_center, "k+", markersize=10)
    ax.set_xlabel("u1")
    ax.set_ylabel("u2")
    ax.legend(loc="best", fontsize=8)
    ax.set_title("constant-torque ellipses of the auxiliary inputs")
    fig.tight_layout()
    fig.savefig(os.path.join(OUT, "torque_ellipses.svg"))
    plt.close(fig)

    # powers traced by the angle at fixed torque
    fig, ax = plt.subplots(figsize=(5, 5))
    omega_rd = 1.0
    for excess in (30.0, 35.8, 40.0):
        pq = np.array([predict_pq(p, gc.K, tq, excess, th, omega_rd)
                       for th in theta])
        ax.plot(pq[:, 0], pq[:, 1], label=f"torque excess {excess:.0f} pu")
    ax.plot([0.3], [0.03], "r*", markersize=12, label="example (P_d, Q_d)")
    ax.set_xlabel("active power P [pu]")
    ax.set_ylabel("reactive power Q [pu]")
    ax.set_xlim(-1.5, 1.5)
    ax.set_ylim(-1.5, 1.5)
    ax.legend(loc="best", fontsize=8)
    ax.set_title("power locus swept by the polar angle")
    fig.tight_layout()
    fig.savefig(os.path.join(OUT, "power_locus.svg"))
    plt.close(fig)

    print(f"wrote plots to {OUT}/")


if __name__ == "__main__":
    main()
