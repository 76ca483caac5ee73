"""Closed-form H-LIP quantities and how closely the synthetic walker follows them.

Run: python3 demos/hlip_and_plant.py
"""
import numpy as np

from s2s_sls import hlip, plant
from s2s_sls.config import ExperimentConfig


def main():
    cfg = ExperimentConfig()
    params = cfg.hlip()
    A, B = hlip.s2s_matrices(params)
    print(f"lambda = {params.lam:.6f} 1/s, sigma1 = {hlip.orbital_slope_sigma1(params):.6f}")
    print("A =\n", A, "\nB =", B.ravel())
    print("50 N push as a state jump:", hlip.push_to_disturbance(50.0, params))
    print("deadbeat K =", hlip.deadbeat_gain(A, B).ravel())

    # the walker collapses onto H-LIP once every nonlinearity is switched off
    for name, pc in (("limit", plant.with_limits(cfg.plant())), ("nominal", cfg.plant())):
        rng = np.random.default_rng(1)
        dev = []
        for _ in range(20):
            p, v, u = rng.uniform(-0.3, 0.3), rng.uniform(-1, 1), rng.uniform(-0.7, 0.7)
            s = plant.impact_map(plant.pre_impact_state(p, v, pc), u, pc)
            _, rec, _ = plant.integrate_step(s, lambda x, t: 0.0, 0.0, pc)
            dev.append(np.abs(rec.x_pre.as_array() - (A @ [p, v] + B[:, 0] * u)).max())
        print(f"{name:8s} plant vs H-LIP one-step map: max deviation {max(dev):.2e}")


if __name__ == "__main__":
    main()
