"""Fit the step-to-step model from simulated walking and synthesize the FIR controller.

Run: python3 demos/learn_and_synthesize.py
"""
import numpy as np

from s2s_sls import harness, learn
from s2s_sls.config import ExperimentConfig


def main():
    cfg = ExperimentConfig()
    episodes = harness.generate_data(cfg)
    model, report = harness.fit_model(cfg, episodes)
    np.set_printoptions(precision=5, suppress=True)
    print("Abar =\n", model.Abar, "\nBbar =", model.Bbar.ravel(), " Cbar =", model.Cbar)
    print("d* =", model.dstar, " held-out within 1.5 d*:", report["holdout_within_1.5dstar"])

    orbit = learn.p1_orbit(model, cfg.v_d, cfg.hlip().T)
    print(f"P1 orbit x* = {orbit.x}, u* = {orbit.u}")

    d = harness.design(cfg, model)
    if d.controller is None:
        print("synthesis infeasible; binding family:", d.infeasible_family)
        return
    print(f"S0 half-width {d.S0.half_width} (auto factor {d.s0_factor:.3g})")
    for i, (px, pu) in enumerate(zip(d.controller.phi_x, d.controller.phi_u), start=1):
        print(f"Phi[{i}]: x {px.ravel()}  u {pu.ravel()}")
    cert = harness.certificate(cfg, d)
    print("certificate:", "passed" if cert["passed"] else cert["failing"])


if __name__ == "__main__":
    main()
