"""Push the walker and compare SLS, deadbeat and LQR stepping; writes SVG figures.

Run: python3 demos/push_recovery.py [out_dir]
"""
import os
import sys

from s2s_sls import harness, plotting
from s2s_sls.config import ExperimentConfig


def main(out_dir="demo_out"):
    cfg = ExperimentConfig()
    model, _ = harness.fit_model(cfg, harness.generate_data(cfg))
    d = harness.design(cfg, model)
    report, logs = harness.compare_controllers(cfg, model, d, harness.CONTROLLERS, None, keep_trace=True)
    for name, s in report["controllers"].items():
        print(f"{name:9s} max |u| {s['max_abs_u']:.4f} m  recovery {s['recovery_steps']} steps")

    sep = harness.find_separation(cfg, model, d)
    if sep["separated"]:
        print(f"at {sep['force']:.1f} N deadbeat asks for {sep['deadbeat_max_abs_u']:.4f} m, "
              f"SLS stays at {sep['sls_max_abs_u']:.4f} m")

    os.makedirs(out_dir, exist_ok=True)
    for kind in plotting.KINDS:
        path = os.path.join(out_dir, f"{kind}.svg")
        plotting.emit_plot(list(logs.values()), kind, path, cfg=cfg, model=model)
        print("wrote", path)


if __name__ == "__main__":
    main(*sys.argv[1:2])
