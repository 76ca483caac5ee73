"""Command-line entry point.

Every subcommand takes ``--config`` (optional, defaults to the AMBER-style
settings) and ``--out`` (the artifact directory). Later stages read what
earlier stages wrote there. Exit status: 0 on success, 2 when the SLS
synthesis is infeasible, 1 on any other failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from . import harness, learn, sls
from .config import ConfigError, ExperimentConfig

log = logging.getLogger("s2s_sls")

EXIT_OK, EXIT_FAIL, EXIT_INFEASIBLE = 0, 1, 2


def _config(args) -> ExperimentConfig:
    return ExperimentConfig.load(args.config) if args.config else ExperimentConfig()


def _p(args, name):
    return os.path.join(args.out, name)


def _model(args, cfg) -> learn.S2SModel:
    model = learn.S2SModel.load(_p(args, "model.txt"))
    if model.meta.get("config_hash") != cfg.digest():
        raise ConfigError("model.txt was produced by a different config; rerun `learn`")
    return model


def _design(args, cfg, model) -> harness.Design:
    path = _p(args, "controller.txt")
    if not os.path.exists(path):
        raise sls.SynthesisInfeasible(None, "no controller.txt; `synthesize` failed or was not run")
    return harness.load_design(cfg, model, path)


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    os.makedirs(args.out, exist_ok=True)
    episodes = harness.generate_data(cfg)
    harness.write_steps_csv(episodes, _p(args, "steps.csv"))
    harness.atomic_write_text(_p(args, "config.txt"), cfg.to_text())
    print(f"wrote {sum(len(e.records) for e in episodes)} steps from {len(episodes)} episodes")
    return EXIT_OK


def cmd_learn(args) -> int:
    cfg = _config(args)
    episodes = harness.read_steps_csv(_p(args, "steps.csv"))
    model, report = harness.fit_model(cfg, episodes)
    model.save(_p(args, "model.txt"))
    harness.write_json(report, _p(args, "fit.json"))
    print(f"d* = {model.dstar.tolist()}, held-out within 1.5 d*: {report['holdout_within_1.5dstar']}")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    cfg = _config(args)
    model = _model(args, cfg)
    d = harness.design(cfg, model)
    cert = harness.certificate(cfg, d)
    harness.write_json(cert, _p(args, "certificate.json"))
    if d.controller is None:
        print(f"synthesis infeasible; binding constraint family: {d.infeasible_family}")
        return EXIT_INFEASIBLE
    d.controller.meta.update(harness.design_meta(d))
    d.controller.save(_p(args, "controller.txt"))
    print(f"controller N_F={d.controller.nf}, S0 half-width {d.S0.half_width.tolist()}, "
          f"certificate {'passed' if cert['passed'] else 'FAILED: ' + ', '.join(cert['failing'])}")
    return EXIT_OK if cert["passed"] else EXIT_FAIL


def cmd_simulate(args) -> int:
    cfg = _config(args)
    model = _model(args, cfg)
    d = _design(args, cfg, model) if args.controller == "sls" else harness.design(cfg, model)
    sign = -1.0 if cfg["push.direction"] == "negative" else 1.0
    schedule = [(k, sign * F) for k, F in cfg.push_schedule(args.force)]
    lg = harness.run_controller(args.controller, cfg, model, d, schedule)
    harness.emit_csv(lg, _p(args, f"episode_{args.controller}.csv"))
    s = harness.summarize(lg, d, [k for k, _ in schedule])
    print(f"{args.controller}: max |u| {s['max_abs_u']:.4f} m, recovery steps {s['recovery_steps']}")
    return EXIT_OK if not lg.fell else EXIT_FAIL


def _compare(args, keep_trace=False):
    cfg = _config(args)
    model = _model(args, cfg)
    d = _design(args, cfg, model)
    return cfg, model, harness.compare_controllers(cfg, model, d, args.names, args.force, keep_trace)


def cmd_compare(args) -> int:
    _, _, (report, logs) = _compare(args)
    harness.write_json(report, _p(args, "comparison.json"))
    for name, lg in logs.items():
        harness.emit_csv(lg, _p(args, f"episode_{name}.csv"))
        s = report["controllers"][name]
        print(f"{name:9s} max |u| {s['max_abs_u']:.4f}  input violations {s['input_violations']}  "
              f"recovery {s['recovery_steps']}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from . import plotting
    cfg, model, (_, logs) = _compare(args, keep_trace=True)
    for kind in args.kind or plotting.KINDS:
        plotting.emit_plot(list(logs.values()), kind, _p(args, f"{kind}.svg"), cfg=cfg, model=model)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    art = harness.run_pipeline(cfg, args.out, plots=not args.no_plots)
    cert = art.certificate
    for name, s in art.comparison["controllers"].items():
        if "skipped" in s:
            print(f"{name:9s} skipped ({s['skipped']})")
        else:
            print(f"{name:9s} max |u| {s['max_abs_u']:.4f}  recovery {s['recovery_steps']}")
    if not art.feasible:
        print(f"synthesis infeasible; binding constraint family: {art.design.infeasible_family}")
        return EXIT_INFEASIBLE
    print(f"certificate {'passed' if cert['passed'] else 'FAILED: ' + ', '.join(cert['failing'])}")
    return EXIT_OK if cert["passed"] else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="s2s-sls", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="key = value config file (defaults apply to missing keys)")
        p.add_argument("--out", required=True, help="artifact directory")
        p.set_defaults(fn=fn)
        return p

    add("gen-data", cmd_gen_data, "simulate baseline walking data")
    add("learn", cmd_learn, "fit the learned step-to-step model")
    add("synthesize", cmd_synthesize, "synthesize the SLS controller and its certificate")
    p = add("simulate", cmd_simulate, "run one push episode")
    p.add_argument("--controller", choices=harness.CONTROLLERS, default="sls")
    p.add_argument("--force", type=float, default=None, help="push force [N] (default: config)")
    for name, fn, help_ in (("compare", cmd_compare, "run identical push episodes per controller"),
                            ("plot", cmd_plot, "write SVG figures")):
        p = add(name, fn, help_)
        p.add_argument("--names", nargs="+", choices=harness.CONTROLLERS, default=list(harness.CONTROLLERS))
        p.add_argument("--force", type=float, default=None)
        if name == "plot":
            p.add_argument("--kind", nargs="+", choices=("velocity", "input", "residual"))
    p = add("pipeline", cmd_pipeline, "run every stage end to end")
    p.add_argument("--no-plots", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.fn(args)
    except sls.SynthesisInfeasible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (harness.StageError, ConfigError, OSError, ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
