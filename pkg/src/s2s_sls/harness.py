"""End-to-end experiment: data, fit, orbit, sets, synthesis, certificate, push episodes.

Each stage is a plain function so the CLI can run them one at a time from
files in an output directory, and :func:`run_pipeline` chains them.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import hlip, learn, plant, sls
from .config import ExperimentConfig
from .hlip import DiscreteState
from .sets import BoxSet, contains, minkowski_sum, mrpi_outer
from .stepping import FeedbackStepper, SlsStepper
from .textio import atomic_write_text

CONTROLLERS = ("sls", "deadbeat", "lqr")
CSV_COLUMNS = ("k", "p", "v", "u_cmd", "u_real", "u_e", "e_p", "e_v", "w_hat_p", "w_hat_v", "F_push",
               "margin_u", "margin_xp", "margin_xv", "controller")
STEPS_COLUMNS = ("episode", "k", "p", "v", "u_cmd", "u_real", "F_push")


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")


def _fmt(x) -> str:
    return "%.17g" % x


# --- stage 1: data -------------------------------------------------------------


def generate_data(cfg: ExperimentConfig) -> list[plant.PlantEpisode]:
    """Baseline H-LIP stepping from standstill at every grid velocity, with dither."""
    pc = cfg.plant()
    params = pc.hlip()
    A, B = hlip.s2s_matrices(params)
    K = hlip.deadbeat_gain(A, B)
    rng = np.random.default_rng(int(cfg["seed"]))
    episodes = []
    for v in cfg.velocity_grid():
        x_ref, u_ref = hlip.p1_orbit(params, float(v))
        ctrl = FeedbackStepper(params, K, x_ref.as_array(), u_ref, name="baseline",
                               dither=float(cfg["learn.dither"]), rng=rng)
        episodes.append(plant.run_episode(pc, ctrl, int(cfg["learn.steps"])))
    return episodes


def write_steps_csv(episodes: Sequence[plant.PlantEpisode], path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STEPS_COLUMNS)
    for i, ep in enumerate(episodes):
        if ep.fell:
            raise learn.InsufficientData(f"data episode {i} fell: {ep.fall_reason}")
        for r in ep.records:
            w.writerow([i, r.k, _fmt(r.x_pre.p), _fmt(r.x_pre.v), _fmt(r.u_cmd), _fmt(r.u_real), _fmt(r.F_push)])
    atomic_write_text(path, buf.getvalue())


def read_steps_csv(path) -> list[plant.PlantEpisode]:
    episodes: dict[int, plant.PlantEpisode] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            ep = episodes.setdefault(int(row["episode"]), plant.PlantEpisode())
            ep.records.append(plant.StepRecord(
                k=int(row["k"]), x_pre=DiscreteState(float(row["p"]), float(row["v"])),
                u_cmd=float(row["u_cmd"]), u_real=float(row["u_real"]), F_push=float(row["F_push"]),
                duration=float("nan")))
    return [episodes[i] for i in sorted(episodes)]


# --- stage 2: fit --------------------------------------------------------------


def fit_model(cfg: ExperimentConfig, episodes) -> tuple[learn.S2SModel, dict]:
    data = learn.extract_dataset(episodes, tag="baseline")
    train, held = data.split(float(cfg["learn.holdout"]), int(cfg["seed"]))
    model = learn.fit_linf(train, meta={"config_hash": cfg.digest()})
    report = {
        "n_train": len(train),
        "n_holdout": len(held),
        "dstar": model.dstar.tolist(),
        "holdout_within_dstar": learn.held_out_coverage(model, held, 1.0) if len(held) else None,
        "holdout_within_1.5dstar": learn.held_out_coverage(model, held, 1.5) if len(held) else None,
    }
    return model, report


# --- stage 3: sets and synthesis ---------------------------------------------


@dataclass
class Design:
    """Everything the runtime needs around one synthesized controller."""

    orbit: learn.OrbitSpec
    Xe: BoxSet
    Ue: BoxSet
    D: BoxSet
    Wext: BoxSet
    S0: BoxSet
    s0_factor: Optional[float]
    controller: Optional[sls.FirController] = None
    profile: Optional[sls.DisturbanceProfile] = None
    infeasible_family: Optional[str] = None

    @property
    def recovery_set(self) -> BoxSet:
        """``S0`` grown by the residual bound; the on-plant recovery target."""
        return minkowski_sum(self.S0, self.D)


def push_set(cfg: ExperimentConfig, params: hlip.HlipParams, f_max: Optional[float] = None) -> BoxSet:
    w = hlip.push_to_disturbance(float(cfg["push.f_max"] if f_max is None else f_max), params)
    direction = cfg["push.direction"]
    if direction == "positive":
        return BoxSet(np.zeros(2), w)
    if direction == "negative":
        return BoxSet(-w, np.zeros(2))
    return BoxSet(-np.abs(w), np.abs(w))


def design(cfg: ExperimentConfig, model: learn.S2SModel) -> Design:
    """Orbit, error-coordinate sets, and the SLS controller.

    With ``sets.s0 = "auto"`` the candidate ``S0`` starts at the outer
    invariant box of the deadbeat loop under the residual bound and grows
    geometrically until synthesis succeeds. If nothing is feasible the
    returned design has ``controller=None`` and names the binding family.
    """
    params = cfg.hlip()
    orbit = learn.p1_orbit(model, cfg.v_d, params.T)
    Xe, Ue = learn.error_constraint_sets(cfg.X, cfg.U, orbit)
    D = model.residual_box()
    Wext = push_set(cfg, params)
    nf = cfg.nf
    tail = int(cfg["sls.tail"])
    if cfg["sets.s0"] == "auto":
        K = hlip.deadbeat_gain(model.Abar, model.Bbar)
        base = mrpi_outer(model.Abar + model.Bbar @ K, D, inflation=float(cfg["sls.s0_inflation"]))
        factors = []
        f = 1.0
        while f <= float(cfg["sls.s0_max_factor"]) + 1e-12:
            factors.append(f)
            f *= float(cfg["sls.s0_growth"])
        candidates = [(f, base.scale(f).intersect(Xe)) for f in factors]
    else:
        lo, hi = cfg["sets.s0"]
        candidates = [(None, BoxSet(lo, hi))]
    first = None
    for factor, S0 in candidates:
        profile = sls.build_profile(S0, Wext, D, nf)
        try:
            c = sls.synthesize(model, profile, Xe, Ue, S0, cfg.weights, diagnose=False, tail=tail)
        except sls.SynthesisInfeasible:
            first = first or (factor, S0, profile)
            continue
        c.meta.update({"config_hash": cfg.digest(), "tail": tail})
        return Design(orbit, Xe, Ue, D, Wext, S0, factor, c, profile)
    factor, S0, profile = first
    try:
        sls.synthesize(model, profile, Xe, Ue, S0, cfg.weights, diagnose=True, tail=tail)
        family = None
    except sls.SynthesisInfeasible as exc:
        family = exc.family
    return Design(orbit, Xe, Ue, D, Wext, S0, factor, None, profile, family)


def design_meta(d: Design) -> dict:
    return {
        "x_star": d.orbit.x.tolist(),
        "u_star": float(d.orbit.u),
        "S0": [d.S0.lo.tolist(), d.S0.hi.tolist()],
        "Xe": [d.Xe.lo.tolist(), d.Xe.hi.tolist()],
        "Ue": [d.Ue.lo.tolist(), d.Ue.hi.tolist()],
        "D": [d.D.lo.tolist(), d.D.hi.tolist()],
        "Wext": [d.Wext.lo.tolist(), d.Wext.hi.tolist()],
        "s0_factor": d.s0_factor,
    }


def certificate(cfg: ExperimentConfig, d: Design) -> dict:
    cert = sls.theorem1_certificate(d.controller, d.S0, d.Xe, d.Ue, cfg.nf, cfg.n_push, d.profile)
    cert["config_hash"] = cfg.digest()
    cert["infeasible_family"] = d.infeasible_family
    cert["design"] = design_meta(d)
    return cert


# --- stage 4: episodes ---------------------------------------------------------


@dataclass
class EpisodeLog:
    controller: str
    k: np.ndarray
    x: np.ndarray  # (N, 2) pre-impact states
    u_cmd: np.ndarray
    u_real: np.ndarray
    u_e: np.ndarray
    e: np.ndarray
    w_hat: np.ndarray
    F_push: np.ndarray
    margin_u: np.ndarray
    margin_x: np.ndarray  # (N, 2)
    u_peak: np.ndarray
    fell: bool = False
    traces: list = field(default_factory=list)

    def __len__(self):
        return self.k.size

    @classmethod
    def empty(cls, controller: str = "") -> "EpisodeLog":
        z = np.zeros(0)
        z2 = np.zeros((0, 2))
        return cls(controller, z.astype(int), z2, z, z, z, z2, z2, z, z, z2, z)


def _box_margin(s: BoxSet, x: np.ndarray) -> np.ndarray:
    return np.minimum(s.hi - x, x - s.lo)


def make_stepper(name: str, cfg: ExperimentConfig, model: learn.S2SModel, d: Design):
    params = cfg.hlip()
    if name == "sls":
        if d.controller is None:
            raise sls.SynthesisInfeasible(d.infeasible_family)
        return SlsStepper(params, d.controller, d.orbit.x, d.orbit.u)
    if name == "deadbeat":
        K = hlip.deadbeat_gain(model.Abar, model.Bbar)
    elif name == "lqr":
        K = hlip.dlqr_gain(model.Abar, model.Bbar, np.diag(cfg["lqr.q"]), [[float(cfg["lqr.r"])]])
    else:
        raise ValueError(f"unknown controller {name!r}; choose from {CONTROLLERS}")
    return FeedbackStepper(params, K, d.orbit.x, d.orbit.u, name=name)


def run_controller(name: str, cfg: ExperimentConfig, model: learn.S2SModel, d: Design,
                   push_schedule: Sequence[tuple], n_steps: Optional[int] = None,
                   keep_trace: bool = False) -> EpisodeLog:
    stepper = make_stepper(name, cfg, model, d)
    pc = cfg.plant()
    ep = plant.run_episode(pc, stepper, int(cfg["episode.steps"]) if n_steps is None else n_steps,
                           push_schedule, n_push=cfg.n_push, keep_trace=keep_trace)
    return episode_log(name, ep, stepper.log, cfg, model, d)


def episode_log(name, ep: plant.PlantEpisode, slog: list, cfg, model, d: Design) -> EpisodeLog:
    n = len(ep.records)
    if n == 0:
        out = EpisodeLog.empty(name)
        out.fell = ep.fell
        return out
    x = np.array([r.x_pre.as_array() for r in ep.records])
    u_real = np.array([r.u_real for r in ep.records])
    e = np.array([s["e"] for s in slog])
    u_e = np.array([s["u_e"] for s in slog])
    # disturbance that produced e[k] according to the learned model
    w_hat = e.copy()
    w_hat[1:] = e[1:] - e[:-1] @ model.Abar.T - np.outer(u_e[:-1], model.Bbar[:, 0])
    return EpisodeLog(
        controller=name,
        k=np.array([r.k for r in ep.records]),
        x=x,
        u_cmd=np.array([r.u_cmd for r in ep.records]),
        u_real=u_real,
        u_e=u_e,
        e=e,
        w_hat=w_hat,
        F_push=np.array([r.F_push for r in ep.records]),
        margin_u=_box_margin(cfg.U, u_real[:, None])[:, 0],
        margin_x=_box_margin(cfg.X, x),
        u_peak=np.array([s["u_peak"] for s in slog]),
        fell=ep.fell,
        traces=ep.traces,
    )


def recovery_steps(log: EpisodeLog, target: BoxSet, push_steps: Sequence[int]) -> list:
    """For each push, steps from the pushed step until ``e`` first lies in ``target``."""
    out = []
    for kp in push_steps:
        hit = None
        for i in np.flatnonzero(log.k >= kp):
            if contains(target, log.e[i], tol=1e-12):
                hit = int(log.k[i] - kp)
                break
        out.append(hit)
    return out


def summarize(log: EpisodeLog, d: Design, push_steps: Sequence[int]) -> dict:
    return {
        "controller": log.controller,
        "steps": len(log),
        "fell": bool(log.fell),
        "max_abs_u": float(np.max(np.abs(log.u_real))) if len(log) else 0.0,
        "max_abs_u_commanded": float(np.max(log.u_peak)) if len(log) else 0.0,
        "input_violations": int(np.sum(log.margin_u < 0)),
        "state_violations": int(np.sum(np.any(log.margin_x < 0, axis=1))),
        "recovery_steps": recovery_steps(log, d.recovery_set, push_steps),
    }


def compare_controllers(cfg: ExperimentConfig, model: learn.S2SModel, d: Design,
                        names: Sequence[str] = CONTROLLERS, force: Optional[float] = None,
                        keep_trace: bool = False) -> tuple[dict, dict]:
    """Identical push episodes for each controller; returns ``(report, logs)``."""
    sign = -1.0 if cfg["push.direction"] == "negative" else 1.0
    schedule = [(k, sign * F) for k, F in cfg.push_schedule(force)]
    push_steps = [k for k, _ in schedule]
    logs, report = {}, {"config_hash": cfg.digest(), "push_schedule": [[k, F] for k, F in schedule],
                        "controllers": {}}
    for name in names:
        if name == "sls" and d.controller is None:
            report["controllers"][name] = {"controller": name, "skipped": "synthesis infeasible"}
            continue
        log = run_controller(name, cfg, model, d, schedule, keep_trace=keep_trace)
        logs[name] = log
        report["controllers"][name] = summarize(log, d, push_steps)
    return report, logs


def find_separation(cfg: ExperimentConfig, model: learn.S2SModel, d: Design, iters: int = 12) -> dict:
    """Bisect the push magnitude for the smallest force at which deadbeat leaves ``U``.

    Returns that force with the peak steps of both controllers on the
    identical episode. ``separated`` is true when deadbeat exceeds the bound
    there and SLS does not.
    """
    U = cfg.U

    def peak(name, F):
        sign = -1.0 if cfg["push.direction"] == "negative" else 1.0
        log = run_controller(name, cfg, model, d, [(k, sign * F) for k, _ in cfg.push_schedule(F)])
        return log, float(np.max(log.u_peak))

    def outside(log):
        return bool(np.any(log.u_peak > max(abs(U.lo[0]), abs(U.hi[0])) + 1e-12) or np.any(log.margin_u < 0))

    f_hi = float(cfg["push.f_max"])
    db_log, _ = peak("deadbeat", f_hi)
    if not outside(db_log):
        return {"separated": False, "reason": "deadbeat stays within U at push.f_max", "force": f_hi}
    lo, hi = 0.0, f_hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if outside(peak("deadbeat", mid)[0]):
            hi = mid
        else:
            lo = mid
    db_log, db_peak = peak("deadbeat", hi)
    sls_log, sls_peak = peak("sls", hi)
    return {
        "separated": outside(db_log) and not outside(sls_log) and not sls_log.fell,
        "force": hi,
        "deadbeat_max_abs_u": db_peak,
        "sls_max_abs_u": sls_peak,
    }


# --- outputs -------------------------------------------------------------------


def emit_csv(log: EpisodeLog, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for i in range(len(log)):
        w.writerow([
            int(log.k[i]), _fmt(log.x[i, 0]), _fmt(log.x[i, 1]), _fmt(log.u_cmd[i]), _fmt(log.u_real[i]),
            _fmt(log.u_e[i]), _fmt(log.e[i, 0]), _fmt(log.e[i, 1]), _fmt(log.w_hat[i, 0]), _fmt(log.w_hat[i, 1]),
            _fmt(log.F_push[i]), _fmt(log.margin_u[i]), _fmt(log.margin_x[i, 0]), _fmt(log.margin_x[i, 1]),
            log.controller,
        ])
    atomic_write_text(path, buf.getvalue())


def write_json(obj, path) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def sha256_file(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


# --- pipeline ------------------------------------------------------------------


@dataclass
class Artifacts:
    out_dir: str
    model: Optional[learn.S2SModel] = None
    design: Optional[Design] = None
    certificate: Optional[dict] = None
    comparison: Optional[dict] = None
    fit_report: Optional[dict] = None
    logs: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.design is not None and self.design.controller is not None


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except sls.SynthesisInfeasible:
        raise
    except Exception as exc:  # tag every failure with the stage that raised it
        raise StageError(name, exc) from exc


def run_pipeline(cfg: ExperimentConfig, out_dir, plots: bool = True) -> Artifacts:
    """Data, fit, design, certificate, push episodes, and plots, all under ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    art = Artifacts(str(out_dir))
    path = lambda name: os.path.join(out_dir, name)  # noqa: E731
    atomic_write_text(path("config.txt"), cfg.to_text())
    art.files["config"] = path("config.txt")

    episodes = _stage("gen-data", generate_data, cfg)
    _stage("gen-data", write_steps_csv, episodes, path("steps.csv"))
    art.files["steps"] = path("steps.csv")

    art.model, art.fit_report = _stage("learn", fit_model, cfg, episodes)
    art.model.save(path("model.txt"))
    write_json(art.fit_report, path("fit.json"))
    art.files.update(model=path("model.txt"), fit=path("fit.json"))

    art.design = _stage("synthesize", design, cfg, art.model)
    art.certificate = _stage("synthesize", certificate, cfg, art.design)
    write_json(art.certificate, path("certificate.json"))
    art.files["certificate"] = path("certificate.json")
    if art.design.controller is not None:
        art.design.controller.meta.update(design_meta(art.design))
        art.design.controller.save(path("controller.txt"))
        art.files["controller"] = path("controller.txt")

    names = CONTROLLERS if art.feasible else tuple(n for n in CONTROLLERS if n != "sls")
    art.comparison, art.logs = _stage("simulate", compare_controllers, cfg, art.model, art.design, names,
                                      keep_trace=plots)
    write_json(art.comparison, path("comparison.json"))
    art.files["comparison"] = path("comparison.json")
    for name, log in art.logs.items():
        emit_csv(log, path(f"episode_{name}.csv"))
        art.files[f"episode_{name}"] = path(f"episode_{name}.csv")

    if plots:
        from . import plotting
        for kind in plotting.KINDS:
            p = path(f"{kind}.svg")
            _stage("plot", plotting.emit_plot, list(art.logs.values()), kind, p, cfg=cfg, model=art.model)
            art.files[kind] = p
    write_manifest(cfg, art.files, path("manifest.json"))
    return art


def write_manifest(cfg: ExperimentConfig, files: dict, path) -> None:
    write_json({
        "config_hash": cfg.digest(),
        "artifacts": {k: {"file": os.path.basename(v), "sha256": sha256_file(v)} for k, v in sorted(files.items())},
    }, path)


def load_design(cfg: ExperimentConfig, model: learn.S2SModel, controller_path) -> Design:
    """Rebuild a :class:`Design` from a saved controller file."""
    c = sls.FirController.load(controller_path)
    m = c.meta
    box = lambda k: BoxSet(*m[k])  # noqa: E731
    orbit = learn.p1_orbit(model, cfg.v_d, cfg.hlip().T)
    S0, D, Wext = box("S0"), box("D"), box("Wext")
    return Design(orbit, box("Xe"), box("Ue"), D, Wext, S0, m.get("s0_factor"), c,
                  sls.build_profile(S0, Wext, D, c.nf))
