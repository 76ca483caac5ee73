import csv
import json
import os

import numpy as np
import pytest

from s2s_sls import harness, learn, plant, sls
from s2s_sls.config import CASSIE_STYLE, ExperimentConfig
from s2s_sls.sets import BoxSet, contains


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# --- CSV ----------------------------------------------------------------------------


def test_empty_log_header_only(tmp_path):
    p = tmp_path / "e.csv"
    harness.emit_csv(harness.EpisodeLog.empty("sls"), p)
    assert p.read_bytes() == (",".join(harness.CSV_COLUMNS) + "\n").encode()


def test_csv_layout_and_round_trip(amber):
    log = amber.logs["sls"]
    path = amber.files["episode_sls"]
    raw = open(path, "rb").read()
    assert b"\r" not in raw
    rows = read_csv(path)
    assert tuple(rows[0]) == harness.CSV_COLUMNS and len(harness.CSV_COLUMNS) == 15
    assert all(len(r) == 15 for r in rows)
    assert len(rows) == len(log) + 1
    body = rows[1:]
    col = {name: i for i, name in enumerate(rows[0])}
    np.testing.assert_array_equal([float(r[col["v"]]) for r in body], log.x[:, 1])
    np.testing.assert_array_equal([float(r[col["w_hat_p"]]) for r in body], log.w_hat[:, 0])
    np.testing.assert_array_equal([float(r[col["margin_u"]]) for r in body], log.margin_u)
    assert [int(r[col["k"]]) for r in body] == list(range(len(log)))
    assert {r[col["controller"]] for r in body} == {"sls"}


def test_steps_csv_round_trip(tmp_path):
    cfg = ExperimentConfig().replace(learn__n_v=2, learn__steps=6)
    eps = harness.generate_data(cfg)
    p = tmp_path / "steps.csv"
    harness.write_steps_csv(eps, p)
    back = harness.read_steps_csv(p)
    assert len(back) == 2
    for a, b in zip(eps, back):
        assert [(r.k, r.x_pre, r.u_cmd, r.u_real, r.F_push) for r in a.records] == \
               [(r.k, r.x_pre, r.u_cmd, r.u_real, r.F_push) for r in b.records]


def test_margins_consistent_with_states(amber, amber_cfg):
    log = amber.logs["deadbeat"]
    X, U = amber_cfg.X, amber_cfg.U
    np.testing.assert_allclose(log.margin_x, np.minimum(X.hi - log.x, log.x - X.lo))
    np.testing.assert_allclose(log.margin_u, np.minimum(U.hi[0] - log.u_real, log.u_real - U.lo[0]))
    np.testing.assert_allclose(log.e, log.x - amber.design.orbit.x)


# --- pipeline artifacts ----------------------------------------------------------------


def test_amber_pipeline_certificate(amber):
    assert amber.feasible
    assert amber.certificate["passed"], amber.certificate["failing"]
    assert set(amber.files) >= {"config", "steps", "model", "fit", "certificate", "controller", "comparison",
                                "episode_sls", "episode_deadbeat", "episode_lqr", "velocity", "input", "residual"}


def test_config_hash_everywhere(amber, amber_cfg):
    h = amber_cfg.digest()
    out = amber.out_dir
    assert learn.S2SModel.load(os.path.join(out, "model.txt")).meta["config_hash"] == h
    assert sls.FirController.load(os.path.join(out, "controller.txt")).meta["config_hash"] == h
    for name in ("certificate.json", "comparison.json", "manifest.json"):
        with open(os.path.join(out, name)) as fh:
            assert json.load(fh)["config_hash"] == h
    assert ExperimentConfig.load(os.path.join(out, "config.txt")).digest() == h


def test_manifest_hashes(amber):
    with open(os.path.join(amber.out_dir, "manifest.json")) as fh:
        man = json.load(fh)
    for key, entry in man["artifacts"].items():
        assert harness.sha256_file(os.path.join(amber.out_dir, entry["file"])) == entry["sha256"], key


def test_identical_push_schedules(amber):
    F = [lg.F_push for lg in amber.logs.values()]
    for f in F[1:]:
        assert f.tobytes() == F[0].tobytes()
    assert np.count_nonzero(F[0]) == 1


def test_sls_recovers_within_horizon(amber, amber_cfg):
    s = amber.comparison["controllers"]["sls"]
    assert s["recovery_steps"][0] is not None and s["recovery_steps"][0] <= amber_cfg.nf
    assert s["input_violations"] == 0 and not s["fell"]


def test_load_design_matches(amber, amber_cfg):
    d = harness.load_design(amber_cfg, amber.model, amber.files["controller"])
    for name in ("S0", "Xe", "Ue", "D", "Wext"):
        a, b = getattr(d, name), getattr(amber.design, name)
        np.testing.assert_array_equal(a.lo, b.lo)
        np.testing.assert_array_equal(a.hi, b.hi)
    assert d.controller.phi_u.tobytes() == amber.design.controller.phi_u.tobytes()


def test_zero_push_steady_state(amber, amber_cfg):
    R = amber.design.recovery_set
    for name in harness.CONTROLLERS:
        log = harness.run_controller(name, amber_cfg, amber.model, amber.design, [], n_steps=100)
        assert not log.fell and len(log) == 100
        inside = [contains(R, e, tol=1e-12) for e in log.e]
        first = inside.index(True)
        assert first <= amber_cfg.nf and all(inside[first:]), name


# --- recovery bookkeeping --------------------------------------------------------------


def test_recovery_steps_counts_from_push():
    log = harness.EpisodeLog.empty("x")
    log.k = np.arange(6)
    log.e = np.array([[0, 0], [0, 0], [5, 0], [2, 0], [0.1, 0], [0, 0]], float)
    target = BoxSet.symmetric([0.5, 0.5])
    assert harness.recovery_steps(log, target, [2]) == [2]
    assert harness.recovery_steps(log, BoxSet.symmetric([0.01, 0.01]), [2, 4]) == [3, 1]
    log.e[5] = [9, 0]
    assert harness.recovery_steps(log, BoxSet.symmetric([0.01, 0.01]), [5]) == [None]


def test_unknown_controller(amber, amber_cfg):
    with pytest.raises(ValueError):
        harness.make_stepper("pid", amber_cfg, amber.model, amber.design)


def test_stage_error_is_tagged(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise ArithmeticError("bad fit")

    monkeypatch.setattr(harness, "fit_model", boom)
    cfg = ExperimentConfig().replace(learn__n_v=2, learn__steps=6)
    with pytest.raises(harness.StageError) as exc:
        harness.run_pipeline(cfg, tmp_path, plots=False)
    assert exc.value.stage == "learn" and "bad fit" in str(exc.value)


def test_fallen_data_episode_rejected(tmp_path):
    ep = plant.PlantEpisode(fell=True, fall_reason="test")
    with pytest.raises(learn.InsufficientData):
        harness.write_steps_csv([ep], tmp_path / "s.csv")


# --- other configurations ------------------------------------------------------------


def test_zero_push_force_pipeline(tmp_path):
    cfg = ExperimentConfig().replace(push__f_max=0.0)
    art = harness.run_pipeline(cfg, tmp_path, plots=False)
    assert art.feasible and art.certificate["passed"]
    np.testing.assert_array_equal(art.design.Wext.hi, [0.0, 0.0])
    assert art.design.profile[1] == art.design.D


def test_cassie_style_pipeline(tmp_path):
    cfg = ExperimentConfig(dict(CASSIE_STYLE))
    art = harness.run_pipeline(cfg, tmp_path, plots=False)
    assert art.feasible and art.certificate["passed"]
    rep = art.comparison["controllers"]
    assert not rep["sls"]["fell"] and rep["sls"]["input_violations"] == 0


def test_infeasible_design_reports_family():
    cfg = ExperimentConfig().replace(sets__u=[-0.45, 0.45], sls__s0_max_factor=2.0)
    eps = harness.generate_data(cfg.replace(sets__u=[-0.7, 0.7]))
    model, _ = harness.fit_model(cfg, eps)
    d = harness.design(cfg, model)
    assert d.controller is None and d.infeasible_family in sls.FAMILIES
    cert = harness.certificate(cfg, d)
    assert not cert["passed"] and "synthesis_feasible" in cert["failing"]
