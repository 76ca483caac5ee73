import warnings

import numpy as np
import pytest

from s2s_sls import hlip, plant
from s2s_sls.plant import PlantConfig, PlantState

BASE = PlantConfig()
IDEAL = plant.with_limits(BASE)


def const(u):
    return lambda x, t: u


def one_step(cfg, p, v, u, F=0.0):
    s = plant.impact_map(plant.pre_impact_state(p, v, cfg), u, cfg)
    _, rec, _ = plant.integrate_step(s, const(0.0), F, cfg)
    return rec.x_pre.as_array()


# --- swing foot -------------------------------------------------------------------


def test_bezier_endpoints_and_midpoint():
    assert plant.bezier_transition(0.0, 0.4, 5) == 0.0
    assert plant.bezier_transition(0.4, 0.4, 5) == 1.0
    assert plant.bezier_transition(0.2, 0.4, 5) == pytest.approx(0.5, abs=1e-15)


def test_bezier_flat_ends():
    T, h = 0.4, 1e-8
    for deg in (3, 5, 7):
        assert abs(plant.bezier_transition(h, T, deg)) / h <= 1e-6
        assert abs(1.0 - plant.bezier_transition(T - h, T, deg)) / h <= 1e-6


def test_bezier_monotone():
    ts = np.linspace(0, 0.4, 401)
    c = [plant.bezier_transition(t, 0.4, 6) for t in ts]
    assert np.all(np.diff(c) >= -1e-15)


def test_bezier_clamps_and_flags():
    with pytest.warns(plant.SwingPhaseClamped):
        assert plant.bezier_transition(0.5, 0.4, 5) == 1.0
    with pytest.warns(plant.SwingPhaseClamped):
        assert plant.bezier_transition(-0.1, 0.4, 5) == 0.0


def test_desired_swing_examples():
    assert plant.desired_swing_x(-0.3, 0.4, 0.0, BASE) == -0.3
    assert plant.desired_swing_x(-0.3, 0.4, BASE.T, BASE) == 0.4
    assert plant.desired_swing_x(-0.3, 0.4, BASE.T / 2, BASE) == pytest.approx(0.05, abs=1e-15)


# --- config ---------------------------------------------------------------------


@pytest.mark.parametrize("kw", [dict(dt=0.1), dict(impact_loss=0.0), dict(impact_loss=1.2),
                                dict(bezier_degree=2), dict(dt=0.4 / 33.5)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        PlantConfig(**kw)


# --- one step -----------------------------------------------------------------------


def test_rest_is_preserved():
    cfg = PlantConfig(nl_eps=0.0, impact_loss=1.0)
    _, rec, _ = plant.integrate_step(PlantState.standstill(cfg), const(0.0), 0.0, cfg)
    assert rec.x_pre.as_array().tolist() == [0.0, 0.0]


def test_requires_post_impact_state():
    with pytest.raises(ValueError):
        plant.integrate_step(plant.pre_impact_state(0.0, 0.0, BASE), const(0.0), 0.0, BASE)


def test_ideal_plant_matches_hlip():
    rng = np.random.default_rng(0)
    A, B = hlip.s2s_matrices(IDEAL.hlip())
    worst = 0.0
    for _ in range(100):
        x0 = rng.uniform([-0.3, -1.0], [0.3, 1.0])
        u = rng.uniform(-0.7, 0.7)
        worst = max(worst, np.max(np.abs(one_step(IDEAL, *x0, u) - (A @ x0 + B[:, 0] * u))))
    assert worst <= 1e-6


@pytest.mark.parametrize("cfg", [IDEAL, PlantConfig(nl_eps=0.0, impact_loss=1.0)])
def test_push_matches_disturbance_map(cfg):
    x0, u = np.array([0.1, 0.6]), 0.35
    shift = one_step(cfg, *x0, u, F=50.0) - one_step(cfg, *x0, u)
    np.testing.assert_allclose(shift, hlip.push_to_disturbance(50.0, cfg.hlip()), atol=1e-6)


def test_default_plant_is_not_hlip():
    A, B = hlip.s2s_matrices(BASE.hlip())
    x0, u = np.array([0.2, 1.2]), 0.4
    assert np.max(np.abs(one_step(BASE, *x0, u) - (A @ x0 + B[:, 0] * u))) > 1e-4


def test_orbital_energy_conserved():
    s = plant.impact_map(plant.pre_impact_state(0.25, 1.1, IDEAL), 0.4, IDEAL)
    _, _, tr = plant.integrate_step(s, const(0.4), 0.0, IDEAL, keep_trace=True)
    lam2 = IDEAL.hlip().lam ** 2
    E = tr.vx**2 - lam2 * tr.x**2
    assert np.max(np.abs(E - E[0])) <= 1e-6 * abs(E[0])


def test_rk4_fourth_order():
    start = PlantState(x=-0.2, z=0.69, vx=1.0, vz=0.05, swing_x=-0.4, t_phase=0.0)

    def pre(n):
        cfg = PlantConfig(dt=0.4 / n, nl_eps=0.05)
        _, rec, _ = plant.integrate_step(start, const(0.4), 20.0, cfg)
        return rec.x_pre.as_array()

    ref = pre(2560)
    ns = np.array([20, 40, 80, 160])
    err = np.array([np.max(np.abs(pre(n) - ref)) for n in ns])
    slope = np.polyfit(np.log(0.4 / ns), np.log(err), 1)[0]
    assert slope == pytest.approx(4.0, abs=0.3)


def test_realized_step_equals_command():
    ep = plant.run_episode(BASE, lambda x, t: 0.3 + 0.1 * x.v, 6)
    for r in ep.records:
        assert abs(r.u_real - r.u_cmd) <= 1e-6


def test_fall_detection():
    cfg = PlantConfig(kp_z=0.0, kd_z=0.0, nl_eps=0.0)
    s = PlantState(x=0.0, z=cfg.z0, vx=0.0, vz=-20.0, swing_x=0.0, t_phase=0.0)
    with pytest.raises(plant.PlantFall):
        plant.integrate_step(s, const(0.0), 0.0, cfg)
    ep = plant.run_episode(cfg, const(0.0), 5, initial=s)
    assert ep.fell and ep.records == [] and "height" in ep.fall_reason


# --- episodes -------------------------------------------------------------------------


def test_zero_steps():
    ep = plant.run_episode(BASE, const(0.0), 0)
    assert ep.records == [] and not ep.fell


def test_open_loop_matches_hlip_iteration():
    cfg = PlantConfig(nl_eps=0.0, impact_loss=1.0)
    ep = plant.run_episode(cfg, const(0.1), 5)
    A, B = hlip.s2s_matrices(cfg.hlip())
    x = np.zeros(2)
    for r in ep.records:
        np.testing.assert_allclose(r.x_pre.as_array(), x, atol=1e-6, rtol=1e-9)
        x = A @ x + B[:, 0] * 0.1


def test_push_schedule_guards():
    with pytest.raises(plant.PushScheduleError):
        plant.run_episode(BASE, const(0.0), 10, [(2, 10.0), (5, 10.0)], n_push=8)
    with pytest.raises(plant.PushScheduleError):
        plant.run_episode(BASE, const(0.0), 10, [(0, 10.0)])


def test_push_recorded_on_its_step():
    ep = plant.run_episode(BASE, const(0.0), 3, [(1, 30.0)])
    assert [r.F_push for r in ep.records] == [0.0, 30.0, 0.0]


def test_on_impact_called_each_step():
    class Ctrl:
        def __init__(self):
            self.seen = []

        def __call__(self, x, t):
            return 0.0

        def on_impact(self, rec):
            self.seen.append(rec.k)

    c = Ctrl()
    plant.run_episode(BASE, c, 4)
    assert c.seen == [0, 1, 2, 3]


def test_deterministic():
    def run():
        ep = plant.run_episode(BASE, lambda x, t: 0.2 + 0.3 * x.p, 5, [(2, 25.0)], keep_trace=True)
        return [(r.x_pre.p, r.x_pre.v, r.u_real) for r in ep.records], np.concatenate([t.x for t in ep.traces])

    a, ta = run()
    b, tb = run()
    assert a == b and ta.tobytes() == tb.tobytes()


def test_no_warnings_in_normal_run():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        plant.run_episode(BASE, const(0.2), 3)
