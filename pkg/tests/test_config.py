import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from s2s_sls import textio
from s2s_sls.config import CASSIE_STYLE, DEFAULTS, ConfigError, ExperimentConfig


def test_defaults_are_amber_style():
    cfg = ExperimentConfig()
    assert (cfg["plant.z0"], cfg["plant.T"], cfg.v_d) == (0.7, 0.4, 1.0)
    assert cfg.U.lo[0] == -0.7 and cfg.U.hi[0] == 0.7
    assert cfg.nf == 4 and cfg.n_push >= cfg.nf and cfg.push_force == 50.0


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("plant.z00 = 0.7\n")


def test_partial_file_keeps_defaults():
    cfg = ExperimentConfig.from_text("# comment\nplant.z0 = 0.9\nsls.q = [2.0, 1.0]\n")
    assert cfg["plant.z0"] == 0.9 and cfg["plant.T"] == DEFAULTS["plant.T"]
    assert cfg.weights == ((2.0, 1.0), 1.0)


def test_text_round_trip_and_digest():
    cfg = ExperimentConfig(dict(CASSIE_STYLE))
    again = ExperimentConfig.from_text(cfg.to_text())
    assert again.values == cfg.values and again.digest() == cfg.digest()
    assert cfg.digest() != ExperimentConfig().digest()
    assert len(cfg.digest()) == 16


def test_load_from_file(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("gait.v_d = 0.5\n")
    assert ExperimentConfig.load(p).v_d == 0.5


def test_replace_uses_double_underscore():
    cfg = ExperimentConfig().replace(push__f_max=10.0)
    assert cfg["push.f_max"] == 10.0


@pytest.mark.parametrize("changes", [
    dict(sls__nf=9),                      # N_F > N_push
    dict(sls__nf=1),
    dict(push__f_max=-1.0),
    dict(push__direction="sideways"),
    dict(push__force=60.0),               # above f_max
    dict(push__steps=[2]),                # before N_F settling steps
    dict(push__steps=[10, 12]),           # closer than N_push
    dict(push__steps=[30]),               # after the episode
    dict(sets__s0="big"),
    dict(learn__holdout=1.0),
    dict(sls__s0_growth=1.0),
    dict(plant__z0=-1.0),
    dict(sets__u=[1.0, -1.0]),
])
def test_validation(changes):
    with pytest.raises(ConfigError):
        ExperimentConfig().replace(**changes)


def test_push_schedule_and_grid():
    cfg = ExperimentConfig().replace(push__steps=[6, 16], episode__steps=30)
    assert cfg.push_schedule() == [(6, 50.0), (16, 50.0)]
    assert cfg.push_schedule(20.0) == [(6, 20.0), (16, 20.0)]
    g = cfg.velocity_grid()
    assert g[0] == -1.0 and g[-1] == 1.0 and len(g) == 9


def test_plant_view():
    pc = ExperimentConfig().plant()
    assert pc.dt == pytest.approx(0.4 / 400) and pc.n_substeps == 400


# --- text format -------------------------------------------------------------------


def test_kv_parse_errors():
    with pytest.raises(ValueError):
        textio.loads_kv("novalue\n")
    with pytest.raises(ValueError):
        textio.loads_kv("a = 1\na = 2\n")
    with pytest.raises(ValueError):
        textio.loads_kv("a = os.system('x')\n")


def test_kv_rejects_nonfinite():
    with pytest.raises(ValueError):
        textio.format_value(float("nan"))


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=8),
       st.integers(-10**12, 10**12), st.text(max_size=20), st.booleans())
def test_kv_round_trip_bit_exact(xs, i, s, b):
    items = {"x": xs, "i": i, "s": s, "b": b, "arr": np.array(xs), "none": None}
    back = textio.loads_kv(textio.dumps_kv(items, header="h1\nh2"))
    assert np.array(back["x"]).tobytes() == np.array(xs, dtype=float).tobytes()
    assert back["arr"] == back["x"]
    assert back["i"] == i and back["s"] == s and back["b"] is b and back["none"] is None


def test_atomic_write_leaves_no_temp(tmp_path):
    p = tmp_path / "sub" / "f.txt"
    textio.atomic_write_text(p, "a\nb\n")
    assert p.read_bytes() == b"a\nb\n"
    assert [q.name for q in p.parent.iterdir()] == ["f.txt"]
