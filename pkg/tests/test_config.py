import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slbalance import config as cfgmod
from slbalance.errors import ConfigError
from slbalance.sim import SimConfig, TrialScenario, config_hash


def test_defaults_build_default_config():
    cfg, sc = cfgmod.build(cfgmod.defaults(), "frontal")
    ref = SimConfig()
    for name in ("control_rate", "obs_rate", "noise_sigma", "seed", "anthro", "planner", "noise",
                 "home_pose", "hip_width", "hip_height", "init_vel_var"):
        assert getattr(cfg, name) == getattr(ref, name), name
    for name in ("Q0", "R0", "W"):
        assert np.array_equal(getattr(cfg.mpc, name), getattr(ref.mpc, name))
    assert np.array_equal(cfg.arm.joint_limits, ref.arm.joint_limits)
    assert sc == TrialScenario("frontal")


def test_every_key_documented():
    d = cfgmod.defaults()
    assert set(d) == set(cfgmod.SCHEMA)
    for key, unit, default, doc in cfgmod.schema_table():
        assert unit and doc and default


def test_parse_text_and_comments():
    text = "# header\nmpc.horizon = 0.4   # shorter\n\nsim.home_pose = 0, -1.5, 0, -1.5\n"
    v = cfgmod.parse_text(text)
    assert v == {"mpc.horizon": 0.4, "sim.home_pose": (0.0, -1.5, 0.0, -1.5)}


def test_unknown_key_location():
    with pytest.raises(ConfigError) as exc:
        cfgmod.parse_text("mpc.horizon = 0.5\n  mpc.qq = 1\n", "x.cfg")
    e = exc.value
    assert (e.line, e.column, e.source) == (2, 3, "x.cfg")
    assert "mpc.qq" in str(e) and str(e).startswith("x.cfg:2:3:")


def test_bad_value_location_and_unit():
    with pytest.raises(ConfigError) as exc:
        cfgmod.parse_text("mpc.horizon = 0.5\nmpc.k0 = abc\n", "x.cfg")
    assert (exc.value.line, exc.value.column) == (2, 10)
    assert "[-]" in str(exc.value)


@pytest.mark.parametrize("text, fragment", [
    ("mpc.n_steps = 2.5", "integer"),
    ("sim.home_pose = 1, 2", "expected 4"),
    ("mpc.horizon = 1, 2", "single value"),
    ("mpc.horizon = inf", "finite"),
    ("mpc.horizon =", "missing value"),
    ("mpc.horizon 0.5", "key = value"),
    ("mpc.horizon = 1\nmpc.horizon = 2", "duplicate"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        cfgmod.parse_text(text)


def test_overrides_and_resolution_order(tmp_path):
    f = tmp_path / "a.cfg"
    f.write_text("mpc.k0 = 2\nsim.seed = 3\n")
    v = cfgmod.resolve(str(f), ["mpc.k0=8"], seed=5)
    assert v["mpc.k0"] == 8.0 and v["sim.seed"] == 5
    assert cfgmod.resolve(str(f))["sim.seed"] == 3


def test_override_error_names_position():
    with pytest.raises(ConfigError) as exc:
        cfgmod.parse_overrides(["mpc.k0=2", "mpc.qq=1"])
    assert str(exc.value) == "--set:2:1: unknown config key 'mpc.qq'"


def test_domain_errors_become_config_errors():
    v = cfgmod.with_value(cfgmod.defaults(), "mpc.horizon", -1.0)
    with pytest.raises(ConfigError):
        cfgmod.build(v)
    with pytest.raises(ConfigError):
        cfgmod.with_value(v, "nope", 1)


def test_config_text_roundtrip():
    v = cfgmod.defaults()
    v["mpc.k0"] = 3.25
    assert cfgmod.parse_text(cfgmod.config_text(v)) == v


@given(st.floats(0.01, 10.0), st.integers(0, 10 ** 6))
def test_hash_depends_on_values(k0, seed):
    a = cfgmod.with_value(cfgmod.defaults(), "mpc.k0", k0)
    a["sim.seed"] = seed
    cfg, _ = cfgmod.build(a)
    again, _ = cfgmod.build(cfgmod.parse_text(cfgmod.config_text(a)))
    assert config_hash(cfg) == config_hash(again)
    b = dict(a, **{"mpc.k0": k0 * 1.5})
    assert config_hash(cfgmod.build(b)[0]) != config_hash(cfg)
