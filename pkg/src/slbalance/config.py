"""Flat key = value configuration with dotted keys.

File syntax, one entry per line::

    # comment
    mpc.horizon = 0.5        # trailing comments are allowed
    sim.home_pose = 0, -1.5708, 0, -1.5708

Every key is declared in SCHEMA with its unit and meaning; unknown keys,
malformed values and duplicate keys raise ConfigError carrying the 1-based
line and column of the offending text. ``--set key=value`` overrides use the
same rules (column counted inside the override string).
"""
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, InvalidInputError
from .estimator import NoiseModel
from .model import AnthropometricParams, SlArmModel, make_transform
from .mpc import NU, JointBounds, MpcConfig, default_tracking_weight
from .planner import PlannerWeights
from .sim import SimConfig, TrialScenario, format_value, values_hash


@dataclass(frozen=True)
class Key:
    name: str
    kind: type  # float, int or tuple (of floats)
    unit: str
    doc: str
    size: int = 0  # tuple length, 0 for scalars


def _k(name, kind, unit, doc, size=0):
    return Key(name, kind, unit, doc, size)


_ARM = SlArmModel()
_SIM = SimConfig(mpc=MpcConfig(JointBounds.from_arms((_ARM, _ARM.mirrored()))))
_Q = np.diag(default_tracking_weight())

SCHEMA = {k.name: k for k in [
    _k("scenario.treadmill_speed", float, "m/s", "speed of the receding button the trunk follows"),
    _k("scenario.duration", float, "s", "trial length"),
    _k("sim.control_rate", int, "Hz", "control loop rate (multiple of sim.obs_rate)"),
    _k("sim.obs_rate", int, "Hz", "marker observation rate"),
    _k("sim.noise_sigma", float, "m", "marker noise standard deviation"),
    _k("sim.seed", int, "-", "random seed of the marker noise"),
    _k("sim.hip_width", float, "m", "distance between the hip joints"),
    _k("sim.hip_height", float, "m", "hip joint height above ground"),
    _k("sim.home_pose", tuple, "rad", "left arm joints at rest (right arm mirrored)", 4),
    _k("sim.init_vel_var", float, "m^2/s^2", "initial estimator velocity variance"),
    _k("anthro.body_mass", float, "kg", "body mass"),
    _k("anthro.body_height", float, "m", "body height"),
    _k("anthro.trunk_mass_fraction", float, "-", "trunk (head, arms, torso) share of body mass"),
    _k("anthro.legs_mass_fraction", float, "-", "legs share of body mass"),
    _k("anthro.trunk_com_ratio", float, "-", "trunk CoM position from hip, fraction of trunk length"),
    _k("anthro.trunk_length", float, "m", "hip to trunk top (button contact)"),
    _k("anthro.legs_com_ratio", float, "-", "legs CoM height, fraction of hip height"),
    _k("anthro.backpack_mass", float, "kg", "backpack mass without the arms"),
    _k("anthro.backpack_com_offset", tuple, "m", "backpack CoM in the trunk frame", 3),
    _k("arm.mount_offset", tuple, "m", "left arm base in the trunk frame", 3),
    _k("arm.link_lengths", tuple, "m", "upper arm, forearm", 2),
    _k("arm.link_masses", tuple, "kg", "upper arm, forearm", 2),
    _k("arm.joint_limits", tuple, "rad", "lower, upper for joints 1..4", 8),
    _k("arm.velocity_limits", tuple, "rad/s", "per joint", 4),
    _k("arm.acceleration_limits", tuple, "rad/s^2", "per joint", 4),
    _k("planner.gamma", float, "1/m^2", "weight of the CoM-SUP shift in the planner cost"),
    _k("planner.zeta", float, "s^2/m^2", "weight of the CoM-velocity effort"),
    _k("planner.step", float, "s", "look-ahead of the one-step CoM prediction"),
    _k("planner.v_max", float, "m/s", "cap on the commanded SL-CoM velocity"),
    _k("mpc.horizon", float, "s", "prediction horizon"),
    _k("mpc.n_steps", int, "-", "horizon steps"),
    _k("mpc.q_pos", float, "1/m^2", "tracking weight of elbow/wrist positions"),
    _k("mpc.q_vel", float, "s^2/m^2", "tracking weight of elbow/wrist velocities"),
    _k("mpc.r0", float, "s^4/rad^2", "input weight (times identity)"),
    _k("mpc.w", float, "s^6/rad^2", "input-rate weight (times identity)"),
    _k("mpc.k0", float, "-", "Kalman-gain norm at which tracking weights vanish"),
    _k("mpc.epsilon_q", float, "-", "floor of the tracking-weight factor"),
    _k("mpc.tol", float, "-", "QP residual tolerance"),
    _k("mpc.max_iters_cold", int, "-", "QP iteration cap without warm start"),
    _k("mpc.max_iters_warm", int, "-", "QP iteration cap with warm start"),
    _k("mpc.rho", float, "-", "initial QP penalty"),
    _k("noise.q_com", float, "m^2/s^3", "process intensity, system CoM"),
    _k("noise.q_sup", float, "m^2/s^3", "process intensity, support center"),
    _k("noise.q_hcom", float, "m^2/s^3", "process intensity, human CoM"),
    _k("noise.q_sl", float, "m^2/s^3", "process intensity, arm points"),
    _k("noise.measurement_var", float, "m^2", "assumed marker variance"),
]}


def defaults():
    """Every key at its default value."""
    a, an, pl, mp, nz = _ARM, _SIM.anthro, _SIM.planner, _SIM.mpc, _SIM.noise
    sc = TrialScenario()
    return {
        "scenario.treadmill_speed": sc.treadmill_speed,
        "scenario.duration": sc.duration,
        "sim.control_rate": _SIM.control_rate,
        "sim.obs_rate": _SIM.obs_rate,
        "sim.noise_sigma": _SIM.noise_sigma,
        "sim.seed": _SIM.seed,
        "sim.hip_width": _SIM.hip_width,
        "sim.hip_height": _SIM.hip_height,
        "sim.home_pose": tuple(float(v) for v in _SIM.home_pose),
        "sim.init_vel_var": _SIM.init_vel_var,
        "anthro.body_mass": an.body_mass,
        "anthro.body_height": an.body_height,
        "anthro.trunk_mass_fraction": an.trunk_mass_fraction,
        "anthro.legs_mass_fraction": an.legs_mass_fraction,
        "anthro.trunk_com_ratio": an.trunk_com_ratio,
        "anthro.trunk_length": an.trunk_length,
        "anthro.legs_com_ratio": an.legs_com_ratio,
        "anthro.backpack_mass": an.backpack_mass,
        "anthro.backpack_com_offset": tuple(an.backpack_com_offset),
        "arm.mount_offset": tuple(float(v) for v in a.mount_pose[:3, 3]),
        "arm.link_lengths": a.link_lengths,
        "arm.link_masses": a.link_masses,
        "arm.joint_limits": tuple(float(v) for v in a.joint_limits.ravel()),
        "arm.velocity_limits": tuple(float(v) for v in a.velocity_limits),
        "arm.acceleration_limits": tuple(float(v) for v in a.acceleration_limits),
        "planner.gamma": pl.gamma,
        "planner.zeta": pl.zeta,
        "planner.step": pl.step,
        "planner.v_max": pl.v_max,
        "mpc.horizon": mp.horizon,
        "mpc.n_steps": mp.n_steps,
        "mpc.q_pos": float(_Q[0]),
        "mpc.q_vel": float(_Q[3]),
        "mpc.r0": float(mp.R0[0, 0]),
        "mpc.w": float(mp.W[0, 0]),
        "mpc.k0": mp.k0,
        "mpc.epsilon_q": mp.epsilon_q,
        "mpc.tol": mp.tol,
        "mpc.max_iters_cold": mp.max_iters_cold,
        "mpc.max_iters_warm": mp.max_iters_warm,
        "mpc.rho": mp.rho,
        "noise.q_com": nz.q_com,
        "noise.q_sup": nz.q_sup,
        "noise.q_hcom": nz.q_hcom,
        "noise.q_sl": nz.q_sl,
        "noise.measurement_var": nz.measurement_var,
    }


def parse_value(key, text, line=None, column=None, source=None):
    spec = SCHEMA[key]
    items = [t.strip() for t in text.split(",")]
    try:
        if spec.kind is tuple:
            if len(items) != spec.size:
                raise ValueError(f"expected {spec.size} comma-separated values")
            vals = tuple(float(t) for t in items)
        elif len(items) != 1:
            raise ValueError("expected a single value")
        elif spec.kind is int:
            f = float(items[0])
            if f != int(f):
                raise ValueError("expected an integer")
            vals = int(f)
        else:
            vals = float(items[0])
    except ValueError as exc:
        msg = str(exc) if "expected" in str(exc) else f"cannot parse {text.strip()!r}"
        raise ConfigError(f"{key}: {msg} [{spec.unit}]", line, column, source) from None
    if not np.all(np.isfinite(vals)):
        raise ConfigError(f"{key}: value must be finite", line, column, source)
    return vals


def _split_entry(text, line, source, col0=1):
    """(key, value, value column) of one 'key = value' entry."""
    if "=" not in text:
        raise ConfigError("expected 'key = value'", line, col0, source)
    eq = text.index("=")
    raw_key = text[:eq]
    key = raw_key.strip()
    key_col = col0 + len(raw_key) - len(raw_key.lstrip())
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}", line, key_col, source)
    raw_val = text[eq + 1:]
    if not raw_val.strip():
        raise ConfigError(f"{key}: missing value", line, col0 + eq + 1, source)
    val_col = col0 + eq + 1 + len(raw_val) - len(raw_val.lstrip())
    return key, raw_val, val_col


def parse_text(text, source="<config>"):
    """Parse config text into {key: value}."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        key, raw_val, col = _split_entry(body, lineno, source)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", lineno, 1 + body.index(key), source)
        out[key] = parse_value(key, raw_val, lineno, col, source)
    return out


def parse_file(path):
    with open(path, encoding="utf-8") as fh:
        return parse_text(fh.read(), source=str(path))


def parse_overrides(items):
    """``--set key=value`` strings; the line number is the override's position."""
    out = {}
    for i, item in enumerate(items or (), start=1):
        key, raw_val, col = _split_entry(item, i, "--set")
        out[key] = parse_value(key, raw_val, i, col, "--set")
    return out


def resolve(path=None, overrides=(), seed=None):
    """Defaults, then the file, then the overrides, then an explicit seed."""
    values = defaults()
    if path is not None:
        values.update(parse_file(path))
    values.update(parse_overrides(overrides))
    if seed is not None:
        values["sim.seed"] = int(seed)
    return values


def config_text(values):
    """Canonical text of a resolved config (sorted keys, units as comments)."""
    lines = []
    for key in sorted(values):
        lines.append(f"{key} = {format_value(values[key])}  # [{SCHEMA[key].unit}]")
    return "\n".join(lines) + "\n"


def build(values, kind="frontal"):
    """(SimConfig, TrialScenario) from resolved values.

    Domain errors of the underlying types are reported as ConfigError.
    """
    v = dict(values)
    try:
        lim = np.asarray(v["arm.joint_limits"]).reshape(4, 2)
        arm = SlArmModel(
            mount_pose=make_transform(translation=v["arm.mount_offset"]),
            link_lengths=v["arm.link_lengths"], link_masses=v["arm.link_masses"],
            joint_limits=lim, velocity_limits=np.asarray(v["arm.velocity_limits"]),
            acceleration_limits=np.asarray(v["arm.acceleration_limits"]))
        anthro = AnthropometricParams(**{f.name: v[f"anthro.{f.name}"]
                                         for f in fields(AnthropometricParams)})
        planner = PlannerWeights(**{f.name: v[f"planner.{f.name}"] for f in fields(PlannerWeights)})
        noise = NoiseModel(**{f.name: v[f"noise.{f.name}"] for f in fields(NoiseModel)})
        mpc = MpcConfig(
            JointBounds.from_arms((arm, arm.mirrored())),
            horizon=v["mpc.horizon"], n_steps=v["mpc.n_steps"],
            Q0=default_tracking_weight(v["mpc.q_pos"], v["mpc.q_vel"]),
            R0=v["mpc.r0"] * np.eye(NU), W=v["mpc.w"] * np.eye(NU),
            k0=v["mpc.k0"], epsilon_q=v["mpc.epsilon_q"], tol=v["mpc.tol"],
            max_iters_cold=v["mpc.max_iters_cold"], max_iters_warm=v["mpc.max_iters_warm"],
            rho=v["mpc.rho"])
        cfg = SimConfig(
            control_rate=v["sim.control_rate"], obs_rate=v["sim.obs_rate"],
            noise_sigma=v["sim.noise_sigma"], seed=v["sim.seed"], anthro=anthro, arm=arm,
            planner=planner, mpc=mpc, noise=noise, home_pose=v["sim.home_pose"],
            hip_width=v["sim.hip_width"], hip_height=v["sim.hip_height"],
            init_vel_var=v["sim.init_vel_var"], source=v)
        scenario = TrialScenario(kind, v["scenario.treadmill_speed"], v["scenario.duration"])
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from None
    return cfg, scenario


def with_value(values, key, value):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    out = dict(values)
    out[key] = value
    return out


def schema_table():
    """(key, unit, default, description) rows for documentation."""
    d = defaults()
    return [(k, s.unit, format_value(d[k]), s.doc) for k, s in SCHEMA.items()]

