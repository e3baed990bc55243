"""Plant, bow protocol and the multi-rate closed loop.

The human is kinematic: hips stay fixed while the trunk leans so that its
top follows a button receding at treadmill speed. The arms are exact double
integrators at the control rate. Observations (24 marker-derived positions)
arrive every control_rate/obs_rate control ticks.
"""
from dataclasses import dataclass, field, replace
import enum
import hashlib

import numpy as np

from . import estimator as lqe
from .errors import InvalidInputError
from .model import (GRAVITY, AnthropometricParams, HumanKinematicState, SlArmModel,
                    rigid_point_velocity, rot_x, rot_y, sl_forward_kinematics, system_com)
from .mpc import (DEGRADED, SAFE_STOP, SOLVED, JointBounds, MpcConfig, MpcController,
                  discretize_dynamics, linearize_task)
from .planner import (Y_POS, PlannerWeights, com_cost, optimal_com_velocity,
                      reference_from_com_command)


class Condition(str, enum.Enum):
    HONLY = "honly"
    NOCOMP = "nocomp"
    COMP = "comp"

    @property
    def label(self):
        return {"honly": "HOnly", "nocomp": "NoComp", "comp": "Comp"}[self.value]


FRONTAL = "frontal_bow"
LATERAL = "lateral_bow"
SIDE_BY_SIDE = "side_by_side"
IN_LINE = "in_line"


@dataclass(frozen=True)
class TrialScenario:
    kind: str = FRONTAL
    treadmill_speed: float = 0.04
    duration: float = 7.5
    stance: str = None

    def __post_init__(self):
        aliases = {"frontal": FRONTAL, "lateral": LATERAL}
        kind = aliases.get(self.kind, self.kind)
        if kind not in (FRONTAL, LATERAL):
            raise InvalidInputError(f"unknown scenario kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.stance is None:
            object.__setattr__(self, "stance", IN_LINE if kind == LATERAL else SIDE_BY_SIDE)
        if self.stance not in (SIDE_BY_SIDE, IN_LINE):
            raise InvalidInputError(f"unknown stance {self.stance!r}")
        if not self.duration > 0 or self.treadmill_speed < 0:
            raise InvalidInputError("duration must be > 0 and treadmill_speed >= 0")


def _default_arm():
    return SlArmModel()


@dataclass(frozen=True)
class SimConfig:
    control_rate: int = 1000
    obs_rate: int = 100
    noise_sigma: float = 0.001
    seed: int = 0
    anthro: AnthropometricParams = field(default_factory=AnthropometricParams)
    arm: SlArmModel = field(default_factory=_default_arm)
    planner: PlannerWeights = field(default_factory=PlannerWeights)
    mpc: MpcConfig = None
    noise: lqe.NoiseModel = field(default_factory=lqe.NoiseModel)
    home_pose: tuple = (0.0, -np.pi / 2, 0.0, -np.pi / 2)
    hip_width: float = 0.2
    hip_height: float = 0.92
    init_vel_var: float = 0.01
    source: dict = None  # flat key/value config this was built from, if any

    def __post_init__(self):
        if self.control_rate <= 0 or self.obs_rate <= 0 or self.control_rate % self.obs_rate:
            raise InvalidInputError("control_rate must be a positive multiple of obs_rate")
        if self.noise_sigma < 0:
            raise InvalidInputError("noise_sigma must be >= 0")
        if self.mpc is None:
            object.__setattr__(self, "mpc", MpcConfig(JointBounds.from_arms(self.arms)))

    @property
    def arms(self):
        """(left, right): the configured arm and its mirror image."""
        return (self.arm, self.arm.mirrored())

    @property
    def home(self):
        q = np.asarray(self.home_pose, dtype=float)
        return q, q * np.array([-1.0, 1.0, -1.0, 1.0])


def format_value(v):
    """Canonical text of a config value (tuples comma-separated)."""
    if isinstance(v, tuple):
        return ", ".join(format_value(x) for x in v)
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def values_hash(values):
    text = "\n".join(f"{k} = {format_value(values[k])}" for k in sorted(values))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def config_hash(cfg):
    """Hash of the flat config a SimConfig was built from (seed included)."""
    if cfg.source is not None:
        return values_hash({**cfg.source, "sim.seed": int(cfg.seed)})
    return hashlib.sha256(repr(cfg).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Human motion


def base_hips(scenario, cfg):
    h = cfg.hip_height
    if scenario.stance == IN_LINE:
        # tandem feet: pelvis turned, hips offset along the walking line
        half = 0.5 * cfg.hip_width
        return np.array([0.6 * half, 0.8 * half, h]), np.array([-0.6 * half, -0.8 * half, h])
    half = 0.5 * cfg.hip_width
    return np.array([0.0, half, h]), np.array([0.0, -half, h])


def trunk_angle(scenario, t, anthro):
    return float(np.arcsin(min(1.0, scenario.treadmill_speed * t / anthro.trunk_length)))


def bow_trajectory(scenario, t, anthro, cfg=None):
    """Human state at time t: frontal bows pitch forward, lateral bows roll right."""
    if not -1e-9 <= t <= scenario.duration + 1e-9:
        raise InvalidInputError(f"t={t} outside [0, {scenario.duration}]")
    cfg = cfg or SimConfig()
    theta = trunk_angle(scenario, max(t, 0.0), anthro)
    R = rot_y(theta) if scenario.kind == FRONTAL else rot_x(theta)
    hl, hr = base_hips(scenario, cfg)
    return HumanKinematicState(hl, hr, R, scenario.treadmill_speed * t)


# ---------------------------------------------------------------------------
# Plant


@dataclass(frozen=True)
class PlantState:
    t: float
    human: HumanKinematicState
    s: np.ndarray  # (16,) joint state [q1, dq1, q2, dq2]
    condition: Condition
    clipped: int = 0

    @property
    def has_arms(self):
        return self.condition != Condition.HONLY

    def joint_vectors(self):
        return (self.s[0:4], self.s[8:12]), (self.s[4:8], self.s[12:16])


def condition_anthro(condition, anthro):
    if condition == Condition.HONLY:
        return replace(anthro, backpack_mass=0.0)
    return anthro


def initial_plant(scenario, condition, cfg):
    condition = Condition(condition)
    s = np.zeros(16)
    if condition != Condition.HONLY:
        qa, qb = cfg.home
        s[0:4], s[8:12] = qa, qb
    return PlantState(0.0, bow_trajectory(scenario, 0.0, cfg.anthro, cfg), s, condition)


def step_plant(plant, u, dt, scenario, cfg):
    """Advance arms (double integrator, clipped at limits) and the human by dt."""
    s = plant.s
    clipped = 0
    if plant.condition == Condition.COMP:
        A, B = discretize_dynamics(dt)
        s = A @ s + B @ np.asarray(u, dtype=float)
        b = cfg.mpc.bounds
        q = s[[0, 1, 2, 3, 8, 9, 10, 11]]
        qd = s[[4, 5, 6, 7, 12, 13, 14, 15]]
        qc = np.clip(q, b.q_min, b.q_max)
        qdc = np.clip(qd, -b.qd_max, b.qd_max)
        qdc = np.where(qc != q, 0.0, qdc)
        clipped = int(np.count_nonzero(qc != q) + np.count_nonzero(qdc != qd))
        s = s.copy()
        s[[0, 1, 2, 3, 8, 9, 10, 11]] = qc
        s[[4, 5, 6, 7, 12, 13, 14, 15]] = qdc
    t = min(plant.t + dt, scenario.duration)
    human = bow_trajectory(scenario, t, cfg.anthro, cfg)
    return PlantState(plant.t + dt, human, s, plant.condition, clipped)


def plant_points(plant, cfg):
    """True positions: (24-vector in observation order, system CoM breakdown)."""
    anthro = condition_anthro(plant.condition, cfg.anthro)
    human = plant.human
    if plant.has_arms:
        qs, _ = plant.joint_vectors()
        arms = cfg.arms
        br = system_com(human, anthro, arms, qs)
    else:
        arms, qs = (), ()
        br = system_com(human, anthro)
    pos = np.zeros(lqe.OBS_DIM)
    pos[0:2] = br.total_com_xy
    pos[2:4] = 0.5 * (human.hip_left[:2] + human.hip_right[:2])
    pos[4:6] = br.human_com[:2]
    pose = human.trunk_pose()
    for j, (arm, q) in enumerate(zip(arms, qs)):
        s, e, w, _ = sl_forward_kinematics(q, arm, pose)
        pos[6 + 9 * j:15 + 9 * j] = np.concatenate([s, e, w])
    return pos, br


def state_from_positions(pos, vel):
    x = np.zeros(lqe.STATE_DIM)
    x[lqe.POS_IDX] = pos
    x[lqe.VEL_IDX] = vel
    return x


def observe(plant, cfg, rng):
    """True 24 positions plus i.i.d. Gaussian marker noise."""
    pos, _ = plant_points(plant, cfg)
    noisy = pos + cfg.noise_sigma * rng.standard_normal(lqe.OBS_DIM) if cfg.noise_sigma > 0 \
        else pos.copy()
    return lqe.Observation(noisy, plant.t)


def tick_rng(seed, tick):
    return np.random.default_rng([int(seed), int(tick)])


def grf_proxy(com_accel_xy, total_mass):
    """Horizontal ground reaction force of a fall-free body: m * a."""
    return float(total_mass) * np.asarray(com_accel_xy, dtype=float)


def cop_proxy(com_xy, com_accel_xy, com_height, g=GRAVITY):
    """Linear inverted pendulum: CoP = CoM - (h/g) * CoM acceleration.

    Works on single points or (n, 2) series with an (n,) height.
    """
    h = np.asarray(com_height, dtype=float)
    if np.any(h <= 0):
        raise InvalidInputError("com_height must be > 0")
    return np.asarray(com_xy, dtype=float) - (h / g)[..., None] * np.asarray(com_accel_xy, dtype=float)


# ---------------------------------------------------------------------------
# Closed loop

STATUS_CODES = {None: 0, SOLVED: 1, DEGRADED: 2, SAFE_STOP: 3}


@dataclass
class TrialLog:
    times: np.ndarray
    true_state: np.ndarray
    est_state: np.ndarray
    p_star_dot: np.ndarray
    reference: np.ndarray
    u: np.ndarray
    joints: np.ndarray
    solve_time: np.ndarray
    solve_iters: np.ndarray
    status: np.ndarray
    k_f: np.ndarray
    q_scale: np.ndarray
    r_scale: np.ndarray
    trace_p: np.ndarray
    com_z: np.ndarray
    cost_v: np.ndarray
    clipped: np.ndarray
    obs_times: np.ndarray
    obs_raw: np.ndarray
    obs_noisy: np.ndarray
    metadata: dict
    qp_samples: list = field(default_factory=list)

    @property
    def n_ticks(self):
        return len(self.times)

    @property
    def total_mass(self):
        return float(self.metadata["total_mass"])

    @property
    def control_rate(self):
        return float(self.metadata["control_rate"])


def run_trial(scenario, condition, cfg, record_qp_every=0):
    """Run one trial; deterministic for fixed (scenario, condition, cfg).

    ``record_qp_every`` > 0 keeps every k-th MPC problem with its warm start
    and warm-solve iteration count in ``log.qp_samples``.
    """
    condition = Condition(condition)
    dt = 1.0 / cfg.control_rate
    n_ticks = int(round(scenario.duration * cfg.control_rate))
    ratio = cfg.control_rate // cfg.obs_rate
    n_obs = (n_ticks + ratio - 1) // ratio
    mcfg = cfg.mpc
    arms = cfg.arms

    L = dict(
        times=np.zeros(n_ticks), true_state=np.zeros((n_ticks, 48)),
        est_state=np.zeros((n_ticks, 48)), p_star_dot=np.zeros((n_ticks, 2)),
        reference=np.zeros((n_ticks, 24)), u=np.zeros((n_ticks, 8)),
        joints=np.zeros((n_ticks, 16)), solve_time=np.zeros(n_ticks),
        solve_iters=np.zeros(n_ticks, dtype=int), status=np.zeros(n_ticks, dtype=int),
        k_f=np.zeros(n_ticks), q_scale=np.ones(n_ticks), r_scale=np.ones(n_ticks),
        trace_p=np.zeros(n_ticks), com_z=np.zeros(n_ticks), cost_v=np.zeros(n_ticks),
        clipped=np.zeros(n_ticks, dtype=int), obs_times=np.zeros(n_obs),
        obs_raw=np.zeros((n_obs, 24)), obs_noisy=np.zeros((n_obs, 24)),
    )
    qp_samples = []

    plant = initial_plant(scenario, condition, cfg)
    controller = MpcController(mcfg, period=dt) if condition == Condition.COMP else None
    est = None
    trunk_meas = plant.human.trunk_pose()
    prev_pos = None
    masses = None
    safe_stops = degraded = clip_events = 0
    k_obs = 0

    for i in range(n_ticks):
        t = i * dt
        pos, br = plant_points(plant, cfg)
        if masses is None:
            masses = br
        vel = np.zeros(24) if prev_pos is None else (pos - prev_pos) / dt
        prev_pos = pos
        x_true = state_from_positions(pos, vel)

        if est is not None:
            est = lqe.lqe_predict(est, dt)
        if i % ratio == 0:
            z_true = pos.copy()
            z = observe(plant, cfg, tick_rng(cfg.seed, i))
            z = lqe.Observation(z.values, t)
            if est is None:
                est = lqe.initial_state(z, cfg.noise, vel_var=cfg.init_vel_var)
            est = replace(est, last_time=t)
            est = lqe.lqe_update(est, z)
            trunk_meas = plant.human.trunk_pose()
            L["obs_times"][k_obs] = t
            L["obs_raw"][k_obs] = z_true
            L["obs_noisy"][k_obs] = z.values
            k_obs += 1

        u = np.zeros(8)
        if controller is not None:
            xh = est.x_hat
            cmd_com = optimal_com_velocity(xh[lqe.P], xh[lqe.SUP], cfg.planner, xh[lqe.DP])
            horizon = lqe.predict_horizon(est, mcfg.horizon, mcfg.n_steps)
            shoulders = [xh[lqe.arm_slices(j)[0]][0:3] for j in range(2)]
            shoulder_vel = [xh[lqe.arm_slices(j)[1]][0:3] for j in range(2)]
            kin = linearize_task(plant.s, arms, trunk_meas)
            drift = rigid_point_velocity(shoulders, shoulder_vel, kin.y0[Y_POS].reshape(4, 3))
            kin = kin.with_drift(drift)
            ref = reference_from_com_command(cmd_com, horizon, masses, kin.y0, mcfg.n_steps,
                                             mcfg.dt_mpc, arms)
            warm_before = controller.warm
            cmd = controller.step(est, plant.s, ref, kin)
            u = cmd.u
            if record_qp_every and i % record_qp_every == 0 and warm_before is not None:
                qp_samples.append((controller.last_problem, warm_before,
                                   controller.last_solution.iterations))
            L["p_star_dot"][i] = cmd_com.p_star_dot
            L["reference"][i] = ref.samples[0]
            L["solve_time"][i] = cmd.solve_time
            L["solve_iters"][i] = cmd.iterations
            L["status"][i] = STATUS_CODES[cmd.status]
            L["k_f"][i] = cmd.k_f
            L["q_scale"][i] = cmd.q_scale
            L["r_scale"][i] = cmd.r_scale
            safe_stops += cmd.status == SAFE_STOP
            degraded += cmd.status == DEGRADED
        else:
            L["k_f"][i] = lqe.kalman_gain_norm(est)

        L["times"][i] = t
        L["true_state"][i] = x_true
        L["est_state"][i] = est.x_hat
        L["u"][i] = u
        L["joints"][i] = plant.s
        L["trace_p"][i] = np.trace(est.covariance)
        L["com_z"][i] = br.total_com[2]
        L["cost_v"][i] = com_cost(pos[0:2], vel[0:2], pos[2:4], cfg.planner)
        plant = step_plant(plant, u, dt, scenario, cfg)
        L["clipped"][i] = plant.clipped
        clip_events += plant.clipped > 0

    metadata = {
        "scenario": scenario.kind,
        "stance": scenario.stance,
        "treadmill_speed": scenario.treadmill_speed,
        "duration": scenario.duration,
        "condition": condition.value,
        "seed": cfg.seed,
        "config_hash": config_hash(cfg),
        "control_rate": cfg.control_rate,
        "obs_rate": cfg.obs_rate,
        "noise_sigma": cfg.noise_sigma,
        "total_mass": masses.total_mass,
        "human_mass": masses.human_mass,
        "n_ticks": n_ticks,
        "safe_stops": int(safe_stops),
        "degraded_solves": int(degraded),
        "clip_events": int(clip_events),
    }
    return TrialLog(**L, metadata=metadata, qp_samples=qp_samples)
