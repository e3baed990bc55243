"""Kalman filtering (LQE) of the 48-dimensional human/SL state.

State layout (indices into the 48-vector)::

    0:2   p        system CoM projection        2:4   dp
    4:6   p_sup    support center               6:8   dp_sup
    8:10  p_h      human CoM projection         10:12 dp_h
    12+18j + 0:9   shoulder, elbow, wrist of arm j (3 each)
    12+18j + 9:18  their velocities

Every position coordinate is paired with its velocity and filtered with a
constant-velocity model; only positions are measured.
"""
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import EstimatorStateError, InvalidInputError, NumericalFailureError

STATE_DIM = 48
OBS_DIM = 24

P = slice(0, 2)
DP = slice(2, 4)
SUP = slice(4, 6)
DSUP = slice(6, 8)
H = slice(8, 10)
DH = slice(10, 12)


def arm_slices(j):
    """(positions, velocities) slices of arm j (0 or 1); each holds s, e, w."""
    base = 12 + 18 * j
    return slice(base, base + 9), slice(base + 9, base + 18)


POS_IDX = np.r_[0:2, 4:6, 8:10, 12:21, 30:39]
VEL_IDX = np.r_[2:4, 6:8, 10:12, 21:30, 39:48]

# signal group of each of the 24 position coordinates
GROUPS = ("com", "sup", "hcom", "sl")
GROUP_OF_PAIR = np.array([0] * 2 + [1] * 2 + [2] * 2 + [3] * 18)


def pack_state(p, dp, p_sup, dp_sup, p_h, dp_h, arms):
    """Assemble the 48-vector; ``arms`` is two (s, e, w, ds, de, dw) tuples."""
    x = np.zeros(STATE_DIM)
    x[P], x[DP], x[SUP], x[DSUP], x[H], x[DH] = p, dp, p_sup, dp_sup, p_h, dp_h
    for j, parts in enumerate(arms):
        pos, vel = arm_slices(j)
        x[pos] = np.concatenate(parts[:3])
        x[vel] = np.concatenate(parts[3:])
    return x


def positions_of(x):
    return np.asarray(x)[..., POS_IDX]


def velocities_of(x):
    return np.asarray(x)[..., VEL_IDX]


def tracked_task_vector(x):
    """24-vector [e1, de1, w1, dw1, e2, de2, w2, dw2] read off a state vector."""
    out = []
    for j in range(2):
        pos, vel = arm_slices(j)
        pp, vv = x[pos], x[vel]
        out += [pp[3:6], vv[3:6], pp[6:9], vv[6:9]]
    return np.concatenate(out)


@dataclass(frozen=True)
class Observation:
    values: np.ndarray
    time: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (OBS_DIM,):
            raise InvalidInputError(f"observation must have {OBS_DIM} entries, got {v.shape}")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class NoiseModel:
    """Process intensities (white acceleration PSD, m^2/s^3) and measurement variance (m^2)."""

    q_com: float = 1e-5
    q_sup: float = 1e-6
    q_hcom: float = 1e-5
    q_sl: float = 1e-5
    measurement_var: float = 1e-6

    def pair_intensity(self):
        q = np.array([self.q_com, self.q_sup, self.q_hcom, self.q_sl])
        return q[GROUP_OF_PAIR]


@dataclass(frozen=True)
class EstimatorState:
    x_hat: np.ndarray
    covariance: np.ndarray
    noise: NoiseModel = field(default_factory=NoiseModel)
    last_gain: np.ndarray = None
    last_time: float = 0.0
    last_obs_time: float = None


def initial_state(z, noise=None, pos_var=None, vel_var=1.0):
    """Estimator seeded from a first observation (velocities zero)."""
    noise = noise or NoiseModel()
    x = np.zeros(STATE_DIM)
    x[POS_IDX] = z.values
    P0 = np.zeros(STATE_DIM)
    P0[POS_IDX] = noise.measurement_var if pos_var is None else pos_var
    P0[VEL_IDX] = vel_var
    return EstimatorState(x, np.diag(P0), noise, None, z.time, z.time)


def transition(dt):
    return _transition(float(dt)).copy()


@lru_cache(maxsize=32)
def _transition(dt):
    F = np.eye(STATE_DIM)
    F[POS_IDX, VEL_IDX] = dt
    F.flags.writeable = False
    return F


def process_noise(noise, dt):
    """Discretized white-acceleration noise; additive over time steps."""
    return _process_noise(noise, float(dt)).copy()


@lru_cache(maxsize=32)
def _process_noise(noise, dt):
    q = noise.pair_intensity()
    Q = np.zeros((STATE_DIM, STATE_DIM))
    Q[POS_IDX, POS_IDX] = q * dt ** 3 / 3.0
    Q[POS_IDX, VEL_IDX] = q * dt ** 2 / 2.0
    Q[VEL_IDX, POS_IDX] = q * dt ** 2 / 2.0
    Q[VEL_IDX, VEL_IDX] = q * dt
    Q.flags.writeable = False
    return Q


def lqe_predict(est, dt):
    if not dt > 0:
        raise InvalidInputError(f"dt must be > 0, got {dt}")
    x = est.x_hat.copy()
    x[POS_IDX] += dt * x[VEL_IDX]
    F = _transition(float(dt))
    Pn = F @ est.covariance @ F.T + _process_noise(est.noise, float(dt))
    Pn = 0.5 * (Pn + Pn.T)
    return replace(est, x_hat=x, covariance=Pn, last_time=est.last_time + dt)


def _measurement_matrix():
    Hm = np.zeros((OBS_DIM, STATE_DIM))
    Hm[np.arange(OBS_DIM), POS_IDX] = 1.0
    return Hm


_HM = _measurement_matrix()


def lqe_update(est, z):
    """Kalman measurement update on the 24 position entries (Joseph form)."""
    if not isinstance(z, Observation):
        z = Observation(np.asarray(z, dtype=float), est.last_time)
    if est.last_obs_time is not None and z.time <= est.last_obs_time and est.last_gain is not None:
        raise InvalidInputError("observation timestamps must be strictly increasing")
    Pm = est.covariance
    R = est.noise.measurement_var * np.eye(OBS_DIM)
    PHt = Pm[:, POS_IDX]
    S = Pm[np.ix_(POS_IDX, POS_IDX)] + R
    K = np.linalg.solve(S, PHt.T).T
    innovation = z.values - est.x_hat[POS_IDX]
    x = est.x_hat + K @ innovation
    IKH = np.eye(STATE_DIM) - K @ _HM
    Pn = IKH @ Pm @ IKH.T + K @ R @ K.T
    Pn = _ensure_psd(Pn)
    return replace(est, x_hat=x, covariance=Pn, last_gain=K, last_obs_time=z.time)


def _ensure_psd(Pn, tol=1e-9):
    Pn = 0.5 * (Pn + Pn.T)
    if np.linalg.eigvalsh(Pn)[0] >= -tol:
        return Pn
    # retry once: clip the negative spectrum
    w, V = np.linalg.eigh(Pn)
    fixed = (V * np.maximum(w, 0.0)) @ V.T
    fixed = 0.5 * (fixed + fixed.T)
    if np.linalg.eigvalsh(fixed)[0] < -tol:
        raise NumericalFailureError("covariance is not positive semidefinite after update")
    return fixed


def predict_horizon(est, horizon, n_steps):
    """Open-loop state predictions at horizon/n_steps spacing, shape (n_steps, 48)."""
    if not horizon > 0 or int(n_steps) < 1:
        raise InvalidInputError("horizon must be > 0 and n_steps >= 1")
    n_steps = int(n_steps)
    times = horizon * np.arange(1, n_steps + 1) / n_steps
    out = np.repeat(est.x_hat[None, :], n_steps, axis=0)
    out[:, POS_IDX] += times[:, None] * est.x_hat[VEL_IDX][None, :]
    return out


def kalman_gain_norm(est):
    if est.last_gain is None:
        raise EstimatorStateError("no measurement update has been performed yet")
    return float(np.linalg.norm(est.last_gain))
