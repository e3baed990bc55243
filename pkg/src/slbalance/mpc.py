"""Receding-horizon tracking of the elbow/wrist reference.

Joint model: two 4-joint arms as double integrators, state
s = [q1, dq1, q2, dq2] (16), input u = joint accelerations (8). The QP is
condensed: only u_0..u_{n-1} are decision variables.
"""
from dataclasses import dataclass, field
from functools import lru_cache
import time

import numpy as np

from . import qp as qpmod
from .errors import InvalidInputError
from .estimator import kalman_gain_norm
from .model import sl_forward_kinematics, sl_task_jacobian
from .planner import Y_POS, Y_VEL

NQ = 4
NU = 8
NS = 16

SOLVED = "solved"
DEGRADED = "degraded"
SAFE_STOP = "safe_stop"

# s-vector slices
Q_IDX = np.r_[0:4, 8:12]
QD_IDX = np.r_[4:8, 12:16]
_QQD = np.r_[Q_IDX, QD_IDX]


@dataclass(frozen=True)
class JointBounds:
    q_min: np.ndarray
    q_max: np.ndarray
    qd_max: np.ndarray
    qdd_max: np.ndarray

    def __post_init__(self):
        for name in ("q_min", "q_max", "qd_max", "qdd_max"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (NU,) or not np.all(np.isfinite(v)):
                raise InvalidInputError(f"{name} must be 8 finite values")
            object.__setattr__(self, name, v)
        if np.any(self.q_min >= self.q_max) or np.any(self.qd_max <= 0) or np.any(self.qdd_max <= 0):
            raise InvalidInputError("joint bounds must satisfy lower < upper")

    @classmethod
    def from_arms(cls, arms):
        return cls(
            np.concatenate([a.joint_limits[:, 0] for a in arms]),
            np.concatenate([a.joint_limits[:, 1] for a in arms]),
            np.concatenate([a.velocity_limits for a in arms]),
            np.concatenate([a.acceleration_limits for a in arms]),
        )


def default_tracking_weight(q_pos=100.0, q_vel=1000.0):
    d = np.zeros(24)
    d[Y_POS] = q_pos
    d[Y_VEL] = q_vel
    return np.diag(d)


def _is_psd(M, tol=1e-10):
    return np.allclose(M, M.T) and np.linalg.eigvalsh(0.5 * (M + M.T))[0] >= -tol


@dataclass(frozen=True)
class MpcConfig:
    bounds: JointBounds
    horizon: float = 0.5
    n_steps: int = 10
    Q0: np.ndarray = field(default_factory=default_tracking_weight)
    R0: np.ndarray = field(default_factory=lambda: 0.1 * np.eye(NU))
    W: np.ndarray = field(default_factory=lambda: 0.01 * np.eye(NU))
    k0: float = 4.0
    epsilon_q: float = 0.05
    tol: float = 1e-6
    max_iters_cold: int = 4000
    max_iters_warm: int = 200
    rho: float = 0.1

    def __post_init__(self):
        if not self.horizon > 0:
            raise InvalidInputError("horizon must be > 0")
        if int(self.n_steps) < 2:
            raise InvalidInputError("n_steps must be >= 2")
        if not self.k0 > 0:
            raise InvalidInputError("k0 must be > 0")
        if not 0 < self.epsilon_q <= 1:
            raise InvalidInputError("epsilon_q must lie in (0, 1]")
        Q0, R0, W = (np.asarray(M, dtype=float) for M in (self.Q0, self.R0, self.W))
        if Q0.shape != (24, 24) or not _is_psd(Q0):
            raise InvalidInputError("Q0 must be a 24x24 PSD matrix")
        if R0.shape != (NU, NU) or not _is_psd(R0) or np.linalg.eigvalsh(R0)[0] <= 0:
            raise InvalidInputError("R0 must be an 8x8 PD matrix")
        if W.shape != (NU, NU) or not _is_psd(W):
            raise InvalidInputError("W must be an 8x8 PSD matrix")
        object.__setattr__(self, "Q0", Q0)
        object.__setattr__(self, "R0", R0)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def dt_mpc(self):
        return self.horizon / self.n_steps


@dataclass
class ControlCommand:
    u: np.ndarray
    status: str
    solve_time: float = 0.0
    iterations: int = 0
    k_f: float = 0.0
    q_scale: float = 1.0
    r_scale: float = 1.0


@dataclass
class TaskLinearization:
    """y(s, t) ~= y0 + C (s - s_now) + drift * t around the current state."""

    y0: np.ndarray
    C: np.ndarray
    drift: np.ndarray

    def with_drift(self, point_drift):
        """Add the (4, 3) trunk-induced velocity of [e1, w1, e2, w2]."""
        d = np.asarray(point_drift, dtype=float).reshape(4, 3).ravel()
        drift = np.zeros(24)
        drift[Y_POS] = d
        y0 = self.y0.copy()
        y0[Y_VEL] += d
        return TaskLinearization(y0, self.C, drift)


def weight_factors(k_f, k0, epsilon_q):
    if k_f < 0 or not k0 > 0:
        raise InvalidInputError("need k_f >= 0 and k0 > 0")
    q = min(1.0, max(epsilon_q, 1.0 - k_f / k0))
    return q, 1.0 + k_f / k0


def adapt_weights(Q0, R0, k_f, k0, epsilon_q):
    """Scale tracking and effort weights with the Kalman-gain norm."""
    q, r = weight_factors(k_f, k0, epsilon_q)
    return np.asarray(Q0) * q, np.asarray(R0) * r


def discretize_dynamics(dt):
    """Exact zero-order-hold double integrator in the s ordering."""
    if not dt > 0:
        raise InvalidInputError("dt must be > 0")
    A = np.eye(NS)
    B = np.zeros((NS, NU))
    for j in range(2):
        q = slice(8 * j, 8 * j + 4)
        qd = slice(8 * j + 4, 8 * j + 8)
        A[q, qd] = dt * np.eye(NQ)
        B[q, 4 * j:4 * j + 4] = 0.5 * dt * dt * np.eye(NQ)
        B[qd, 4 * j:4 * j + 4] = dt * np.eye(NQ)
    return A, B


@lru_cache(maxsize=16)
def _condensed(dt, n):
    """Powers A^(k+1), blocks A^j B, the stacked input map and constraint matrix."""
    A, B = discretize_dynamics(dt)
    powers = [np.eye(NS)]
    for _ in range(n):
        powers.append(A @ powers[-1])
    Phi = np.stack(powers[1:])  # (n, 16, 16): s_{k+1} = Phi[k] s0 + ...
    AjB = np.stack([powers[j] @ B for j in range(n)])  # (n, 16, 8)
    idx = np.subtract.outer(np.arange(n), np.arange(n))
    mask = idx >= 0
    Gamma = np.zeros((n, NS, n, NU))
    for k in range(n):
        for i in range(k + 1):
            Gamma[k, :, i, :] = AjB[k - i]
    Gamma = Gamma.reshape(n * NS, n * NU)
    Gq = Gamma.reshape(n, NS, n * NU)[:, Q_IDX, :].reshape(n * NU, n * NU)
    Gqd = Gamma.reshape(n, NS, n * NU)[:, QD_IDX, :].reshape(n * NU, n * NU)
    A_con = np.vstack([np.eye(n * NU), Gq, Gqd])
    Dm = np.eye(n * NU) - np.eye(n * NU, k=-NU)
    # joints are decoupled: q_k = sum_j a[k, j] u_j and qd_k = sum_j b[k, j] u_j
    a = Gamma.reshape(n, NS, n, NU)[:, 0, :, 0]
    b = Gamma.reshape(n, NS, n, NU)[:, 4, :, 0]
    grams = np.stack([a.T @ a, a.T @ b, b.T @ a, b.T @ b])
    steps = np.stack([a, b])
    for arr in (Phi, AjB, Gamma, A_con, Dm, grams, steps):
        arr.setflags(write=False)
    return Phi, AjB, idx, mask, Gamma, A_con, Dm, grams, steps


def linearize_task(s_now, arms, trunk_pose, point_drift=None):
    """Task linearization at s_now for fixed trunk pose.

    ``point_drift`` is the (4, 3) world velocity of [elbow1, wrist1, elbow2,
    wrist2] caused by trunk motion alone.
    """
    s_now = np.asarray(s_now, dtype=float)
    y0 = np.zeros(24)
    C = np.zeros((24, NS))
    for j, arm in enumerate(arms):
        q = s_now[8 * j:8 * j + 4]
        qd = s_now[8 * j + 4:8 * j + 8]
        _, e, w, _ = sl_forward_kinematics(q, arm, trunk_pose)
        J = sl_task_jacobian(q, arm, trunk_pose)
        r = 12 * j
        y0[r:r + 3] = e
        y0[r + 3:r + 6] = J[:3] @ qd
        y0[r + 6:r + 9] = w
        y0[r + 9:r + 12] = J[3:] @ qd
        C[r:r + 3, 8 * j:8 * j + 4] = J[:3]
        C[r + 3:r + 6, 8 * j + 4:8 * j + 8] = J[:3]
        C[r + 6:r + 9, 8 * j:8 * j + 4] = J[3:]
        C[r + 9:r + 12, 8 * j + 4:8 * j + 8] = J[3:]
    kin = TaskLinearization(y0, C, np.zeros(24))
    return kin if point_drift is None else kin.with_drift(point_drift)


_JERK_CACHE = {}


def _jerk_hessian(Wd, Dm):
    key = (Wd.tobytes(), Dm.shape)
    if key not in _JERK_CACHE:
        n = Dm.shape[0] // NU
        _JERK_CACHE[key] = Dm.T @ np.kron(np.eye(n), Wd) @ Dm
    return _JERK_CACHE[key]


def build_qp(s_now, r, cfg, kin, Q_r=None, R_r=None, u_prev=None):
    """Condensed tracking QP over u_0..u_{n-1}.

    Cost: sum_k (y_k - r_k)'Q_r(y_k - r_k) + u_k'R_r u_k + du_k'(W/dt^2)du_k,
    with du_0 = u_0 - u_prev. Constraints: acceleration box on every u_k and
    position/velocity boxes on the predicted joint states s_1..s_n.
    """
    n, dt = cfg.n_steps, cfg.dt_mpc
    samples = np.asarray(r.samples, dtype=float)
    if samples.shape != (n, 24):
        raise InvalidInputError(f"reference must have {n} samples of 24, got {samples.shape}")
    s_now = np.asarray(s_now, dtype=float)
    Q_r = cfg.Q0 if Q_r is None else Q_r
    R_r = cfg.R0 if R_r is None else R_r
    u_prev = np.zeros(NU) if u_prev is None else np.asarray(u_prev, dtype=float)
    Phi, _, _, _, _, A_con, Dm, grams, steps = _condensed(dt, n)

    s_pred = Phi @ s_now  # (n, 16) free response
    t = dt * np.arange(1, n + 1)
    e0 = (kin.y0 - kin.C @ s_now)[None, :] + s_pred @ kin.C.T + t[:, None] * kin.drift - samples
    e0 = e0.ravel()

    # tracking term sum_k G_k' Q G_k with G_k = C Gamma_k: since every joint is
    # its own double integrator it reduces to Kronecker products of step
    # Gram matrices with blocks of C'QC
    QC = Q_r @ kin.C
    M = kin.C.T @ QC
    Mr = M[_QQD][:, _QQD].reshape(2, NU, 2, NU).transpose(0, 2, 1, 3).reshape(4, NU, NU)
    H = (grams[:, :, None, :, None] * Mr[:, None, :, None, :]).sum(axis=0)
    H[np.arange(n), :, np.arange(n), :] += R_r
    Wd = cfg.W / (dt * dt)
    H = H.reshape(n * NU, n * NU) + _jerk_hessian(Wd, Dm)
    H = H + H.T  # 2 * symmetric part
    V = e0.reshape(n, 24) @ QC  # (n, 16): C'Q e_k per step
    grad = steps[0].T @ V[:, Q_IDX] + steps[1].T @ V[:, QD_IDX]
    jerk_lin = np.zeros(n * NU)
    jerk_lin[:NU] = -Wd @ u_prev  # D' Wbar d0 has only the first block
    g = 2.0 * (grad.ravel() + jerk_lin)

    b = cfg.bounds
    q_off = s_pred[:, Q_IDX].ravel()
    qd_off = s_pred[:, QD_IDX].ravel()
    l = np.concatenate([np.tile(-b.qdd_max, n), np.tile(b.q_min, n) - q_off,
                        np.tile(-b.qd_max, n) - qd_off])
    u = np.concatenate([np.tile(b.qdd_max, n), np.tile(b.q_max, n) - q_off,
                        np.tile(b.qd_max, n) - qd_off])
    # a state already outside its box cannot be repaired within one step;
    # relax those rows to keep the problem feasible.
    l, u = np.minimum(l, u), np.maximum(l, u)
    return qpmod.QpProblem(H, g, A_con, l, u)


def tracking_cost(z, s_now, r, cfg, kin, Q_r=None, R_r=None, u_prev=None):
    """Cost of the input sequence z evaluated term by term (for checks)."""
    n, dt = cfg.n_steps, cfg.dt_mpc
    Q_r = cfg.Q0 if Q_r is None else Q_r
    R_r = cfg.R0 if R_r is None else R_r
    u_prev = np.zeros(NU) if u_prev is None else u_prev
    A, B = discretize_dynamics(dt)
    s = np.asarray(s_now, dtype=float)
    U = np.asarray(z).reshape(n, NU)
    total, prev = 0.0, u_prev
    for k in range(n):
        s = A @ s + B @ U[k]
        y = kin.y0 + kin.C @ (s - s_now) + kin.drift * dt * (k + 1)
        err = y - r.samples[k]
        du = (U[k] - prev) / dt
        total += err @ Q_r @ err + U[k] @ R_r @ U[k] + du @ cfg.W @ du
        prev = U[k]
    return float(total)


def shift_warm_start(sol, n, frac=1.0):
    """Advance a solution by ``frac`` MPC steps (0..1, linear interpolation
    between neighbouring blocks, last block repeated)."""
    z = sol.z.reshape(n, NU)
    z = ((1.0 - frac) * z + frac * np.vstack([z[1:], z[-1:]])).ravel()
    y = sol.dual.reshape(3, n, NU)
    y = ((1.0 - frac) * y + frac * np.concatenate([y[:, 1:], y[:, -1:]], axis=1)).ravel()
    return qpmod.WarmStart(z, y, sol.rho, sol.scaling)


def make_solvers(cfg):
    """(cold, warm) solver pair; converged solves skip the polish step."""
    def mk(iters):
        return qpmod.QpSolver(tol=cfg.tol, max_iters=iters, rho=cfg.rho, polish_solved=False)
    return mk(cfg.max_iters_cold), mk(cfg.max_iters_warm)


class MpcController:
    """Stateful wrapper: carries the warm start and the last applied command."""

    def __init__(self, cfg, warm_start=True, period=None):
        self.cfg = cfg
        self.period = period
        self.use_warm = warm_start
        self.warm = None
        self.u_prev = np.zeros(NU)
        self._solvers = make_solvers(cfg)
        self.last_problem = None
        self.last_solution = None

    def reset(self):
        self.warm = None
        self.u_prev = np.zeros(NU)

    def step(self, est, s_now, r, kin):
        cmd, self.warm = mpc_step(est, s_now, r, self.cfg, self.warm if self.use_warm else None,
                                  kin, self.u_prev, solvers=self._solvers,
                                  keep=self, period=self.period)
        self.u_prev = cmd.u
        return cmd


def mpc_step(est, s_now, r, cfg, warm, kin, u_prev=None, solvers=None, keep=None,
             period=None):
    """One MPC solve; returns the first input and the shifted warm start.

    ``period`` is the time until the next solve (default: one MPC step); the
    warm start is advanced by that much.
    """
    t0 = time.perf_counter()
    k_f = kalman_gain_norm(est)
    q_scale, r_scale = weight_factors(k_f, cfg.k0, cfg.epsilon_q)
    problem = build_qp(s_now, r, cfg, kin, cfg.Q0 * q_scale, cfg.R0 * r_scale, u_prev)
    cold, hot = solvers or make_solvers(cfg)
    sol = hot.solve(problem, warm) if warm is not None else cold.solve(problem)
    b = cfg.bounds
    if sol.status == qpmod.INFEASIBLE:
        u, status, next_warm = np.zeros(NU), SAFE_STOP, None
    else:
        u = np.clip(sol.z[:NU], -b.qdd_max, b.qdd_max)
        status = SOLVED if sol.status == qpmod.SOLVED else DEGRADED
        frac = 1.0 if period is None else min(period / cfg.dt_mpc, 1.0)
        next_warm = shift_warm_start(sol, cfg.n_steps, frac)
    if keep is not None:
        keep.last_problem, keep.last_solution = problem, sol
    cmd = ControlCommand(u, status, time.perf_counter() - t0, sol.iterations, k_f,
                         q_scale, r_scale)
    return cmd, next_warm
