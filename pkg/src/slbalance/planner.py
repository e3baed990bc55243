"""CoM planning: optimal CoM velocity and its task-space reference."""
from dataclasses import dataclass

import numpy as np

from . import estimator as lqe
from .errors import DegenerateModelError, InvalidInputError
from .model import lumped_com_maps


@dataclass(frozen=True)
class PlannerWeights:
    gamma: float = 1.0
    zeta: float = 0.005
    step: float = 0.01
    v_max: float = 0.25

    def __post_init__(self):
        for name in ("gamma", "zeta", "step", "v_max"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"planner weight {name} must be > 0")


@dataclass(frozen=True)
class ComCommand:
    p_star_dot: np.ndarray
    value: float


@dataclass(frozen=True)
class ReferenceTrajectory:
    times: np.ndarray  # (n,) seconds after the current tick
    samples: np.ndarray  # (n, 24)
    v_sl: np.ndarray = None  # (n, 2) requested SL-CoM velocity

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 2 or samples.shape[1] != 24:
            raise InvalidInputError("reference samples must be (n, 24)")
        if len(self.times) != len(samples):
            raise InvalidInputError("reference times and samples differ in length")


# positions / velocities of the 24-vector y = [e1, de1, w1, dw1, e2, de2, w2, dw2]
Y_POS = np.r_[0:3, 6:9, 12:15, 18:21]
Y_VEL = Y_POS + 3


def com_cost(p, p_dot, p_sup, weights):
    """Instability cost: CoM shift from the support center plus CoM-velocity effort."""
    d = np.asarray(p, dtype=float) - np.asarray(p_sup, dtype=float)
    v = np.asarray(p_dot, dtype=float)
    return float(weights.gamma * d @ d + weights.zeta * v @ v)


def optimal_com_velocity(p_hat, p_sup_hat, weights, p_dot_hat=None):
    """Closed-form minimizer of the one-step surrogate, norm-clipped to v_max.

    surrogate(v) = gamma*|p + v*step - p_sup|^2 + zeta*|v|^2
    """
    g, z, dt = weights.gamma, weights.zeta, weights.step
    d = np.asarray(p_hat, dtype=float) - np.asarray(p_sup_hat, dtype=float)
    v = -g * dt * d / (g * dt * dt + z)
    n = np.linalg.norm(v)
    if n > weights.v_max:
        v = v * (weights.v_max / n)
    p_dot = np.zeros(2) if p_dot_hat is None else p_dot_hat
    return ComCommand(v, com_cost(p_hat, p_dot, p_sup_hat, weights))


def descend_com_velocity(p_hat, p_sup_hat, weights, lr=None, tol=1e-12, max_iters=100000):
    """Plain gradient descent on the same surrogate (reference path)."""
    g, z, dt = weights.gamma, weights.zeta, weights.step
    d = np.asarray(p_hat, dtype=float) - np.asarray(p_sup_hat, dtype=float)
    curvature = 2.0 * (g * dt * dt + z)
    lr = 1.0 / curvature if lr is None else lr
    v = np.zeros(2)
    for _ in range(max_iters):
        grad = 2.0 * g * dt * (d + v * dt) + 2.0 * z * v
        v = v - lr * grad
        if np.linalg.norm(grad) < tol:
            break
    n = np.linalg.norm(v)
    if n > weights.v_max:
        v = v * (weights.v_max / n)
    return v


def _clamp_ball(points, centers, radius):
    rel = points - centers
    r = np.linalg.norm(rel, axis=-1, keepdims=True)
    scale = np.where(r > radius, radius / np.maximum(r, 1e-300), 1.0)
    return centers + rel * scale


def reference_from_com_command(cmd, x_hat_horizon, masses, current_y, n_steps, dt,
                               arms=None):
    """Task-space reference for both elbows and wrists over the MPC horizon.

    ``x_hat_horizon`` holds predicted 48-vectors at the n_steps sample times
    (``dt`` apart, first sample ``dt`` after now). ``masses`` is the
    SystemComBreakdown of the current configuration. Positions integrate the
    velocity samples (trapezoid) from ``current_y``; when ``arms`` are given,
    elbows are clamped to the l1 ball and wrists to the l1+l2 ball around the
    predicted shoulders.
    """
    n_steps = int(n_steps)
    xs = np.asarray(x_hat_horizon, dtype=float)
    if xs.shape != (n_steps, lqe.STATE_DIM):
        raise InvalidInputError(f"predictions must be ({n_steps}, 48), got {xs.shape}")
    current_y = np.asarray(current_y, dtype=float)
    m_sl = masses.sl_mass
    if m_sl <= 0:
        raise DegenerateModelError("reference needs a nonzero SL mass")
    m_tot = masses.total_mass
    m_h = masses.human_mass
    J_lump, J_sh = lumped_com_maps(masses.segment_masses)
    J_pinv = J_lump.T @ np.linalg.inv(J_lump @ J_lump.T)

    s_pos = [xs[:, lqe.arm_slices(j)[0]][:, 0:3] for j in range(2)]
    s_vel = [xs[:, lqe.arm_slices(j)[1]][:, 0:3] for j in range(2)]
    v_sl = (m_tot * cmd.p_star_dot[None, :] - m_h * xs[:, lqe.DH]) / m_sl
    sh_xy = np.concatenate([s_vel[0][:, :2], s_vel[1][:, :2]], axis=1)
    ydot_xy = (v_sl - sh_xy @ J_sh.T) @ J_pinv.T  # (n, 8): e1 w1 e2 w2 (xy)

    vel = np.zeros((n_steps, 12))  # e1 w1 e2 w2 (xyz)
    for i in range(4):
        vel[:, 3 * i:3 * i + 2] = ydot_xy[:, 2 * i:2 * i + 2]
    pos0 = current_y[Y_POS]
    # trapezoid from now: the velocity at t=0 is taken equal to the first sample
    prev = np.vstack([vel[:1], vel[:-1]])
    pos = pos0[None, :] + np.cumsum(0.5 * dt * (prev + vel), axis=0)
    if arms is not None:
        for j, arm in enumerate(arms):
            l1, l2 = arm.link_lengths
            e_sl = slice(6 * j, 6 * j + 3)
            w_sl = slice(6 * j + 3, 6 * j + 6)
            pos[:, e_sl] = _clamp_ball(pos[:, e_sl], s_pos[j], l1)
            pos[:, w_sl] = _clamp_ball(pos[:, w_sl], s_pos[j], l1 + l2)

    samples = np.zeros((n_steps, 24))
    samples[:, Y_POS] = pos
    samples[:, Y_VEL] = vel
    times = dt * np.arange(1, n_steps + 1)
    return ReferenceTrajectory(times, samples, v_sl)
