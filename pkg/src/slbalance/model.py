"""Geometric and mass model of the human wearing two supernumerary arms.

Frames: world is z-up, x points forward from the participant at trial
start, y to the participant's left. The trunk frame has its origin at the
hip midpoint; it coincides with the world frame for an upright trunk.

Each supernumerary limb (SL) is reduced to four active joints::

    q[0]  shoulder yaw    about trunk z
    q[1]  shoulder pitch  about the (yawed) y axis
    q[2]  shoulder roll   about the upper-arm axis
    q[3]  elbow pitch     about the rolled y axis, located at the elbow

At q = 0 both links point along the trunk's backward horizontal axis (-x).
Segment masses are lumped at the midpoints of the tracked joints, so the
arm CoM is a fixed linear combination of shoulder, elbow and wrist.
"""
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateModelError, InvalidInputError

GRAVITY = 9.81


def skew(v):
    """Cross-product matrix: skew(a) @ b == a x b."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def make_transform(rotation=None, translation=None):
    """4x4 homogeneous transform from a rotation matrix and a translation."""
    T = np.eye(4)
    if rotation is not None:
        T[:3, :3] = rotation
    if translation is not None:
        T[:3, 3] = translation
    return T


def is_rotation(R, atol=1e-9):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return np.allclose(R.T @ R, np.eye(3), atol=atol) and abs(np.linalg.det(R) - 1.0) < atol


# ---------------------------------------------------------------------------
# Parameter types


@dataclass(frozen=True)
class AnthropometricParams:
    """Mass distribution of the human (plus fixed backpack components).

    Defaults follow segment tables for a 74 kg, 1.74 m adult; the backpack
    mass excludes the two arms (30 kg total minus 2 x 8 kg).
    """

    body_mass: float = 74.0
    body_height: float = 1.74
    trunk_mass_fraction: float = 0.497
    legs_mass_fraction: float = 0.32
    trunk_com_ratio: float = 0.5
    trunk_length: float = 0.5
    backpack_mass: float = 14.0
    backpack_com_offset: tuple = (-0.03, 0.0, 0.45)
    legs_com_ratio: float = 0.53

    def __post_init__(self):
        for name in ("body_mass", "body_height", "trunk_length"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be > 0")
        for name in ("trunk_mass_fraction", "legs_mass_fraction", "trunk_com_ratio",
                     "legs_com_ratio"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise InvalidInputError(f"{name} must lie in (0, 1), got {v}")
        if self.trunk_mass_fraction + self.legs_mass_fraction > 1.0:
            raise InvalidInputError("trunk_mass_fraction + legs_mass_fraction must be <= 1")
        if not self.backpack_mass >= 0:
            raise InvalidInputError("backpack_mass must be >= 0")
        offset = np.asarray(self.backpack_com_offset, dtype=float)
        if offset.shape != (3,) or not np.all(np.isfinite(offset)):
            raise InvalidInputError("backpack_com_offset must be a finite 3-vector")
        object.__setattr__(self, "backpack_com_offset", tuple(float(v) for v in offset))

    @property
    def trunk_mass(self):
        return self.body_mass * self.trunk_mass_fraction

    @property
    def legs_mass(self):
        return self.body_mass * self.legs_mass_fraction

    @property
    def total_mass(self):
        return self.trunk_mass + self.legs_mass + self.backpack_mass


@dataclass(frozen=True)
class SlArmModel:
    """Kinematic/mass description of one supernumerary arm (4 active joints)."""

    mount_pose: np.ndarray = field(default_factory=lambda: make_transform(
        translation=(-0.10, 0.2, 0.5)))
    link_lengths: tuple = (0.31, 0.31)
    link_masses: tuple = (4.0, 4.0)
    joint_limits: np.ndarray = field(default_factory=lambda: np.array(
        # pitch: +-2.25 rad about the hanging pose (zero points backward)
        [[-np.pi, np.pi], [-np.pi / 2 - 2.25, -np.pi / 2 + 2.25], [-np.pi, np.pi], [-2.5, 2.5]]))
    velocity_limits: np.ndarray = field(default_factory=lambda: np.full(4, 1.0))
    acceleration_limits: np.ndarray = field(default_factory=lambda: np.full(4, 4.0))

    def __post_init__(self):
        mount = np.asarray(self.mount_pose, dtype=float)
        if mount.shape != (4, 4) or not is_rotation(mount[:3, :3]):
            raise InvalidInputError("mount_pose must be a rigid 4x4 transform")
        lengths = tuple(float(v) for v in self.link_lengths)
        masses = tuple(float(v) for v in self.link_masses)
        if len(lengths) != 2 or min(lengths) <= 0:
            raise InvalidInputError("link_lengths must be two positive lengths")
        if len(masses) != 2 or min(masses) < 0:
            raise InvalidInputError("link_masses must be two non-negative masses")
        lim = np.asarray(self.joint_limits, dtype=float)
        if lim.shape != (4, 2) or not np.all(lim[:, 0] < lim[:, 1]):
            raise InvalidInputError("joint_limits must be 4 (lower, upper) pairs, lower < upper")
        vel = np.asarray(self.velocity_limits, dtype=float)
        acc = np.asarray(self.acceleration_limits, dtype=float)
        if vel.shape != (4,) or acc.shape != (4,) or np.any(vel <= 0) or np.any(acc <= 0):
            raise InvalidInputError("velocity/acceleration limits must be 4 positive values")
        object.__setattr__(self, "mount_pose", mount)
        object.__setattr__(self, "link_lengths", lengths)
        object.__setattr__(self, "link_masses", masses)
        object.__setattr__(self, "joint_limits", lim)
        object.__setattr__(self, "velocity_limits", vel)
        object.__setattr__(self, "acceleration_limits", acc)

    @property
    def mass(self):
        return sum(self.link_masses)

    @property
    def reach(self):
        return sum(self.link_lengths)

    def mirrored(self):
        """Same arm mounted on the other side of the sagittal plane."""
        M = np.diag([1.0, -1.0, 1.0, 1.0])
        return SlArmModel(
            mount_pose=M @ self.mount_pose @ M,
            link_lengths=self.link_lengths,
            link_masses=self.link_masses,
            joint_limits=self.joint_limits.copy(),
            velocity_limits=self.velocity_limits.copy(),
            acceleration_limits=self.acceleration_limits.copy(),
        )


@dataclass(frozen=True)
class HumanKinematicState:
    hip_left: np.ndarray
    hip_right: np.ndarray
    trunk_orientation: np.ndarray = field(default_factory=lambda: np.eye(3))
    treadmill_offset: float = 0.0

    def __post_init__(self):
        for name in ("hip_left", "hip_right"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise InvalidInputError(f"{name} must be a finite 3-vector")
            object.__setattr__(self, name, v)
        R = np.asarray(self.trunk_orientation, dtype=float)
        if not is_rotation(R):
            raise InvalidInputError("trunk_orientation must be a proper rotation")
        object.__setattr__(self, "trunk_orientation", R)

    @property
    def hip_center(self):
        return 0.5 * (self.hip_left + self.hip_right)

    def trunk_pose(self):
        """Trunk frame: origin at the hip midpoint, axes from trunk_orientation."""
        return make_transform(self.trunk_orientation, self.hip_center)


@dataclass
class SystemComBreakdown:
    human_com: np.ndarray
    sl_com: list
    total_com: np.ndarray
    total_com_xy: np.ndarray
    human_mass: float
    sl_masses: list
    segment_masses: np.ndarray  # (n_arms, 2): upper-arm, forearm
    component_masses: dict

    @property
    def total_mass(self):
        return self.human_mass + sum(self.sl_masses)

    @property
    def sl_mass(self):
        return sum(self.sl_masses)


class ArmPoints(NamedTuple):
    shoulder: np.ndarray
    elbow: np.ndarray
    wrist: np.ndarray
    within_limits: bool


# ---------------------------------------------------------------------------
# Human


def sup_center(hip_left, hip_right):
    """Support center: midpoint of the hip projections on the ground plane."""
    hl = np.asarray(hip_left, dtype=float)
    hr = np.asarray(hip_right, dtype=float)
    if not (np.all(np.isfinite(hl)) and np.all(np.isfinite(hr))):
        raise InvalidInputError("hip positions must be finite")
    return 0.5 * (hl[:2] + hr[:2])


def _human_segments(state, anthro):
    """(mass, CoM) for legs, trunk and the backpack folded into the trunk."""
    R = state.trunk_orientation
    hip = state.hip_center
    sup = sup_center(state.hip_left, state.hip_right)
    legs = np.array([sup[0], sup[1], anthro.legs_com_ratio * hip[2]])
    trunk = hip + R @ np.array([0.0, 0.0, anthro.trunk_com_ratio * anthro.trunk_length])
    parts = [(anthro.legs_mass, legs), (anthro.trunk_mass, trunk)]
    if anthro.backpack_mass > 0:
        parts.append((anthro.backpack_mass, hip + R @ np.asarray(anthro.backpack_com_offset)))
    return parts


def human_com(state, anthro):
    """Human CoM (legs + trunk + fixed backpack components), world frame."""
    parts = _human_segments(state, anthro)
    m = sum(p[0] for p in parts)
    return sum(mi * ci for mi, ci in parts) / m


# ---------------------------------------------------------------------------
# Supernumerary arm


def _arm_frames(q, arm, trunk_pose):
    base = np.asarray(trunk_pose, dtype=float) @ arm.mount_pose
    Rb = base[:3, :3]
    Rz = rot_z(q[0])
    Rzy = Rz @ rot_y(q[1])
    R1 = Rzy @ rot_x(q[2])
    R2 = R1 @ rot_y(q[3])
    return base[:3, 3].copy(), Rb, Rz, Rzy, R1, R2


def within_joint_limits(q, arm):
    q = np.asarray(q, dtype=float)
    lim = arm.joint_limits
    return bool(np.all(q >= lim[:, 0]) and np.all(q <= lim[:, 1]))


def sl_forward_kinematics(q, arm, trunk_pose):
    """Shoulder, elbow and wrist positions (world) of one arm.

    Out-of-limit joint values are still evaluated; ``within_limits`` flags them.
    """
    q = np.asarray(q, dtype=float)
    s, Rb, _, _, R1, R2 = _arm_frames(q, arm, trunk_pose)
    l1, l2 = arm.link_lengths
    e = s - l1 * (Rb @ R1[:, 0])
    w = e - l2 * (Rb @ R2[:, 0])
    return ArmPoints(s, e, w, within_joint_limits(q, arm))


def sl_task_jacobian(q, arm, trunk_pose):
    """6x4 Jacobian of [elbow; wrist] positions w.r.t. q at fixed trunk pose."""
    q = np.asarray(q, dtype=float)
    s, Rb, Rz, Rzy, R1, R2 = _arm_frames(q, arm, trunk_pose)
    l1, l2 = arm.link_lengths
    e = s - l1 * (Rb @ R1[:, 0])
    w = e - l2 * (Rb @ R2[:, 0])
    # joint axes as columns; axis x r == -skew(r) @ axis
    axes = np.column_stack((Rb[:, 2], Rb @ Rz[:, 1], Rb @ Rzy[:, 0], Rb @ R1[:, 1]))
    J = np.zeros((6, 4))
    J[:3, :3] = -skew(e - s) @ axes[:, :3]
    J[3:, :3] = -skew(w - s) @ axes[:, :3]
    J[3:, 3] = -skew(w - e) @ axes[:, 3]
    return J


def sl_com(q, arm, trunk_pose):
    """CoM of one arm with segment masses at the tracked-joint midpoints."""
    s, e, w, _ = sl_forward_kinematics(q, arm, trunk_pose)
    m1, m2 = arm.link_masses
    m = m1 + m2
    if m == 0:
        return 0.5 * (s + w), 0.0
    return (m1 * 0.5 * (s + e) + m2 * 0.5 * (e + w)) / m, m


def system_com(human, anthro, arms: Sequence[SlArmModel] = (), qs: Sequence = ()):
    """Barycenter of the human and any worn arms.

    ``arms`` may be empty (no arms worn); otherwise ``qs`` holds one joint
    vector per arm.
    """
    if len(arms) != len(qs):
        raise InvalidInputError("one joint vector per arm is required")
    h_com = human_com(human, anthro)
    h_mass = anthro.total_mass
    pose = human.trunk_pose()
    sl_coms, sl_masses = [], []
    for arm, q in zip(arms, qs):
        c, m = sl_com(q, arm, pose)
        sl_coms.append(c)
        sl_masses.append(m)
    total_mass = h_mass + sum(sl_masses)
    total = h_mass * h_com
    for c, m in zip(sl_coms, sl_masses):
        total = total + m * c
    total = total / total_mass
    comp = {
        "trunk": anthro.trunk_mass,
        "legs": anthro.legs_mass,
        "backpack": anthro.backpack_mass,
    }
    for j, arm in enumerate(arms):
        comp[f"arm{j + 1}_upper"] = arm.link_masses[0]
        comp[f"arm{j + 1}_fore"] = arm.link_masses[1]
    seg = np.array([arm.link_masses for arm in arms], dtype=float).reshape(len(arms), 2)
    return SystemComBreakdown(
        human_com=h_com,
        sl_com=sl_coms,
        total_com=total,
        total_com_xy=total[:2].copy(),
        human_mass=h_mass,
        sl_masses=sl_masses,
        segment_masses=seg,
        component_masses=comp,
    )


# ---------------------------------------------------------------------------
# Maps used by the planner and the MPC


def lumped_com_maps(segment_masses):
    """Linear maps from tracked-point xy velocities to SL-CoM xy velocity.

    Returns ``(J_lump, J_sh)``: J_lump is 2 x 8 acting on
    [elbow1, wrist1, elbow2, wrist2] (xy each); J_sh is 2 x 4 acting on
    [shoulder1, shoulder2] (xy each).
    """
    seg = np.asarray(segment_masses, dtype=float).reshape(-1, 2)
    m_sl = seg.sum()
    if m_sl <= 0:
        raise DegenerateModelError("total SL mass is zero")
    I2 = np.eye(2)
    J_lump = np.zeros((2, 4 * len(seg)))
    J_sh = np.zeros((2, 2 * len(seg)))
    for j, (m1, m2) in enumerate(seg):
        J_sh[:, 2 * j:2 * j + 2] = I2 * m1 / (2 * m_sl)
        J_lump[:, 4 * j:4 * j + 2] = I2 * (m1 + m2) / (2 * m_sl)
        J_lump[:, 4 * j + 2:4 * j + 4] = I2 * m2 / (2 * m_sl)
    return J_lump, J_sh


def rigid_point_velocity(shoulders, shoulder_velocities, points):
    """Velocity of trunk-fixed points inferred from the two shoulder velocities.

    Only the angular-velocity component normal to the shoulder axis is
    observable from two points; rotation about that axis is taken as zero.
    """
    s1, s2 = (np.asarray(v, dtype=float) for v in shoulders)
    v1, v2 = (np.asarray(v, dtype=float) for v in shoulder_velocities)
    ds, dv = s2 - s1, v2 - v1
    nrm2 = ds @ ds
    omega = skew(ds) @ dv / nrm2 if nrm2 > 0 else np.zeros(3)
    mid, vmid = 0.5 * (s1 + s2), 0.5 * (v1 + v2)
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return vmid + (pts - mid) @ skew(omega).T


def task_vector(qs, qds, arms, trunk_pose):
    """24-vector y = [e1, de1, w1, dw1, e2, de2, w2, dw2] at fixed trunk pose."""
    y = np.zeros(12 * len(arms))
    for j, (q, qd, arm) in enumerate(zip(qs, qds, arms)):
        _, e, w, _ = sl_forward_kinematics(q, arm, trunk_pose)
        J = sl_task_jacobian(q, arm, trunk_pose)
        v = J @ np.asarray(qd, dtype=float)
        y[12 * j:12 * j + 12] = np.concatenate([e, v[:3], w, v[3:]])
    return y
