"""Serial 6-DOF kinematics: poses, robot description, FK and Jacobians.

Joint configurations are plain float64 arrays of length 6 throughout;
``RobotDescription.check_config`` enforces the joint limits. Kinematic
parameters follow the standard DH convention, one (a, d, alpha,
theta_offset) row per joint.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .kernels import dh_frames, point_jacobian_frames

TWO_PI = 2.0 * math.pi
GIMBAL_TOL = 1e-9


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]. Already-wrapped values pass through bit-identically."""
    if -math.pi < a <= math.pi:
        return a
    w = a - TWO_PI * math.floor((a + math.pi) / TWO_PI)
    if w <= -math.pi:
        w = math.pi
    return w


@dataclass(frozen=True)
class Pose:
    """End-effector pose: position (m) and roll/pitch/yaw (rad, wrapped)."""

    position: np.ndarray
    rpy: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        ang = np.asarray(self.rpy, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(ang))):
            raise DomainError("pose entries must be finite")
        ang = np.array([wrap_angle(v) for v in ang])
        if abs(abs(ang[1]) - math.pi / 2) < GIMBAL_TOL:
            raise DomainError(
                f"gimbal-degenerate pose rejected: |pitch| = pi/2 (pitch={ang[1]})")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "rpy", ang)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.rpy])

    @classmethod
    def from_vector(cls, v) -> "Pose":
        v = np.asarray(v, dtype=np.float64).reshape(6)
        return cls(position=v[:3], rpy=v[3:])

    def to_payload(self):
        return {"xyz": [float(v) for v in self.position],
                "rpy": [float(v) for v in self.rpy]}

    @classmethod
    def from_payload(cls, d) -> "Pose":
        return cls(position=np.array(d["xyz"], dtype=np.float64),
                   rpy=np.array(d["rpy"], dtype=np.float64))


@dataclass(frozen=True)
class CollisionSphere:
    """A sphere rigidly attached to a link frame (0 = base, 6 = flange)."""

    frame: int
    offset: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "offset",
                           np.asarray(self.offset, dtype=np.float64).reshape(3))
        if self.radius <= 0:
            raise DomainError(f"sphere radius must be > 0, got {self.radius}")
        if not (0 <= self.frame <= 6):
            raise DomainError(f"sphere frame index must be in 0..6, got {self.frame}")


@dataclass
class RobotDescription:
    """DH table (6 rows of a, d, alpha, theta_offset), limits, collision spheres."""

    dh: np.ndarray
    joint_lower: np.ndarray
    joint_upper: np.ndarray
    spheres: list
    name: str = "robot"
    _sph_frame: np.ndarray = field(init=False, repr=False)
    _sph_local: np.ndarray = field(init=False, repr=False)
    _sph_radius: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.dh = np.asarray(self.dh, dtype=np.float64)
        if self.dh.shape != (6, 4):
            raise DomainError(f"dh table must be 6x4, got {self.dh.shape}")
        self.joint_lower = np.asarray(self.joint_lower, dtype=np.float64).reshape(6)
        self.joint_upper = np.asarray(self.joint_upper, dtype=np.float64).reshape(6)
        if np.any(self.joint_lower >= self.joint_upper):
            raise DomainError("joint_lower must be strictly below joint_upper")
        if not self.spheres:
            raise DomainError("robot needs at least one collision sphere")
        self._sph_frame = np.array([s.frame for s in self.spheres], dtype=np.int64)
        self._sph_local = np.array([s.offset for s in self.spheres], dtype=np.float64)
        self._sph_radius = np.array([s.radius for s in self.spheres], dtype=np.float64)

    @property
    def n_joints(self) -> int:
        return 6

    def check_config(self, q, name="q") -> np.ndarray:
        q = np.asarray(q, dtype=np.float64).reshape(6)
        if not np.all(np.isfinite(q)):
            raise DomainError(f"{name} must be finite")
        if np.any(q < self.joint_lower) or np.any(q > self.joint_upper):
            bad = [i for i in range(6)
                   if q[i] < self.joint_lower[i] or q[i] > self.joint_upper[i]]
            raise DomainError(f"{name} outside joint limits at joints {bad}")
        return q

    def to_payload(self):
        return {
            "name": self.name,
            "dh": [[float(v) for v in row] for row in self.dh],
            "joint_lower": [float(v) for v in self.joint_lower],
            "joint_upper": [float(v) for v in self.joint_upper],
            "spheres": [{"frame": int(s.frame),
                         "offset": [float(v) for v in s.offset],
                         "radius": float(s.radius)} for s in self.spheres],
        }

    @classmethod
    def from_payload(cls, d) -> "RobotDescription":
        spheres = [CollisionSphere(frame=s["frame"],
                                   offset=np.array(s["offset"], dtype=np.float64),
                                   radius=s["radius"]) for s in d["spheres"]]
        return cls(dh=np.array(d["dh"], dtype=np.float64),
                   joint_lower=np.array(d["joint_lower"], dtype=np.float64),
                   joint_upper=np.array(d["joint_upper"], dtype=np.float64),
                   spheres=spheres, name=d.get("name", "robot"))


def link_frames(robot: RobotDescription, q) -> np.ndarray:
    """All 7 link-frame transforms in the base frame (validated input)."""
    q = robot.check_config(q)
    return dh_frames(robot.dh, q)


def rotation_to_rpy(rot) -> np.ndarray:
    """Roll/pitch/yaw of a rotation matrix (R = Rz(yaw) Ry(pitch) Rx(roll))."""
    cp = math.hypot(rot[0, 0], rot[1, 0])
    pitch = math.atan2(-rot[2, 0], cp)
    yaw = math.atan2(rot[1, 0], rot[0, 0])
    roll = math.atan2(rot[2, 1], rot[2, 2])
    return np.array([roll, pitch, yaw])


def pose_from_transform(transform) -> Pose:
    return Pose(position=np.array(transform[:3, 3]),
                rpy=rotation_to_rpy(transform[:3, :3]))


def forward_kinematics(robot: RobotDescription, q) -> Pose:
    """End-effector pose of the serial chain (deterministic, wrapped angles)."""
    frames = link_frames(robot, q)
    return pose_from_transform(frames[6])


def jacobian_position(robot: RobotDescription, q) -> np.ndarray:
    """3x6 matrix of d(ee position)/dq, geometric-Jacobian position rows."""
    frames = link_frames(robot, q)
    out = np.empty((3, 6))
    point_jacobian_frames(frames, 6, frames[6, :3, 3], out)
    return out
