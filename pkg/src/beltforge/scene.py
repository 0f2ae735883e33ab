"""Workspace scene: obstacle primitives, belt anchor, signed-distance queries."""

from dataclasses import dataclass, field

import numpy as np

from .belt import BeltParams
from .errors import DomainError
from .kernels import (OBS_BOX, OBS_CAPSULE, OBS_SPHERE, collision_batch,
                      point_obstacle_distance)
from .robot import Pose, RobotDescription


@dataclass(frozen=True)
class SphereObstacle:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center",
                           np.asarray(self.center, dtype=np.float64).reshape(3))
        if self.radius <= 0:
            raise DomainError("sphere obstacle radius must be > 0")

    kind = OBS_SPHERE

    def packed_row(self):
        return [*self.center, self.radius, 0.0, 0.0, 0.0]

    def to_payload(self):
        return {"type": "sphere", "center": [float(v) for v in self.center],
                "radius": float(self.radius)}


@dataclass(frozen=True)
class BoxObstacle:
    """Axis-aligned box given by center and half extents."""

    center: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center",
                           np.asarray(self.center, dtype=np.float64).reshape(3))
        object.__setattr__(self, "half_extents",
                           np.asarray(self.half_extents, dtype=np.float64).reshape(3))
        if np.any(self.half_extents <= 0):
            raise DomainError("box half extents must be > 0")

    kind = OBS_BOX

    def packed_row(self):
        return [*self.center, *self.half_extents, 0.0]

    def to_payload(self):
        return {"type": "box", "center": [float(v) for v in self.center],
                "half_extents": [float(v) for v in self.half_extents]}


@dataclass(frozen=True)
class CapsuleObstacle:
    p0: np.ndarray
    p1: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "p0", np.asarray(self.p0, dtype=np.float64).reshape(3))
        object.__setattr__(self, "p1", np.asarray(self.p1, dtype=np.float64).reshape(3))
        if self.radius <= 0:
            raise DomainError("capsule radius must be > 0")

    kind = OBS_CAPSULE

    def packed_row(self):
        return [*self.p0, *self.p1, self.radius]

    def to_payload(self):
        return {"type": "capsule", "p0": [float(v) for v in self.p0],
                "p1": [float(v) for v in self.p1], "radius": float(self.radius)}


def obstacle_from_payload(d):
    t = d.get("type")
    if t == "sphere":
        return SphereObstacle(center=np.array(d["center"]), radius=d["radius"])
    if t == "box":
        return BoxObstacle(center=np.array(d["center"]),
                           half_extents=np.array(d["half_extents"]))
    if t == "capsule":
        return CapsuleObstacle(p0=np.array(d["p0"]), p1=np.array(d["p1"]),
                               radius=d["radius"])
    raise DomainError(f"unknown obstacle type {t!r}")


@dataclass
class Scene:
    """Obstacles plus the two pulley centers and the belt anchor point."""

    obstacles: list
    pulley_a_center: np.ndarray
    pulley_b_center: np.ndarray
    belt_anchor: np.ndarray
    safety_margin: float = 0.0
    _obs_kind: np.ndarray = field(init=False, repr=False)
    _obs_data: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.pulley_a_center = np.asarray(self.pulley_a_center, dtype=np.float64).reshape(3)
        self.pulley_b_center = np.asarray(self.pulley_b_center, dtype=np.float64).reshape(3)
        self.belt_anchor = np.asarray(self.belt_anchor, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(self.pulley_a_center))
                and np.all(np.isfinite(self.pulley_b_center))
                and np.all(np.isfinite(self.belt_anchor))):
            raise DomainError("scene points must be finite")
        if self.safety_margin < 0:
            raise DomainError("safety_margin must be >= 0")
        if np.allclose(self.pulley_a_center, self.pulley_b_center):
            raise DomainError("pulley centers must be distinct")
        self._obs_kind = np.array([o.kind for o in self.obstacles], dtype=np.int64)
        if self.obstacles:
            self._obs_data = np.array([o.packed_row() for o in self.obstacles],
                                      dtype=np.float64)
        else:
            self._obs_data = np.zeros((0, 7), dtype=np.float64)

    def to_payload(self):
        return {
            "obstacles": [o.to_payload() for o in self.obstacles],
            "pulley_a_center": [float(v) for v in self.pulley_a_center],
            "pulley_b_center": [float(v) for v in self.pulley_b_center],
            "belt_anchor": [float(v) for v in self.belt_anchor],
            "safety_margin": float(self.safety_margin),
        }

    @classmethod
    def from_payload(cls, d) -> "Scene":
        return cls(obstacles=[obstacle_from_payload(o) for o in d["obstacles"]],
                   pulley_a_center=np.array(d["pulley_a_center"], dtype=np.float64),
                   pulley_b_center=np.array(d["pulley_b_center"], dtype=np.float64),
                   belt_anchor=np.array(d["belt_anchor"], dtype=np.float64),
                   safety_margin=d.get("safety_margin", 0.0))


def belt_displacement(scene: Scene, params: BeltParams, ee: Pose) -> float:
    """Belt stretch past rest length from the anchor; 0 when slack."""
    reach = float(np.linalg.norm(ee.position - scene.belt_anchor))
    return max(0.0, reach - params.rest_length)


def point_signed_distance(scene: Scene, point) -> float:
    """Smallest signed distance from a bare point to any scene obstacle."""
    p = np.asarray(point, dtype=np.float64).reshape(3)
    best = np.inf
    normal = np.empty(3)
    for i in range(len(scene.obstacles)):
        d = point_obstacle_distance(p, scene._obs_kind[i], scene._obs_data[i], normal)
        best = min(best, d)
    return best


@dataclass(frozen=True)
class SignedDistanceResult:
    distance: float
    sphere_index: int
    obstacle_index: int
    direction: np.ndarray  # unit vector pointing from obstacle toward the sphere


def signed_distance(robot: RobotDescription, scene: Scene, q) -> SignedDistanceResult:
    """Minimum signed distance over all (robot sphere, obstacle) pairs.

    Positive when clear, negative penetration depth when overlapping. With no
    obstacles the distance is +inf and the indices are -1.
    """
    q = robot.check_config(q)
    if not scene.obstacles:
        return SignedDistanceResult(np.inf, -1, -1, np.zeros(3))
    sd, normals, _, _ = collision_batch(
        robot.dh, q.reshape(1, 6), robot._sph_frame, robot._sph_local,
        robot._sph_radius, scene._obs_kind, scene._obs_data)
    flat = int(np.argmin(sd[0]))
    s, o = divmod(flat, sd.shape[2])
    return SignedDistanceResult(distance=float(sd[0, s, o]), sphere_index=s,
                                obstacle_index=o,
                                direction=np.array(normals[0, s, o]))
