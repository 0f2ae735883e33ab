"""Path correction algebra and virtual-demonstration synthesis.

A corrected path is an offline path plus a per-waypoint delta. Virtual
demonstrations are built by approximating the offline path with a Chebyshev
polynomial per pose dimension (optionally jittering the coefficients) and
re-adding a pure correction extracted from a real corrected path.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev

from .errors import ConfigError, DomainError
from .planner import Path
from .robot import Pose, wrap_angle

PROVENANCES = ("human", "synthetic", "virtual")


@dataclass
class CorrectionDelta:
    """Per-waypoint pose offsets: positions in m, orientation deltas in rad."""

    position: np.ndarray  # (T+1, 3)
    rpy: np.ndarray       # (T+1, 3)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.rpy = np.asarray(self.rpy, dtype=np.float64)
        if self.position.shape != self.rpy.shape or self.position.ndim != 2 \
                or self.position.shape[1] != 3:
            raise DomainError("correction arrays must both be (T+1, 3)")
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.rpy))):
            raise DomainError("correction entries must be finite")

    def __len__(self):
        return self.position.shape[0]

    @classmethod
    def zero(cls, length):
        return cls(np.zeros((length, 3)), np.zeros((length, 3)))

    def to_payload(self):
        return {"position": [[float(v) for v in row] for row in self.position],
                "rpy": [[float(v) for v in row] for row in self.rpy]}

    @classmethod
    def from_payload(cls, d):
        return cls(np.array(d["position"], dtype=np.float64),
                   np.array(d["rpy"], dtype=np.float64))


@dataclass
class CorrectedPath:
    """A corrected waypoint path: base + delta, with provenance."""

    poses: list
    dt: float
    provenance: str
    delta: CorrectionDelta
    base_id: str = None

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise DomainError(f"provenance must be one of {PROVENANCES}")
        if len(self.delta) != len(self.poses):
            raise DomainError("delta length must match pose count")
        if self.dt <= 0:
            raise DomainError("dt must be > 0")

    def __len__(self):
        return len(self.poses)

    def positions(self):
        return np.array([p.position for p in self.poses])

    def as_path(self) -> Path:
        return Path(poses=list(self.poses), dt=self.dt)

    def to_payload(self):
        return {"kind": "corrected_path",
                "base_id": self.base_id,
                "provenance": self.provenance,
                "dt": float(self.dt),
                "waypoints": [{"pose": p.to_payload()} for p in self.poses],
                "delta": self.delta.to_payload()}

    @classmethod
    def from_payload(cls, d):
        return cls(poses=[Pose.from_payload(w["pose"]) for w in d["waypoints"]],
                   dt=d["dt"], provenance=d["provenance"],
                   delta=CorrectionDelta.from_payload(d["delta"]),
                   base_id=d.get("base_id"))


def extract_correction(offline: Path, corrected) -> CorrectionDelta:
    """Pure correction: corrected minus offline, angles differenced on the circle."""
    if len(corrected.poses) != len(offline.poses):
        raise DomainError(
            f"length mismatch: offline {len(offline.poses)} vs "
            f"corrected {len(corrected.poses)}")
    dpos = np.array([c.position - o.position
                     for c, o in zip(corrected.poses, offline.poses)])
    drpy = np.array([[wrap_angle(ca - oa) for ca, oa in zip(c.rpy, o.rpy)]
                     for c, o in zip(corrected.poses, offline.poses)])
    return CorrectionDelta(dpos, drpy)


def apply_correction(offline: Path, delta: CorrectionDelta, provenance: str,
                     base_id=None) -> CorrectedPath:
    """Offline path plus delta; orientations renormalized to (-pi, pi]."""
    if len(delta) != len(offline.poses):
        raise DomainError(
            f"length mismatch: offline {len(offline.poses)} vs delta {len(delta)}")
    poses = [Pose(position=p.position + dp, rpy=p.rpy + dr)
             for p, dp, dr in zip(offline.poses, delta.position, delta.rpy)]
    return CorrectedPath(poses=poses, dt=offline.dt, provenance=provenance,
                         delta=delta, base_id=base_id)


@dataclass
class PolyFit:
    """Chebyshev least-squares fit of a path, one coefficient row per dim."""

    coef: np.ndarray   # (6, degree+1), Chebyshev basis on domain [0, 1]
    degree: int
    dt: float

    def __post_init__(self):
        self.coef = np.asarray(self.coef, dtype=np.float64)
        if self.coef.shape != (6, self.degree + 1):
            raise DomainError("coefficient block must be (6, degree+1)")
        if not np.all(np.isfinite(self.coef)):
            raise DomainError("coefficients must be finite")


def fit_polynomial(path, degree: int) -> PolyFit:
    """Least-squares Chebyshev fit per pose dimension over normalized index."""
    n = len(path.poses)
    if degree + 1 > n:
        raise DomainError(
            f"degree {degree} needs at least {degree + 1} waypoints, path has {n}")
    s = np.linspace(0.0, 1.0, n)
    mat = np.array([p.to_vector() for p in path.poses])
    mat[:, 3:] = np.unwrap(mat[:, 3:], axis=0)  # keep angle columns fit-friendly
    coef = np.empty((6, degree + 1))
    for dim in range(6):
        fit = chebyshev.Chebyshev.fit(s, mat[:, dim], deg=degree, domain=[0.0, 1.0])
        coef[dim] = fit.coef
    return PolyFit(coef=coef, degree=degree, dt=path.dt)


def sample_polynomial(fit: PolyFit, count: int) -> Path:
    """Evaluate the fit at count+1 normalized indices; pose-only path."""
    s = np.linspace(0.0, 1.0, count + 1)
    vals = np.empty((count + 1, 6))
    for dim in range(6):
        cheb = chebyshev.Chebyshev(fit.coef[dim], domain=[0.0, 1.0])
        vals[:, dim] = cheb(s)
    poses = [Pose(position=v[:3], rpy=v[3:]) for v in vals]
    return Path(poses=poses, dt=fit.dt)


def make_virtual(offline, correction: CorrectionDelta, degree: int = 7,
                 jitter: float = 0.0, seed: int = 0) -> CorrectedPath:
    """Virtual corrected path: (jittered) polynomial approximation + correction.

    With jitter=0 the result is exactly the approximation plus the pure
    correction. Jitter adds seeded Gaussian noise of the given scale to the
    position-dimension Chebyshev coefficients (orientations are left at the
    plain approximation, mirroring position-only correction), which is how
    one correction yields many distinct virtual demonstrations.
    """
    if len(correction) != len(offline.poses):
        raise DomainError("correction length must match the offline path")
    fit = fit_polynomial(offline, degree)
    if jitter > 0.0:
        rng = np.random.default_rng(seed)
        coef = fit.coef.copy()
        coef[:3] += jitter * rng.standard_normal(coef[:3].shape)
        fit = PolyFit(coef=coef, degree=fit.degree, dt=fit.dt)
    approx = sample_polynomial(fit, len(offline.poses) - 1)
    virtual = apply_correction(approx, correction, provenance="virtual")
    # The stored delta is relative to the original offline path, keeping the
    # corrected-path invariant pose = base + delta.
    return CorrectedPath(poses=virtual.poses, dt=offline.dt, provenance="virtual",
                         delta=extract_correction(offline, virtual))


def _pinned_window(n, center, width):
    """Gaussian window with endpoints pinned to exactly zero, peak exactly 1."""
    t = np.arange(n, dtype=np.float64)
    win = np.exp(-0.5 * ((t - center) / width) ** 2)
    ramp = win[0] + (t / (n - 1)) * (win[-1] - win[0])
    win = win - ramp
    peak = win[int(round(center))] if 0 <= round(center) < n else win.max()
    if peak <= 0:
        raise ConfigError("window degenerate: center too close to an endpoint")
    return win / peak


def synthesize_correction(offline, scenario: dict, seed: int = 0) -> CorrectedPath:
    """Scripted stand-in for a hand-guided correction session.

    Scenario library: ``bump`` (pinned Gaussian-window offset), ``drift``
    (offset ramping linearly from zero at the start), ``waypoint_drag``
    (a single waypoint displaced, blended into neighbors). Bump and drag
    leave both endpoints untouched.
    """
    n = len(offline.poses)
    kind = scenario.get("type")
    dpos = np.zeros((n, 3))
    if kind == "bump":
        center = float(scenario.get("center", (n - 1) / 2))
        width = float(scenario.get("width", (n - 1) / 10))
        amplitude = float(scenario.get("amplitude", 0.0))
        direction = np.asarray(scenario.get("direction", (0.0, 0.0, 1.0)),
                               dtype=np.float64)
        nrm = np.linalg.norm(direction)
        if nrm == 0:
            raise ConfigError("bump direction must be nonzero")
        if amplitude != 0.0:
            dpos = np.outer(_pinned_window(n, center, width),
                            (amplitude / nrm) * direction)
    elif kind == "drift":
        offset = np.asarray(scenario.get("offset", (0.0, 0.0, 0.0)), dtype=np.float64)
        dpos = np.outer(np.arange(n) / (n - 1), offset)
    elif kind == "waypoint_drag":
        index = int(scenario.get("index", (n - 1) // 2))
        if not (0 < index < n - 1):
            raise ConfigError(f"drag index {index} must be interior")
        offset = np.asarray(scenario.get("offset", (0.0, 0.0, 0.0)), dtype=np.float64)
        width = float(scenario.get("width", max(2.0, (n - 1) / 12)))
        if np.any(offset != 0.0):
            dpos = np.outer(_pinned_window(n, index, width), offset)
    else:
        raise ConfigError(f"unknown correction scenario {kind!r}")
    delta = CorrectionDelta(dpos, np.zeros((n, 3)))
    return apply_correction(offline, delta, provenance="synthetic")
