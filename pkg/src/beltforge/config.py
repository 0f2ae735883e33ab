"""Pipeline configuration: file loading, validation, stage-seed derivation."""

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .belt import BeltParams, ForceBounds
from .errors import ConfigError
from .planner import SolverOptions
from .policy import Hyperparams
from .robot import RobotDescription
from .scene import Scene


def stage_seed(master_seed: int, label: str) -> int:
    """Stable per-stage seed; adding stages never shifts earlier seeds."""
    digest = hashlib.sha256(f"{master_seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def default_config_path() -> Path:
    return Path(resources.files("beltforge").joinpath("data/config_default.json"))


@dataclass
class PipelineConfig:
    robot: RobotDescription
    scene: Scene
    bounds: ForceBounds
    q_start: np.ndarray
    q_goal: np.ndarray
    T: int
    dt: float
    solver: SolverOptions
    corrections: list
    degree: int
    jitter: float
    per_correction: int
    hyperparams: Hyperparams
    rollout_steps: int
    master_seed: int
    belt_params: BeltParams = None
    belt_samples_file: Path = None
    belt_initial_guess: BeltParams = None
    pulley: str = "b"
    raw: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.q_start = self.robot.check_config(self.q_start, "q_start")
        self.q_goal = self.robot.check_config(self.q_goal, "q_goal")
        if self.belt_params is None and self.belt_samples_file is None:
            raise ConfigError("config needs either belt.params or belt.samples")
        if self.belt_samples_file is not None:
            if not Path(self.belt_samples_file).exists():
                raise ConfigError(f"belt sample file missing: {self.belt_samples_file}")
            if self.belt_initial_guess is None:
                raise ConfigError("belt.samples requires belt.initial_guess")
        if self.per_correction < 0 or self.degree < 1:
            raise ConfigError("augmentation counts out of range")
        if self.pulley not in ("a", "b"):
            raise ConfigError("pulley must be 'a' or 'b'")
        if self.rollout_steps < 1:
            raise ConfigError("rollout steps must be >= 1")

    @property
    def pulley_center(self) -> np.ndarray:
        return (self.scene.pulley_b_center if self.pulley == "b"
                else self.scene.pulley_a_center)

    def rest_length_params(self, fitted: BeltParams) -> BeltParams:
        return fitted


def _resolve(base_dir: Path, ref: str) -> Path:
    p = Path(ref)
    if not p.is_absolute():
        p = base_dir / p
    if not p.exists():
        raise ConfigError(f"referenced file missing: {p}")
    return p


def load_config(path, seed_override: int = None) -> PipelineConfig:
    """Read a pipeline config JSON; relative file refs resolve next to it."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file missing: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    base = path.parent

    robot = RobotDescription.from_payload(
        json.loads(_resolve(base, raw["robot"]).read_text()))
    scene = Scene.from_payload(
        json.loads(_resolve(base, raw["scene"]).read_text()))

    belt_cfg = raw.get("belt", {})
    belt_params = None
    samples_file = None
    initial_guess = None
    if "params" in belt_cfg:
        belt_params = BeltParams.from_payload(belt_cfg["params"])
    if "samples" in belt_cfg:
        samples_file = _resolve(base, belt_cfg["samples"])
        initial_guess = BeltParams.from_payload(belt_cfg["initial_guess"])

    plan_cfg = raw.get("plan", {})
    solver = SolverOptions.from_payload(plan_cfg.get("solver", {}))
    aug = raw.get("augment", {})
    train_cfg = dict(raw.get("train", {}))
    seed = raw.get("seed", 0) if seed_override is None else seed_override

    return PipelineConfig(
        robot=robot,
        scene=scene,
        bounds=ForceBounds.from_payload(raw["bounds"]),
        q_start=np.array(plan_cfg["q_start"], dtype=np.float64),
        q_goal=np.array(plan_cfg["q_goal"], dtype=np.float64),
        T=int(plan_cfg.get("T", 40)),
        dt=float(plan_cfg.get("dt", 0.1)),
        solver=solver,
        corrections=list(raw.get("corrections", [])),
        degree=int(aug.get("degree", 7)),
        jitter=float(aug.get("jitter", 0.0)),
        per_correction=int(aug.get("per_correction", 10)),
        hyperparams=Hyperparams.from_payload(train_cfg),
        rollout_steps=int(raw.get("rollout", {}).get("steps", 40)),
        master_seed=int(seed),
        belt_params=belt_params,
        belt_samples_file=samples_file,
        belt_initial_guess=initial_guess,
        pulley=raw.get("pulley", "b"),
        raw=raw,
    )
