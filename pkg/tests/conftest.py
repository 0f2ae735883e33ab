import json
from pathlib import Path as FsPath

import numpy as np
import pytest

from beltforge.belt import BeltParams, ForceBounds
from beltforge.config import default_config_path, load_config
from beltforge.robot import CollisionSphere, RobotDescription
from beltforge.scene import Scene, SphereObstacle


@pytest.fixture(scope="session")
def planar_robot():
    """2-link planar arm embedded in the 6-joint chain.

    Joints 3..6 have zero-length links, so sphere and end-effector positions
    depend on joints 1-2 only; the trailing joints spin the flange in place.
    """
    dh = np.zeros((6, 4))
    dh[0] = [0.5, 0.0, 0.0, 0.0]
    dh[1] = [0.4, 0.0, 0.0, 0.0]
    return RobotDescription(
        dh=dh,
        joint_lower=-np.pi * np.ones(6),
        joint_upper=np.pi * np.ones(6),
        spheres=[CollisionSphere(1, [-0.25, 0, 0], 0.05),
                 CollisionSphere(1, [0, 0, 0], 0.05),
                 CollisionSphere(2, [-0.2, 0, 0], 0.05),
                 CollisionSphere(2, [0, 0, 0], 0.05)],
        name="planar-2link")


@pytest.fixture(scope="session")
def belt_params():
    return BeltParams(k=500.0, beta=1.3, lam=20.0, rest_length=0.35)


@pytest.fixture(scope="session")
def empty_scene():
    return Scene(obstacles=[], pulley_a_center=[5, 5, 0], pulley_b_center=[6, 5, 0],
                 belt_anchor=[5, 5, 0], safety_margin=0.01)


@pytest.fixture(scope="session")
def default_config():
    return load_config(default_config_path())


@pytest.fixture(scope="session")
def warm_kernels(default_config, planar_robot, belt_params, empty_scene):
    """Trigger JIT compilation of the hot kernels before any timed test."""
    from beltforge.belt import fit_params, generate_samples
    from beltforge.planner import PlanProblem, plan
    from beltforge.policy import Hyperparams, build_dataset, train
    from beltforge.demos import CorrectionDelta, make_virtual
    from beltforge.planner import Path
    from beltforge.robot import forward_kinematics

    samples = generate_samples(belt_params, np.linspace(0.01, 0.04, 5),
                               np.zeros(5))
    fit_params(samples, belt_params)
    q0 = np.array([-0.4, 0.5, 0, 0, 0, 0])
    q1 = np.array([0.5, -0.3, 0, 0, 0, 0])
    scene = Scene(obstacles=[SphereObstacle(center=[0.7, 0.1, 0.0], radius=0.02)],
                  pulley_a_center=[5, 5, 0], pulley_b_center=[6, 5, 0],
                  belt_anchor=[5, 5, 0], safety_margin=0.001)
    prob = PlanProblem(robot=planar_robot, scene=scene, belt=belt_params,
                       bounds=ForceBounds(0.0, np.inf), q_start=q0, q_goal=q1,
                       T=6, dt=0.1)
    try:
        plan(prob)
    except Exception:
        pass  # warmup only needs the kernels compiled
    poses = [forward_kinematics(planar_robot, q0)] * 4
    tiny = Path(poses=poses, dt=0.1)
    ds = build_dataset([make_virtual(tiny, CorrectionDelta.zero(4), degree=2)],
                       pulley_center=[0, 0, 0])
    train(ds, Hyperparams(hidden=(4,), epochs=2, batch_size=4), seed=0)
    return True


@pytest.fixture()
def tiny_config(tmp_path):
    """Small, fast pipeline config for CLI/service tests."""
    data_dir = FsPath(default_config_path()).parent
    cfg = {
        "schema": "belt-forge/1",
        "robot": str(data_dir / "robot_ur10like.json"),
        "scene": str(data_dir / "scene_belt.json"),
        "belt": {"params": {"k": 500.0, "beta": 1.3, "lam": 20.0,
                            "rest_length": 0.35}},
        "bounds": {"f_lower": 5.0, "f_upper": 8.0},
        "plan": {
            "q_start": [0.4, -1.1, 1.9, -0.8, 1.3, 0.2],
            "q_goal": [0.6092851293, -1.1813608308, 1.9580713229,
                       -0.7868030102, 1.2696995197, 0.2],
            "T": 16, "dt": 0.1, "solver": {}
        },
        "corrections": [
            {"type": "bump", "amplitude": 0.006, "center": 8, "width": 3,
             "direction": [0, 0, 1]},
            {"type": "waypoint_drag", "index": 10, "offset": [0, 0.004, 0.003],
             "width": 3},
        ],
        "augment": {"degree": 5, "jitter": 0.0005, "per_correction": 3},
        "train": {"hidden": [24, 24], "learning_rate": 0.003, "batch_size": 32,
                  "epochs": 60, "lr_decay": 0.99},
        "rollout": {"steps": 16},
        "pulley": "b",
        "seed": 5,
    }
    path = tmp_path / "tiny_config.json"
    path.write_text(json.dumps(cfg))
    return path
