"""beltforge: reference-trajectory pipeline for rubber-belt assembly.

Stages: belt-force model identification, constrained path optimization,
path correction, virtual-demonstration synthesis, and behavior cloning of a
policy that emits the reference path.
"""

__version__ = "0.1.0"

SCHEMA = "belt-forge/1"

from .backend import NUMBA_ENABLED, backend_name  # noqa: F401
from .belt import BeltParams, ForceBounds, ForceSample, belt_force, fit_params  # noqa: F401
from .robot import Pose, RobotDescription, forward_kinematics, jacobian_position  # noqa: F401
from .scene import Scene, belt_displacement, signed_distance  # noqa: F401
