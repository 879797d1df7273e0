"""dexlink: phone-driven teleoperation server, kinematic simulator, demo recorder."""

from .geometry import (
    DegenerateAxis,
    Pose,
    UnitQuaternion,
    Vec3,
    compose,
    from_axis_angle,
    inverse,
    relative_motion,
)
from .mapping import AxisLockMask, EngageState, MappingConfig, command_pose, engage, hand_pose

__version__ = "0.1.0"

__all__ = [
    "DegenerateAxis",
    "Pose",
    "UnitQuaternion",
    "Vec3",
    "compose",
    "from_axis_angle",
    "inverse",
    "relative_motion",
    "AxisLockMask",
    "EngageState",
    "MappingConfig",
    "command_pose",
    "engage",
    "hand_pose",
    "__version__",
]
