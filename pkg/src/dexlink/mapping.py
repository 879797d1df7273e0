"""Device-to-robot motion mapping.

A streamed device pose T_P is turned into an end-effector command by the
relative-motion chain: capture references at engage time (device pose and
the robot's current EE pose), then for each new device pose compute the
motion since engage, scale its translation, align it into the robot
control frame, and left-apply the EE reference:

    delta   = inverse(phone_ref) * phone_pose
    command = ee_ref * alignment * scale(delta)

With the default identity alignment the command equals ee_ref bit-exactly
while the device has not moved, so engaging never jerks the arm. Axis
locks substitute the engaged reference for locked translation components
(or the whole rotation) after the chain, making a locked axis hold its
engage value exactly.

For wrist-mounted tracking the same chain is reused with the device pose
replaced by the hand pose: hand_pose() pushes the device pose through a
fixed device-to-wrist offset.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .geometry import Pose, Vec3, compose, relative_motion

__all__ = [
    "AxisLockMask",
    "MappingConfig",
    "EngageState",
    "engage",
    "command_pose",
    "apply_axis_locks",
    "hand_pose",
]

MAX_TRANSLATION_SCALE = 10.0


@dataclass(frozen=True, slots=True)
class AxisLockMask:
    lock_tx: bool = False
    lock_ty: bool = False
    lock_tz: bool = False
    lock_rotation: bool = False

    def any(self) -> bool:
        return self.lock_tx or self.lock_ty or self.lock_tz or self.lock_rotation

    def toggled(self, axis: str) -> "AxisLockMask":
        """New mask with one axis flipped; axis in {tx, ty, tz, rotation}."""
        name = f"lock_{axis}"
        if not hasattr(self, name):
            raise ValueError(f"unknown lock axis {axis!r}")
        return replace(self, **{name: not getattr(self, name)})


@dataclass(slots=True)
class MappingConfig:
    """Live mapping parameters; the session mutates scale and locks in place."""

    alignment: Pose = field(default_factory=Pose.identity)
    hand_offset: Pose = field(default_factory=Pose.identity)
    translation_scale: float = 1.0
    locks: AxisLockMask = field(default_factory=AxisLockMask)

    def __post_init__(self):
        if not (0.0 < self.translation_scale <= MAX_TRANSLATION_SCALE):
            raise ValueError(
                f"translation_scale must be in (0, {MAX_TRANSLATION_SCALE}], "
                f"got {self.translation_scale}"
            )


@dataclass(frozen=True, slots=True)
class EngageState:
    """References captured when the operator engages; immutable, replaced on re-engage."""

    phone_ref: Pose
    ee_ref: Pose
    engaged_at: int  # server-clock microseconds


def engage(phone_pose: Pose, ee_pose: Pose, now_us: int) -> EngageState:
    return EngageState(phone_ref=phone_pose, ee_ref=ee_pose, engaged_at=now_us)


def command_pose(state: EngageState, config: MappingConfig, phone_pose: Pose) -> Pose:
    delta = relative_motion(state.phone_ref, phone_pose)
    scaled = Pose(delta.rotation, delta.translation * config.translation_scale)
    raw = compose(state.ee_ref, compose(config.alignment, scaled))
    return apply_axis_locks(raw, state, config.locks)


def apply_axis_locks(pose: Pose, state: EngageState, locks: AxisLockMask) -> Pose:
    if not locks.any():
        return pose
    ref = state.ee_ref
    rot = ref.rotation if locks.lock_rotation else pose.rotation
    t = pose.translation
    r = ref.translation
    return Pose(
        rot,
        Vec3(
            r.x if locks.lock_tx else t.x,
            r.y if locks.lock_ty else t.y,
            r.z if locks.lock_tz else t.z,
        ),
    )


def hand_pose(phone_pose: Pose, config: MappingConfig) -> Pose:
    """Wrist pose implied by the device pose and the fixed mount offset."""
    return compose(phone_pose, config.hand_offset)
