"""Kinematic scene simulator: arm + hand following commands, graspable
objects, articulated drawer/cabinet fixtures, and success detectors.

Deliberately contact-free: grasping is a proximity + aperture rule,
detached objects drop straight to their resting height, and fixtures
are 1-DoF joints whose value follows the projection of commanded EE
motion onto the joint axis. Everything is deterministic so a replayed
command stream reproduces scene state bit-for-bit; the per-tick digest
covers exactly the command-driven state (joints, aperture, fixture
values, grips, attachment geometry) and not free object placement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .canonical import dumps as canonical_dumps, fnv1a64
from .geometry import Pose, UnitQuaternion, Vec3, compose, from_axis_angle, inverse
from .kinematics import KinematicModel, dls_ik_step, forward_kinematics, load_model_file
from .retarget import ApertureProfile, RetargetProfile, load_profile

__all__ = [
    "UnknownObject",
    "UnknownFixture",
    "AttachRecord",
    "SceneObject",
    "Fixture",
    "Command",
    "Scene",
    "TrialClock",
    "step",
    "success_pick",
    "success_open",
    "trial_status",
    "load_scene",
    "DEFAULT_PROXIMITY",
    "DEFAULT_RELEASE_MARGIN",
    "HAND_RATE_LIMIT",
    "APERTURE_RATE_LIMIT",
]

DEFAULT_PROXIMITY = 0.02
DEFAULT_RELEASE_MARGIN = 0.01
HAND_RATE_LIMIT = 3.0  # rad/s toward commanded hand joints
APERTURE_RATE_LIMIT = 0.5  # m/s toward commanded aperture
IK_ITERATIONS = 3
DEFAULT_TRIAL_LIMIT_S = 30.0


class UnknownObject(KeyError):
    pass


class UnknownFixture(KeyError):
    pass


@dataclass(frozen=True, slots=True)
class AttachRecord:
    """Grip-frame-to-object transform captured at attach time."""

    rel_pose: Pose


@dataclass(slots=True)
class SceneObject:
    name: str
    pose: Pose
    width: float
    height: float
    initial_height: float
    attached: AttachRecord | None = None


@dataclass(slots=True)
class Fixture:
    name: str
    joint_type: str  # prismatic | revolute
    origin: Pose
    axis: Vec3
    lo: float
    hi: float
    handle_offset: Vec3
    handle_width: float
    value: float = 0.0
    gripped: bool = False

    def __post_init__(self):
        if self.joint_type not in ("prismatic", "revolute"):
            raise ValueError(f"fixture joint must be prismatic or revolute, got {self.joint_type!r}")
        if not (self.lo <= self.value <= self.hi):
            raise ValueError("fixture value outside range")
        n = self.axis.norm()
        if abs(n - 1.0) > 1e-6:
            if n < 1e-9:
                raise ValueError("fixture axis must be nonzero")
            self.axis = self.axis * (1.0 / n)

    def handle_world(self, value: float | None = None) -> Vec3:
        v = self.value if value is None else value
        if self.joint_type == "prismatic":
            local = self.handle_offset + self.axis * v
        else:
            local = from_axis_angle(self.axis, v).rotate(self.handle_offset)
        return self.origin.transform_point(local)

    def handle_tangent(self) -> Vec3:
        """d(handle_world)/d(value) at the current value."""
        if self.joint_type == "prismatic":
            local = self.axis
        else:
            local = self.axis.cross(from_axis_angle(self.axis, self.value).rotate(self.handle_offset))
        return self.origin.rotation.rotate(local)


@dataclass(frozen=True, slots=True)
class Command:
    ee_target: Pose
    hand_q: tuple[float, ...] | None = None
    aperture: float | None = None


@dataclass(frozen=True, slots=True)
class TrialClock:
    started_at_us: int
    limit_s: float = DEFAULT_TRIAL_LIMIT_S

    def __post_init__(self):
        if self.limit_s <= 0:
            raise ValueError("trial limit must be positive")


@dataclass(slots=True)
class Scene:
    name: str
    arm: KinematicModel
    ee_frame: str
    arm_q: tuple[float, ...]
    hand: KinematicModel | None
    hand_q: tuple[float, ...]
    aperture: float
    max_aperture: float
    objects: list[SceneObject]
    fixtures: list[Fixture]
    proximity: float = DEFAULT_PROXIMITY
    release_margin: float = DEFAULT_RELEASE_MARGIN
    trial_limit_s: float = DEFAULT_TRIAL_LIMIT_S
    home_q: tuple[float, ...] = ()
    source_digest: str = "0" * 16
    hand_profile: RetargetProfile | ApertureProfile | None = None
    script: list[dict] = field(default_factory=list)

    def ee_pose(self) -> Pose:
        return forward_kinematics(self.arm, self.arm_q)[self.ee_frame]

    def object(self, name: str) -> SceneObject:
        for o in self.objects:
            if o.name == name:
                return o
        raise UnknownObject(name)

    def fixture(self, name: str) -> Fixture:
        for f in self.fixtures:
            if f.name == name:
                return f
        raise UnknownFixture(name)

    def state_digest(self) -> str:
        """64-bit hash of the command-driven state, as 16 hex digits.

        Free object poses are excluded on purpose: replay determinism is
        judged on what the command stream controls, so a scene whose
        loose objects were nudged diverges at the first grasp-affecting
        tick rather than at tick zero.
        """
        doc = {
            "arm_q": list(self.arm_q),
            "hand_q": list(self.hand_q),
            "aperture": self.aperture,
            "fixtures": [
                {"name": f.name, "value": f.value, "gripped": f.gripped} for f in self.fixtures
            ],
            "attachments": [
                {"object": o.name, "rel": list(o.attached.rel_pose.serialize())}
                for o in self.objects
                if o.attached is not None
            ],
        }
        return f"{fnv1a64(canonical_dumps(doc).encode('utf-8')):016x}"

    def detector_flags(self) -> dict:
        flags = {}
        for o in self.objects:
            flags[f"pick_{o.name}"] = success_pick(self, o.name)
        for f in self.fixtures:
            flags[f"open_{f.name}"] = success_open(self, f.name)
        return flags

    def world_state(self) -> dict:
        """JSON-ready snapshot for the console's top-down plot."""
        ee = self.ee_pose()
        return {
            "ee": list(ee.serialize()),
            "aperture": self.aperture,
            "arm_q": list(self.arm_q),
            "hand_q": list(self.hand_q),
            "objects": [
                {
                    "name": o.name,
                    "pose": list(o.pose.serialize()),
                    "width": o.width,
                    "attached": o.attached is not None,
                }
                for o in self.objects
            ],
            "fixtures": [
                {
                    "name": f.name,
                    "type": f.joint_type,
                    "value": f.value,
                    "fraction": (f.value - f.lo) / (f.hi - f.lo) if f.hi > f.lo else 0.0,
                    "handle": list(f.handle_world().as_tuple()),
                    "gripped": f.gripped,
                }
                for f in self.fixtures
            ],
        }


def _rate_limit_toward(current, target, max_delta):
    d = target - current
    if d > max_delta:
        d = max_delta
    elif d < -max_delta:
        d = -max_delta
    return current + d


def step(scene: Scene, command: Command, dt: float) -> Scene:
    """Advance the scene by one control period; mutates and returns it."""
    if not (0.0 < dt <= 0.1):
        raise ValueError(f"dt must be in (0, 0.1], got {dt}")

    # Arm: when a fixture handle is held, commanded motion projects onto
    # the fixture joint and the EE tracks the handle; otherwise plain IK.
    gripped = next((f for f in scene.fixtures if f.gripped), None)
    if gripped is not None:
        handle = gripped.handle_world()
        delta = command.ee_target.translation - handle
        tangent = gripped.handle_tangent()
        tt = tangent.dot(tangent)
        if tt > 1e-18:
            dv = delta.dot(tangent) / tt
            gripped.value = min(max(gripped.value + dv, gripped.lo), gripped.hi)
        ik_target = Pose(command.ee_target.rotation, gripped.handle_world())
    else:
        ik_target = command.ee_target
    q = scene.arm_q
    for _ in range(IK_ITERATIONS):
        q = dls_ik_step(scene.arm, q, ik_target, scene.ee_frame)
    scene.arm_q = q

    # Hand joints and aperture, rate-limited toward the command.
    if command.hand_q is not None and scene.hand is not None:
        lo, hi = scene.hand.limits_arrays()
        limited = [
            _rate_limit_toward(c, t, HAND_RATE_LIMIT * dt)
            for c, t in zip(scene.hand_q, command.hand_q)
        ]
        scene.hand_q = tuple(np.clip(limited, lo, hi).tolist())
    prev_aperture = scene.aperture
    if command.aperture is not None:
        target = min(max(command.aperture, 0.0), scene.max_aperture)
        scene.aperture = _rate_limit_toward(prev_aperture, target, APERTURE_RATE_LIMIT * dt)
    closing = scene.aperture < prev_aperture

    grip_pose = scene.ee_pose()
    grip_point = grip_pose.translation

    # Attached objects ride the grip frame rigidly.
    for obj in scene.objects:
        if obj.attached is not None:
            obj.pose = compose(grip_pose, obj.attached.rel_pose)

    # Release: opening past width + margin drops the object straight down
    # to its resting height (kinematic world, no gravity while held).
    for obj in scene.objects:
        if obj.attached is not None and scene.aperture > obj.width + scene.release_margin:
            obj.attached = None
            t = obj.pose.translation
            obj.pose = Pose(obj.pose.rotation, Vec3(t.x, t.y, obj.initial_height))

    # Attach: near enough, actively closing, and closed to the object width.
    for obj in scene.objects:
        if obj.attached is None and closing and scene.aperture <= obj.width:
            if (obj.pose.translation - grip_point).norm() <= scene.proximity:
                obj.attached = AttachRecord(rel_pose=compose(inverse(grip_pose), obj.pose))

    # Fixture handles use the same grip rule.
    for f in scene.fixtures:
        if f.gripped and scene.aperture > f.handle_width + scene.release_margin:
            f.gripped = False
        elif not f.gripped and closing and scene.aperture <= f.handle_width:
            if (f.handle_world() - grip_point).norm() <= scene.proximity:
                f.gripped = True

    return scene


def success_pick(scene: Scene, object_name: str) -> bool:
    obj = scene.object(object_name)
    return obj.pose.translation.z - obj.initial_height > 0.05


def success_open(scene: Scene, fixture_name: str) -> bool:
    f = scene.fixture(fixture_name)
    if f.hi <= f.lo:
        return False
    return (f.value - f.lo) / (f.hi - f.lo) > 0.15


def trial_status(clock: TrialClock, now_us: int, success: bool) -> str:
    if success:
        return "success"
    if (now_us - clock.started_at_us) / 1e6 > clock.limit_s:
        return "timeout"
    return "running"


# ---------------------------------------------------------------------------
# scene files


def _resolve_model_path(ref: str, scene_dir: Path) -> Path:
    cand = scene_dir / ref
    if cand.exists():
        return cand
    from .assets import asset_path

    return asset_path("models", ref)


def _resolve_profile_path(ref: str, scene_dir: Path) -> Path:
    cand = scene_dir / ref
    if cand.exists():
        return cand
    from .assets import asset_path

    return asset_path("profiles", ref)


def _pose_from_list(vals, where: str) -> Pose:
    if len(vals) != 7:
        raise ValueError(f"{where}: pose needs 7 numbers")
    return Pose.deserialize([float(v) for v in vals])


def load_scene(path: str | Path) -> Scene:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: scene must be a mapping")
    scene_dir = path.parent

    arm_doc = doc.get("arm")
    if not isinstance(arm_doc, dict) or "model" not in arm_doc:
        raise ValueError(f"{path}: scene needs arm.model")
    ee_link = str(arm_doc.get("ee_frame", "tool"))
    # Register an "ee" alias for whatever link the scene names as the grip
    # point; the rest of the stack only ever asks for "ee".
    task_frames = {"ee": ee_link} if ee_link != "ee" else None
    arm = load_model_file(_resolve_model_path(str(arm_doc["model"]), scene_dir), task_frames)
    home = tuple(float(v) for v in arm_doc.get("home", arm.zero_q()))
    if len(home) != arm.dof:
        raise ValueError(f"{path}: home has {len(home)} values for a {arm.dof}-DoF arm")

    hand_doc = doc.get("hand") or {}
    hand = None
    hand_q: tuple[float, ...] = ()
    profile = None
    if "model" in hand_doc:
        hand = load_model_file(_resolve_model_path(str(hand_doc["model"]), scene_dir))
        hand_q = hand.zero_q()
    if "profile" in hand_doc:
        ref = str(hand_doc["profile"])
        if not ref.endswith(".yaml"):
            ref += ".yaml"
        profile = load_profile(_resolve_profile_path(ref, scene_dir))
    max_aperture = float(hand_doc.get("max_aperture", 0.08))

    grasp = doc.get("grasp") or {}
    objects = []
    for od in doc.get("objects") or []:
        pose = _pose_from_list(od["pose"], f"object {od.get('name')}")
        objects.append(
            SceneObject(
                name=str(od["name"]),
                pose=pose,
                width=float(od["width"]),
                height=float(od.get("height", od["width"])),
                initial_height=float(od.get("initial_height", pose.translation.z)),
            )
        )
    if len({o.name for o in objects}) != len(objects):
        raise ValueError(f"{path}: duplicate object names")

    fixtures = []
    for fd in doc.get("fixtures") or []:
        rng = fd.get("range", (0.0, 1.0))
        fixtures.append(
            Fixture(
                name=str(fd["name"]),
                joint_type=str(fd["type"]),
                origin=_pose_from_list(fd.get("origin", [1, 0, 0, 0, 0, 0, 0]), f"fixture {fd.get('name')}"),
                axis=Vec3(*(float(v) for v in fd["axis"])),
                lo=float(rng[0]),
                hi=float(rng[1]),
                handle_offset=Vec3(*(float(v) for v in fd.get("handle_offset", (0, 0, 0)))),
                handle_width=float(fd.get("handle_width", 0.02)),
                value=float(fd.get("value", rng[0])),
            )
        )
    if len({f.name for f in fixtures}) != len(fixtures):
        raise ValueError(f"{path}: duplicate fixture names")

    return Scene(
        name=str(doc.get("name", path.stem)),
        arm=arm,
        ee_frame="ee",
        arm_q=home,
        hand=hand,
        hand_q=hand_q,
        aperture=float(hand_doc.get("aperture", max_aperture)),
        max_aperture=max_aperture,
        objects=objects,
        fixtures=fixtures,
        proximity=float(grasp.get("proximity", DEFAULT_PROXIMITY)),
        release_margin=float(grasp.get("release_margin", DEFAULT_RELEASE_MARGIN)),
        trial_limit_s=float(doc.get("trial_limit_s", DEFAULT_TRIAL_LIMIT_S)),
        home_q=home,
        source_digest=f"{fnv1a64(text.encode('utf-8')):016x}",
        hand_profile=profile,
        script=list(doc.get("script") or []),
    )
