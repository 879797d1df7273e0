"""Kinematic models: loading, forward kinematics, Jacobians, DLS IK.

Model documents come in two equivalent forms:

- a strict URDF subset (XML): ``<robot>`` containing ``<link name=.../>``
  and ``<joint name=... type=...>`` with ``<parent link=>``, ``<child
  link=>``, optional ``<origin xyz= rpy=/>`` and ``<axis xyz=/>``, and
  ``<limit lower= upper=/>`` (required for non-fixed joints). rpy is
  fixed-axis XYZ, the URDF convention. visual/collision/inertial and any
  other unknown elements are skipped with a warning.
- a tabular plain-text form for hand-written fixtures, one joint per
  line: ``name type parent child ox oy oz r p y ax ay az lo hi``
  ('#' starts a comment; fixed joints still carry all 15 fields, their
  axis and limit values are ignored).

Joint semantics: the child link frame is ``parent * origin * motion(q)``
where motion is a rotation about (revolute) or translation along
(prismatic) the joint axis, expressed in the post-origin frame. Joint
vectors order values by document order of the non-fixed joints.
"""

from __future__ import annotations

import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .canonical import fnv1a64
from .geometry import (
    Pose,
    UnitQuaternion,
    Vec3,
    compose,
    from_axis_angle,
    rotation_vector,
)

__all__ = [
    "ParseError",
    "ValidationError",
    "DimensionMismatch",
    "UnknownFrame",
    "Joint",
    "KinematicModel",
    "load_model",
    "load_model_file",
    "forward_kinematics",
    "jacobian",
    "dls_ik_step",
    "clamp_to_limits",
]

log = logging.getLogger(__name__)

JOINT_TYPES = ("revolute", "prismatic", "fixed")

DEFAULT_DAMPING = 0.05
DEFAULT_MAX_STEP = 0.05


class ParseError(ValueError):
    """Document does not conform to the model grammar."""

    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location


class ValidationError(ValueError):
    """Structurally parseable but kinematically invalid model."""


class DimensionMismatch(ValueError):
    pass


class UnknownFrame(KeyError):
    pass


@dataclass(frozen=True, slots=True)
class Joint:
    name: str
    type: str
    parent: str
    child: str
    origin: Pose
    axis: Vec3
    limits: tuple[float, float] | None  # None for fixed joints


@dataclass(frozen=True)
class KinematicModel:
    name: str
    root: str
    links: tuple[str, ...]
    joints: tuple[Joint, ...]  # document order
    task_frames: dict[str, str] = field(default_factory=dict)
    digest: int = 0  # FNV-1a of the source document

    @property
    def dof(self) -> int:
        return len(self.dof_joints)

    @property
    def dof_joints(self) -> tuple[Joint, ...]:
        return tuple(j for j in self.joints if j.type != "fixed")

    @property
    def dof_names(self) -> tuple[str, ...]:
        return tuple(j.name for j in self.dof_joints)

    def limits_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([j.limits[0] for j in self.dof_joints])
        hi = np.array([j.limits[1] for j in self.dof_joints])
        return lo, hi

    def frames(self) -> tuple[str, ...]:
        return self.links + tuple(self.task_frames)

    def resolve_frame(self, name: str) -> str:
        if name in self.task_frames:
            return self.task_frames[name]
        if name in self.links:
            return name
        raise UnknownFrame(f"frame {name!r} not in model {self.name!r}")

    def zero_q(self) -> tuple[float, ...]:
        return (0.0,) * self.dof


def _rpy_to_quat(roll: float, pitch: float, yaw: float) -> UnitQuaternion:
    # URDF fixed-axis XYZ: R = Rz(yaw) * Ry(pitch) * Rx(roll)
    qz = from_axis_angle(Vec3(0, 0, 1), yaw)
    qy = from_axis_angle(Vec3(0, 1, 0), pitch)
    qx = from_axis_angle(Vec3(1, 0, 0), roll)
    return qz * qy * qx


def _floats(text: str, n: int, where: str) -> list[float]:
    parts = text.split()
    if len(parts) != n:
        raise ParseError(where, f"expected {n} numbers, got {len(parts)}")
    try:
        vals = [float(p) for p in parts]
    except ValueError as exc:
        raise ParseError(where, f"bad number: {exc}") from None
    if not all(math.isfinite(v) for v in vals):
        raise ParseError(where, "non-finite number")
    return vals


def _validate(name: str, joints: list[Joint], declared_links: list[str],
              task_frames: dict[str, str] | None, digest: int) -> KinematicModel:
    links: list[str] = list(declared_links)
    for j in joints:
        for link in (j.parent, j.child):
            if link not in links:
                links.append(link)

    seen = set()
    for j in joints:
        if j.name in seen:
            raise ValidationError(f"duplicate joint name {j.name!r}")
        seen.add(j.name)

    parent_of: dict[str, str] = {}
    for j in joints:
        if j.child in parent_of:
            raise ValidationError(f"link {j.child!r} has two parents")
        parent_of[j.child] = j.parent

    roots = [l for l in links if l not in parent_of]
    if len(roots) != 1:
        raise ValidationError(f"model must have exactly one root link, found {roots}")
    root = roots[0]

    # cycle check: walking up from every link must terminate at the root
    for link in links:
        hops, cur = 0, link
        while cur in parent_of:
            cur = parent_of[cur]
            hops += 1
            if hops > len(links):
                raise ValidationError(f"cycle through link {link!r}")
        if cur != root:
            raise ValidationError(f"link {link!r} is not connected to root {root!r}")

    normalized = []
    for j in joints:
        if j.type not in JOINT_TYPES:
            raise ValidationError(f"joint {j.name!r} has unsupported type {j.type!r}")
        axis = j.axis
        if j.type != "fixed":
            n = axis.norm()
            if abs(n - 1.0) > 1e-6:
                raise ValidationError(f"joint {j.name!r} axis norm {n} too far from 1")
            if n != 1.0:
                axis = axis * (1.0 / n)
            if j.limits is None:
                raise ValidationError(f"joint {j.name!r} ({j.type}) needs limits")
            if j.limits[0] > j.limits[1]:
                raise ValidationError(f"joint {j.name!r} limits inverted")
        normalized.append(Joint(j.name, j.type, j.parent, j.child, j.origin, axis,
                                None if j.type == "fixed" else j.limits))

    frames = dict(task_frames or {})
    for alias, target in frames.items():
        if target not in links:
            raise ValidationError(f"task frame {alias!r} points at unknown link {target!r}")

    return KinematicModel(
        name=name,
        root=root,
        links=tuple(links),
        joints=tuple(normalized),
        task_frames=frames,
        digest=digest,
    )


def _parse_xml(text: str, task_frames) -> KinematicModel:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ParseError(f"line {exc.position[0]}", str(exc)) from None
    if root.tag != "robot":
        raise ParseError("document", f"root element must be <robot>, got <{root.tag}>")
    name = root.get("name", "unnamed")

    links: list[str] = []
    joints: list[Joint] = []
    ignored: set[str] = set()
    for el in root:
        if el.tag == "link":
            link_name = el.get("name")
            if not link_name:
                raise ParseError("link", "missing name attribute")
            links.append(link_name)
        elif el.tag == "joint":
            joints.append(_parse_xml_joint(el, ignored))
        elif el.tag not in ignored:
            ignored.add(el.tag)
    for tag in sorted(ignored):
        log.warning("model %r: ignoring unsupported element <%s>", name, tag)

    return _validate(name, joints, links, task_frames, fnv1a64(text.encode("utf-8")))


def _parse_xml_joint(el: ET.Element, ignored: set[str]) -> Joint:
    jname = el.get("name")
    jtype = el.get("type")
    if not jname:
        raise ParseError("joint", "missing name attribute")
    where = f"joint {jname!r}"
    if jtype not in JOINT_TYPES:
        raise ParseError(where, f"type must be one of {JOINT_TYPES}, got {jtype!r}")

    parent = child = None
    xyz = [0.0, 0.0, 0.0]
    rpy = [0.0, 0.0, 0.0]
    axis = [1.0, 0.0, 0.0]  # URDF default
    limits = None
    for sub in el:
        if sub.tag == "parent":
            parent = sub.get("link")
        elif sub.tag == "child":
            child = sub.get("link")
        elif sub.tag == "origin":
            if sub.get("xyz") is not None:
                xyz = _floats(sub.get("xyz"), 3, where)
            if sub.get("rpy") is not None:
                rpy = _floats(sub.get("rpy"), 3, where)
        elif sub.tag == "axis":
            if sub.get("xyz") is None:
                raise ParseError(where, "<axis> needs xyz attribute")
            axis = _floats(sub.get("xyz"), 3, where)
        elif sub.tag == "limit":
            lo, hi = sub.get("lower"), sub.get("upper")
            if lo is None or hi is None:
                raise ParseError(where, "<limit> needs lower and upper")
            limits = (_floats(lo, 1, where)[0], _floats(hi, 1, where)[0])
        elif sub.tag not in ignored:
            ignored.add(sub.tag)
    if not parent or not child:
        raise ParseError(where, "needs <parent link=> and <child link=>")

    origin = Pose(_rpy_to_quat(*rpy), Vec3(*xyz))
    return Joint(jname, jtype, parent, child, origin, Vec3(*axis), limits)


def _parse_tabular(text: str, task_frames) -> KinematicModel:
    joints: list[Joint] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 15:
            raise ParseError(f"line {lineno}", f"expected 15 fields, got {len(parts)}")
        name, jtype, parent, child = parts[:4]
        if jtype not in JOINT_TYPES:
            raise ParseError(f"line {lineno}", f"bad joint type {jtype!r}")
        try:
            nums = [float(p) for p in parts[4:]]
        except ValueError as exc:
            raise ParseError(f"line {lineno}", f"bad number: {exc}") from None
        if not all(math.isfinite(v) for v in nums):
            raise ParseError(f"line {lineno}", "non-finite number")
        ox, oy, oz, r, p, y, ax, ay, az, lo, hi = nums
        origin = Pose(_rpy_to_quat(r, p, y), Vec3(ox, oy, oz))
        limits = None if jtype == "fixed" else (lo, hi)
        axis = Vec3(ax, ay, az) if jtype != "fixed" else Vec3(1, 0, 0)
        joints.append(Joint(name, jtype, parent, child, origin, axis, limits))
    if not joints:
        raise ParseError("document", "no joints")
    return _validate("tabular", joints, [], task_frames, fnv1a64(text.encode("utf-8")))


def load_model(text: str, task_frames: dict[str, str] | None = None) -> KinematicModel:
    """Parse a model document (XML subset or tabular form) and validate it."""
    if text.lstrip().startswith("<"):
        return _parse_xml(text, task_frames)
    return _parse_tabular(text, task_frames)


def load_model_file(path: str | Path, task_frames: dict[str, str] | None = None) -> KinematicModel:
    return load_model(Path(path).read_text(encoding="utf-8"), task_frames)


def _check_q(model: KinematicModel, q) -> tuple[float, ...]:
    qt = tuple(float(v) for v in q)
    if len(qt) != model.dof:
        raise DimensionMismatch(
            f"model {model.name!r} has {model.dof} DoF, got {len(qt)} values"
        )
    return qt


def forward_kinematics(model: KinematicModel, q) -> dict[str, Pose]:
    """Base-frame pose of every link and task frame."""
    qt = _check_q(model, q)
    qmap = dict(zip(model.dof_names, qt))
    poses: dict[str, Pose] = {model.root: Pose.identity()}
    pending = list(model.joints)
    # process in tree order; document order is usually already topological
    while pending:
        progressed = False
        rest = []
        for j in pending:
            if j.parent not in poses:
                rest.append(j)
                continue
            frame = compose(poses[j.parent], j.origin)
            if j.type == "revolute":
                motion = Pose(from_axis_angle(j.axis, qmap[j.name]), Vec3.zero())
            elif j.type == "prismatic":
                motion = Pose(UnitQuaternion.identity(), j.axis * qmap[j.name])
            else:
                motion = Pose.identity()
            poses[j.child] = compose(frame, motion)
            progressed = True
        if not progressed:
            raise ValidationError("disconnected joints (should have failed at load)")
        pending = rest
    for alias, target in model.task_frames.items():
        poses[alias] = poses[target]
    return poses


def _ancestor_dof(model: KinematicModel, link: str) -> set[str]:
    parent_joint = {j.child: j for j in model.joints}
    names = set()
    cur = link
    while cur in parent_joint:
        j = parent_joint[cur]
        if j.type != "fixed":
            names.add(j.name)
        cur = j.parent
    return names


def jacobian(model: KinematicModel, q, frame: str) -> np.ndarray:
    """Geometric Jacobian of the frame origin: rows = [linear; angular]."""
    link = model.resolve_frame(frame)
    qt = _check_q(model, q)
    poses = forward_kinematics(model, qt)
    p_frame = np.asarray(poses[link].translation.as_tuple())
    on_path = _ancestor_dof(model, link)

    J = np.zeros((6, model.dof))
    for i, joint in enumerate(model.dof_joints):
        if joint.name not in on_path:
            continue
        joint_frame = compose(poses[joint.parent], joint.origin)
        z = np.asarray(joint_frame.rotation.rotate(joint.axis).as_tuple())
        if joint.type == "revolute":
            p_j = np.asarray(joint_frame.translation.as_tuple())
            J[:3, i] = np.cross(z, p_frame - p_j)
            J[3:, i] = z
        else:  # prismatic
            J[:3, i] = z
    return J


def pose_error(target: Pose, current: Pose) -> np.ndarray:
    """6-vector [position error; rotation-vector of target relative to current]."""
    dt = target.translation - current.translation
    rv = rotation_vector(target.rotation * current.rotation.conjugate())
    return np.array([dt.x, dt.y, dt.z, rv.x, rv.y, rv.z])


def clamp_to_limits(model: KinematicModel, q) -> tuple[float, ...]:
    lo, hi = model.limits_arrays()
    return tuple(np.clip(np.asarray(q, dtype=float), lo, hi).tolist())


def dls_ik_step(
    model: KinematicModel,
    q,
    target: Pose,
    frame: str,
    damping: float = DEFAULT_DAMPING,
    max_step: float = DEFAULT_MAX_STEP,
) -> tuple[float, ...]:
    """One damped-least-squares step toward target; output respects joint limits.

    q' = clamp_limits(q + clamp(J^T (J J^T + damping^2 I)^-1 e, +-max_step))
    """
    if damping <= 0:
        raise ValueError("damping must be > 0")
    if max_step <= 0:
        raise ValueError("max_step must be > 0")
    qt = _check_q(model, q)
    link = model.resolve_frame(frame)
    if model.dof == 0:
        return qt
    current = forward_kinematics(model, qt)[link]
    e = pose_error(target, current)
    J = jacobian(model, qt, link)
    A = J @ J.T + (damping * damping) * np.eye(6)
    dq = J.T @ np.linalg.solve(A, e)
    dq = np.clip(dq, -max_step, max_step)
    return clamp_to_limits(model, np.asarray(qt) + dq)
