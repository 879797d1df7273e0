"""SE(3) primitives: 3-vectors, unit quaternions, rigid poses.

Conventions, fixed once here and relied on everywhere else:

- Quaternions are stored (w, x, y, z), unit norm, in canonical sign:
  w >= 0, with a w == 0 tie broken by requiring the first nonzero of
  (x, y, z) to be >= 0. q and -q are the same rotation; canonicalizing
  makes equal rotations compare equal and serialize to identical bytes,
  which keeps demo logs replayable by string comparison.
- A Pose maps child-frame coordinates into the parent frame:
  p_parent = R * p_child + t. compose(a, b) therefore reads "apply b,
  then a", matching the product of homogeneous matrices.
- Frames are right-handed, translations in meters, angles in radians.
- Serialized order for a pose is [w, x, y, z, tx, ty, tz].

Rotation matrices exist only for inspection (tests, renderers); all
runtime math stays in quaternion form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "DegenerateAxis",
    "Vec3",
    "UnitQuaternion",
    "Pose",
    "compose",
    "inverse",
    "relative_motion",
    "from_axis_angle",
    "rotation_vector",
]


class DegenerateAxis(ValueError):
    """Rotation axis too short to normalize."""


@dataclass(frozen=True, slots=True)
class Vec3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError(f"non-finite vector ({self.x}, {self.y}, {self.z})")

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)

    def __mul__(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    __rmul__ = __mul__

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: "Vec3") -> "Vec3":
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    @staticmethod
    def zero() -> "Vec3":
        return Vec3(0.0, 0.0, 0.0)


def _leading_sign(x: float, y: float, z: float) -> float:
    for c in (x, y, z):
        if c != 0.0:
            return c
    return 0.0


@dataclass(frozen=True, slots=True)
class UnitQuaternion:
    """Unit quaternion (w, x, y, z); normalized and sign-canonical on construction."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        w, x, y, z = self.w, self.x, self.y, self.z
        n2 = w * w + x * x + y * y + z * z
        if not math.isfinite(n2) or n2 < 1e-24:
            raise ValueError("quaternion norm must be positive and finite")
        if x == 0.0 and y == 0.0 and z == 0.0:
            # Zero vector part is the identity rotation regardless of w;
            # collapsing it keeps relative_motion(T, T) bit-exactly identity.
            w, x, y, z = 1.0, 0.0, 0.0, 0.0
        else:
            if abs(n2 - 1.0) > 1e-12:
                n = math.sqrt(n2)
                w, x, y, z = w / n, x / n, y / n, z / n
            # Normalization is skipped when already unit to the last few ulps,
            # so composing with the identity returns the operand bit-exactly.
            if w < 0.0 or (w == 0.0 and _leading_sign(x, y, z) < 0.0):
                w, x, y, z = -w, -x, -y, -z
        # `+ 0.0` folds any -0.0 into +0.0 so equal rotations print identically.
        object.__setattr__(self, "w", w + 0.0)
        object.__setattr__(self, "x", x + 0.0)
        object.__setattr__(self, "y", y + 0.0)
        object.__setattr__(self, "z", z + 0.0)

    @staticmethod
    def identity() -> "UnitQuaternion":
        return UnitQuaternion(1.0, 0.0, 0.0, 0.0)

    def __mul__(self, o: "UnitQuaternion") -> "UnitQuaternion":
        # Hamilton product, re-canonicalized by the constructor. Terms are
        # grouped so q.conjugate() * q cancels to a bit-exact zero vector
        # part (each parenthesized pair is a difference of equal products).
        return UnitQuaternion(
            (self.w * o.w - self.x * o.x) - (self.y * o.y + self.z * o.z),
            (self.w * o.x + self.x * o.w) + (self.y * o.z - self.z * o.y),
            (self.w * o.y + self.y * o.w) + (self.z * o.x - self.x * o.z),
            (self.w * o.z + self.z * o.w) + (self.x * o.y - self.y * o.x),
        )

    def conjugate(self) -> "UnitQuaternion":
        return UnitQuaternion(self.w, -self.x, -self.y, -self.z)

    def rotate(self, v: Vec3) -> Vec3:
        # v' = v + 2w (u x v) + 2 u x (u x v), u = vector part. Identity
        # rotation reproduces v bit-exactly (both cross terms are zero).
        ux, uy, uz = self.x, self.y, self.z
        cx = uy * v.z - uz * v.y
        cy = uz * v.x - ux * v.z
        cz = ux * v.y - uy * v.x
        dx = uy * cz - uz * cy
        dy = uz * cx - ux * cz
        dz = ux * cy - uy * cx
        return Vec3(
            v.x + 2.0 * (self.w * cx + dx),
            v.y + 2.0 * (self.w * cy + dy),
            v.z + 2.0 * (self.w * cz + dz),
        )

    def to_matrix(self) -> list[list[float]]:
        """3x3 rotation matrix (row major). For tests and renderers only."""
        w, x, y, z = self.w, self.x, self.y, self.z
        return [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]

    def serialize(self) -> tuple[float, float, float, float]:
        return (self.w, self.x, self.y, self.z)


@dataclass(frozen=True, slots=True)
class Pose:
    """Rigid transform; p_parent = rotation * p_child + translation."""

    rotation: UnitQuaternion
    translation: Vec3

    @staticmethod
    def identity() -> "Pose":
        return Pose(UnitQuaternion.identity(), Vec3.zero())

    def transform_point(self, p: Vec3) -> Vec3:
        return self.rotation.rotate(p) + self.translation

    def serialize(self) -> tuple[float, float, float, float, float, float, float]:
        """Flat [w, x, y, z, tx, ty, tz]."""
        r, t = self.rotation, self.translation
        return (r.w, r.x, r.y, r.z, t.x, t.y, t.z)

    @staticmethod
    def deserialize(values) -> "Pose":
        vals = [float(v) for v in values]
        if len(vals) != 7:
            raise ValueError(f"pose needs 7 numbers, got {len(vals)}")
        return Pose(UnitQuaternion(*vals[:4]), Vec3(*vals[4:]))


def compose(a: Pose, b: Pose) -> Pose:
    """a then-applied-to b: the transform taking b's child frame into a's parent."""
    return Pose(a.rotation * b.rotation, a.rotation.rotate(b.translation) + a.translation)


def inverse(t: Pose) -> Pose:
    conj = t.rotation.conjugate()
    return Pose(conj, -conj.rotate(t.translation))


def relative_motion(t0: Pose, t1: Pose) -> Pose:
    """Motion from t0 to t1 expressed in t0's frame: inverse(t0) composed with t1.

    relative_motion(t, t) is the identity pose bit-exactly, which is what
    makes re-engaging the teleop reference a true no-op.
    """
    return compose(inverse(t0), t1)


def from_axis_angle(axis: Vec3, angle: float) -> UnitQuaternion:
    n = axis.norm()
    if not math.isfinite(n) or n <= 1e-12:
        raise DegenerateAxis(f"axis norm {n} too small")
    half = 0.5 * angle
    s = math.sin(half) / n
    return UnitQuaternion(math.cos(half), axis.x * s, axis.y * s, axis.z * s)


def rotation_vector(q: UnitQuaternion) -> Vec3:
    """Axis * angle of q, angle in [0, pi] (guaranteed by canonical sign).

    Exact at the pi boundary: with w == 0 the vector part is the axis and
    canonicalization already fixed its sign, so the result is deterministic
    with no matrix tie-breaking needed.
    """
    s = math.sqrt(q.x * q.x + q.y * q.y + q.z * q.z)
    if s < 1e-12:
        # Small-angle limit: angle ~= 2s, axis ~= u/s.
        return Vec3(2.0 * q.x, 2.0 * q.y, 2.0 * q.z)
    k = 2.0 * math.atan2(s, q.w) / s
    return Vec3(q.x * k, q.y * k, q.z * k)
