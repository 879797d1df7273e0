"""Wire format and pairing codes.

One UTF-8 JSON object per message, "type" first, remaining fields in
declared order, numbers in shortest round-trip form (integral floats
printed as integers). Decoding accepts reordered fields and ignores
unknown ones; unknown "type", malformed structure, and non-finite
numbers are rejected. The codec is policy-free: staleness, sequence
gaps, and rate limits are the session layer's business.

Pairing uses typed 6-symbol codes over a 32-symbol alphabet (A-Z minus
I and O, digits 2-9) with a 120 s time-to-live, redeemed through a
lock-guarded registry.
"""

from __future__ import annotations

import json
import random
import threading
from dataclasses import dataclass

from .canonical import dumps as canonical_dumps
from .geometry import Pose, Vec3
from .mapping import AxisLockMask

__all__ = [
    "PROTOCOL_VERSION",
    "CODE_ALPHABET",
    "CODE_LENGTH",
    "CODE_TTL_US",
    "ProtocolError",
    "MalformedMessage",
    "UnsupportedVersion",
    "NonFiniteField",
    "PairRequest",
    "PairAccept",
    "PoseUpdate",
    "HandUpdate",
    "ButtonEvent",
    "ConfigUpdate",
    "StateReport",
    "Ack",
    "ErrorMsg",
    "StreamMessage",
    "encode",
    "decode",
    "PairingCode",
    "generate_pairing_code",
    "CodeRegistry",
]

PROTOCOL_VERSION = 1

CODE_ALPHABET = "ABCDEFGHJKLMNPQRSTUVWXYZ23456789"
CODE_LENGTH = 6
CODE_TTL_US = 120_000_000

_U64_MAX = 2**64 - 1


class ProtocolError(Exception):
    pass


class MalformedMessage(ProtocolError):
    pass


class UnsupportedVersion(ProtocolError):
    pass


class NonFiniteField(ProtocolError):
    pass


def _check_u64(value: int, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"{name} must be an integer")
    if not (0 <= value <= _U64_MAX):
        raise ValueError(f"{name} out of u64 range")
    return value


@dataclass(frozen=True, slots=True)
class PairRequest:
    code: str
    client_name: str
    protocol_version: int = PROTOCOL_VERSION

    def __post_init__(self):
        if len(self.code) != CODE_LENGTH:
            raise ValueError(f"pairing code must be {CODE_LENGTH} characters")
        if isinstance(self.protocol_version, bool) or not isinstance(self.protocol_version, int) \
                or self.protocol_version < 1:
            raise ValueError("protocol_version must be a positive integer")


@dataclass(frozen=True, slots=True)
class PairAccept:
    session_id: str
    server_capabilities: dict


@dataclass(frozen=True, slots=True)
class PoseUpdate:
    seq: int
    timestamp_us: int
    pose: Pose

    def __post_init__(self):
        _check_u64(self.seq, "seq")
        _check_u64(self.timestamp_us, "timestamp_us")


@dataclass(frozen=True, slots=True)
class HandUpdate:
    seq: int
    timestamp_us: int
    pose: Pose
    landmarks: tuple[Vec3, ...]

    def __post_init__(self):
        _check_u64(self.seq, "seq")
        _check_u64(self.timestamp_us, "timestamp_us")
        if len(self.landmarks) != 21:
            raise ValueError(f"landmarks length must be 21, got {len(self.landmarks)}")


BUTTON_ACTIONS = ("press", "release")


@dataclass(frozen=True, slots=True)
class ButtonEvent:
    button_id: str
    action: str

    def __post_init__(self):
        if self.action not in BUTTON_ACTIONS:
            raise ValueError(f"action must be one of {BUTTON_ACTIONS}")
        if not self.button_id:
            raise ValueError("button_id must be non-empty")


@dataclass(frozen=True, slots=True)
class ConfigUpdate:
    translation_scale: float | None = None
    locks: AxisLockMask | None = None

    def __post_init__(self):
        if self.translation_scale is not None:
            s = float(self.translation_scale)
            if s != s or s in (float("inf"), float("-inf")):
                raise ValueError("translation_scale must be finite")
            object.__setattr__(self, "translation_scale", s)


@dataclass(frozen=True, slots=True)
class StateReport:
    seq: int
    ee_pose: Pose
    joint_vector: tuple[float, ...]
    engaged: bool
    detector_flags: dict
    # Sequence number of the PoseUpdate consumed by the tick that produced
    # this report; lets clients measure per-input round-trip latency.
    input_seq: int | None = None

    def __post_init__(self):
        _check_u64(self.seq, "seq")
        if self.input_seq is not None:
            _check_u64(self.input_seq, "input_seq")


@dataclass(frozen=True, slots=True)
class Ack:
    of_seq: int

    def __post_init__(self):
        _check_u64(self.of_seq, "of_seq")


@dataclass(frozen=True, slots=True)
class ErrorMsg:
    code: str
    detail: str


StreamMessage = (
    PairRequest | PairAccept | PoseUpdate | HandUpdate | ButtonEvent
    | ConfigUpdate | StateReport | Ack | ErrorMsg
)

# ---------------------------------------------------------------------------
# encoding


def _pose_fields(pose: Pose) -> list[float]:
    return list(pose.serialize())


def _locks_fields(mask: AxisLockMask) -> dict:
    return {
        "tx": mask.lock_tx,
        "ty": mask.lock_ty,
        "tz": mask.lock_tz,
        "rotation": mask.lock_rotation,
    }


def encode(msg: StreamMessage) -> bytes:
    """Canonical bytes for a message; a pure function of the message."""
    if isinstance(msg, PairRequest):
        obj = {
            "type": "pair_request",
            "code": msg.code,
            "client_name": msg.client_name,
            "protocol_version": msg.protocol_version,
        }
    elif isinstance(msg, PairAccept):
        obj = {
            "type": "pair_accept",
            "session_id": msg.session_id,
            "server_capabilities": msg.server_capabilities,
        }
    elif isinstance(msg, PoseUpdate):
        obj = {
            "type": "pose_update",
            "seq": msg.seq,
            "timestamp_us": msg.timestamp_us,
            "pose": _pose_fields(msg.pose),
        }
    elif isinstance(msg, HandUpdate):
        obj = {
            "type": "hand_update",
            "seq": msg.seq,
            "timestamp_us": msg.timestamp_us,
            "pose": _pose_fields(msg.pose),
            "landmarks": [[v.x, v.y, v.z] for v in msg.landmarks],
        }
    elif isinstance(msg, ButtonEvent):
        obj = {"type": "button_event", "button_id": msg.button_id, "action": msg.action}
    elif isinstance(msg, ConfigUpdate):
        obj = {"type": "config_update"}
        if msg.translation_scale is not None:
            obj["translation_scale"] = msg.translation_scale
        if msg.locks is not None:
            obj["locks"] = _locks_fields(msg.locks)
    elif isinstance(msg, StateReport):
        obj = {
            "type": "state_report",
            "seq": msg.seq,
            "ee_pose": _pose_fields(msg.ee_pose),
            "joint_vector": list(msg.joint_vector),
            "engaged": msg.engaged,
            "detector_flags": {k: msg.detector_flags[k] for k in sorted(msg.detector_flags)},
        }
        if msg.input_seq is not None:
            obj["input_seq"] = msg.input_seq
    elif isinstance(msg, Ack):
        obj = {"type": "ack", "of_seq": msg.of_seq}
    elif isinstance(msg, ErrorMsg):
        obj = {"type": "error_msg", "code": msg.code, "detail": msg.detail}
    else:
        raise TypeError(f"not a stream message: {type(msg).__name__}")
    return canonical_dumps(obj).encode("utf-8")


# ---------------------------------------------------------------------------
# decoding


def _reject_constant(token: str):
    raise NonFiniteField(f"non-finite literal {token}")


def _require(obj: dict, name: str):
    if name not in obj:
        raise MalformedMessage(f"missing field {name!r}")
    return obj[name]


def _dec_str(obj: dict, name: str) -> str:
    v = _require(obj, name)
    if not isinstance(v, str):
        raise MalformedMessage(f"{name} must be a string")
    return v


def _dec_bool(obj: dict, name: str) -> bool:
    v = _require(obj, name)
    if not isinstance(v, bool):
        raise MalformedMessage(f"{name} must be a boolean")
    return v


def _dec_u64(obj: dict, name: str) -> int:
    v = _require(obj, name)
    try:
        return _check_u64(v, name)
    except ValueError as exc:
        raise MalformedMessage(str(exc)) from None


def _finite(v, name: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise MalformedMessage(f"{name} must be a number")
    f = float(v)
    if f != f or f in (float("inf"), float("-inf")):
        raise NonFiniteField(f"{name} is not finite")
    return f


def _dec_pose(obj: dict, name: str) -> Pose:
    v = _require(obj, name)
    if not isinstance(v, list) or len(v) != 7:
        raise MalformedMessage(f"{name} must be a 7-element array")
    vals = [_finite(x, f"{name}[{i}]") for i, x in enumerate(v)]
    try:
        return Pose.deserialize(vals)
    except ValueError as exc:
        raise MalformedMessage(f"{name}: {exc}") from None


def _dec_vec3(v, name: str) -> Vec3:
    if not isinstance(v, list) or len(v) != 3:
        raise MalformedMessage(f"{name} must be a 3-element array")
    return Vec3(*(_finite(x, f"{name}[{i}]") for i, x in enumerate(v)))


def _dec_landmarks(obj: dict) -> tuple[Vec3, ...]:
    v = _require(obj, "landmarks")
    if not isinstance(v, list) or len(v) != 21:
        raise MalformedMessage(f"landmarks length must be 21, got {len(v) if isinstance(v, list) else 'non-array'}")
    return tuple(_dec_vec3(x, f"landmarks[{i}]") for i, x in enumerate(v))


def _dec_locks(v) -> AxisLockMask:
    if not isinstance(v, dict):
        raise MalformedMessage("locks must be an object")
    out = {}
    for key in ("tx", "ty", "tz", "rotation"):
        if key not in v:
            raise MalformedMessage(f"locks missing {key!r}")
        if not isinstance(v[key], bool):
            raise MalformedMessage(f"locks.{key} must be a boolean")
        out[f"lock_{key}"] = v[key]
    return AxisLockMask(**out)


def decode(data: bytes | str) -> StreamMessage:
    """Parse one wire message; tolerant of field order and unknown fields."""
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedMessage(f"invalid utf-8: {exc}") from None
    else:
        text = data
    try:
        obj = json.loads(text, parse_constant=_reject_constant)
    except NonFiniteField:
        raise
    except (json.JSONDecodeError, RecursionError) as exc:
        raise MalformedMessage(f"invalid json: {exc}") from None
    if not isinstance(obj, dict):
        raise MalformedMessage("message must be a json object")
    mtype = _dec_str(obj, "type")

    try:
        if mtype == "pair_request":
            version = _require(obj, "protocol_version")
            if isinstance(version, bool) or not isinstance(version, int) or version < 1:
                raise MalformedMessage("protocol_version must be a positive integer")
            if version != PROTOCOL_VERSION:
                raise UnsupportedVersion(f"protocol_version {version} not supported")
            return PairRequest(
                code=_dec_str(obj, "code"),
                client_name=_dec_str(obj, "client_name"),
                protocol_version=version,
            )
        if mtype == "pair_accept":
            caps = _require(obj, "server_capabilities")
            if not isinstance(caps, dict):
                raise MalformedMessage("server_capabilities must be an object")
            return PairAccept(session_id=_dec_str(obj, "session_id"), server_capabilities=caps)
        if mtype == "pose_update":
            return PoseUpdate(
                seq=_dec_u64(obj, "seq"),
                timestamp_us=_dec_u64(obj, "timestamp_us"),
                pose=_dec_pose(obj, "pose"),
            )
        if mtype == "hand_update":
            return HandUpdate(
                seq=_dec_u64(obj, "seq"),
                timestamp_us=_dec_u64(obj, "timestamp_us"),
                pose=_dec_pose(obj, "pose"),
                landmarks=_dec_landmarks(obj),
            )
        if mtype == "button_event":
            action = _dec_str(obj, "action")
            if action not in BUTTON_ACTIONS:
                raise MalformedMessage(f"unknown button action {action!r}")
            return ButtonEvent(button_id=_dec_str(obj, "button_id"), action=action)
        if mtype == "config_update":
            scale = obj.get("translation_scale")
            locks = obj.get("locks")
            return ConfigUpdate(
                translation_scale=None if scale is None else _finite(scale, "translation_scale"),
                locks=None if locks is None else _dec_locks(locks),
            )
        if mtype == "state_report":
            jv = _require(obj, "joint_vector")
            if not isinstance(jv, list):
                raise MalformedMessage("joint_vector must be an array")
            flags = _require(obj, "detector_flags")
            if not isinstance(flags, dict) or not all(
                isinstance(k, str) and isinstance(v, bool) for k, v in flags.items()
            ):
                raise MalformedMessage("detector_flags must map names to booleans")
            input_seq = obj.get("input_seq")
            if input_seq is not None:
                try:
                    input_seq = _check_u64(input_seq, "input_seq")
                except ValueError as exc:
                    raise MalformedMessage(str(exc)) from None
            return StateReport(
                seq=_dec_u64(obj, "seq"),
                ee_pose=_dec_pose(obj, "ee_pose"),
                joint_vector=tuple(_finite(x, f"joint_vector[{i}]") for i, x in enumerate(jv)),
                engaged=_dec_bool(obj, "engaged"),
                detector_flags=dict(flags),
                input_seq=input_seq,
            )
        if mtype == "ack":
            return Ack(of_seq=_dec_u64(obj, "of_seq"))
        if mtype == "error_msg":
            return ErrorMsg(code=_dec_str(obj, "code"), detail=_dec_str(obj, "detail"))
    except ProtocolError:
        raise
    except ValueError as exc:
        raise MalformedMessage(str(exc)) from None
    raise MalformedMessage(f"unknown message type {mtype!r}")


# ---------------------------------------------------------------------------
# pairing


@dataclass(frozen=True, slots=True)
class PairingCode:
    code: str
    expires_at_us: int

    def __post_init__(self):
        if len(self.code) != CODE_LENGTH or any(c not in CODE_ALPHABET for c in self.code):
            raise ValueError("code must be 6 symbols from the pairing alphabet")

    def valid_at(self, now_us: int) -> bool:
        return now_us <= self.expires_at_us


def generate_pairing_code(rng: random.Random, now_us: int) -> PairingCode:
    code = "".join(rng.choice(CODE_ALPHABET) for _ in range(CODE_LENGTH))
    return PairingCode(code=code, expires_at_us=now_us + CODE_TTL_US)


class CodeRegistry:
    """Active pairing codes; issue and redeem from any connection context."""

    def __init__(self):
        self._lock = threading.Lock()
        self._codes: dict[str, PairingCode] = {}

    def issue(self, rng: random.Random, now_us: int) -> PairingCode:
        with self._lock:
            while True:
                pc = generate_pairing_code(rng, now_us)
                if pc.code not in self._codes:
                    self._codes[pc.code] = pc
                    return pc

    def redeem(self, code: str, now_us: int) -> bool:
        """Consume a code: True exactly once per issued, unexpired code."""
        with self._lock:
            pc = self._codes.get(code)
            if pc is None or not pc.valid_at(now_us):
                return False
            del self._codes[code]
            return True

    def is_active(self, code: str) -> bool:
        with self._lock:
            return code in self._codes

    def purge_expired(self, now_us: int) -> int:
        with self._lock:
            dead = [c for c, pc in self._codes.items() if not pc.valid_at(now_us)]
            for c in dead:
                del self._codes[c]
            return len(dead)

    def active_count(self) -> int:
        with self._lock:
            return len(self._codes)
