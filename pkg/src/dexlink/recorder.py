"""Demonstration recording, replay verification, and dataset export.

A `.demo` file is line-delimited: one header line, then one line per
control tick. Every line is canonical JSON, a tab, and a 16-hex FNV-1a
checksum of the JSON bytes, so a file truncated at any byte boundary
still parses up to the last intact line. The writer flushes after every
frame; a crash loses at most the line being written.

Frames store the raw inputs the tick consumed (with receive
timestamps), the commanded EE target and hand command, the resulting
arm joints, and a digest of the command-driven scene state. Replay
rebuilds a fresh session against a fresh scene, injects those inputs at
the recorded clock values, and demands bit-identical commands and
digests per tick.
"""

from __future__ import annotations

import errno
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .canonical import dumps as canonical_dumps, fnv1a64, format_number
from .mapping import MappingConfig
from .retarget import ApertureProfile, RetargetConfig, RetargetProfile, VectorPair

__all__ = [
    "FORMAT_VERSION",
    "RecorderError",
    "StorageFull",
    "WriteFailure",
    "DigestMismatch",
    "IncompatibleHeaders",
    "DemoRecord",
    "ReplayVerdict",
    "DemoWriter",
    "make_header",
    "load_demo",
    "validate_demo",
    "replay",
    "export_dataset",
]

FORMAT_VERSION = 1


class RecorderError(Exception):
    pass


class StorageFull(RecorderError):
    pass


class WriteFailure(RecorderError):
    pass


class DigestMismatch(RecorderError):
    """Replay refused: models or scene do not match the header digests."""


class IncompatibleHeaders(RecorderError):
    pass


@dataclass(slots=True)
class DemoRecord:
    header: dict
    frames: list[dict]


@dataclass(frozen=True, slots=True)
class ReplayVerdict:
    identical: bool
    divergent_tick: int | None = None
    detail: str = ""

    def __str__(self):
        if self.identical:
            return "identical"
        return f"divergent at tick {self.divergent_tick}: {self.detail}"


def _mapping_to_doc(cfg: MappingConfig) -> dict:
    return {
        "alignment": list(cfg.alignment.serialize()),
        "hand_offset": list(cfg.hand_offset.serialize()),
        "translation_scale": cfg.translation_scale,
        "locks": {
            "tx": cfg.locks.lock_tx,
            "ty": cfg.locks.lock_ty,
            "tz": cfg.locks.lock_tz,
            "rotation": cfg.locks.lock_rotation,
        },
    }


def _profile_to_doc(profile) -> dict | None:
    if profile is None:
        return None
    if isinstance(profile, ApertureProfile):
        return {
            "kind": "aperture",
            "name": profile.name,
            "pair": list(profile.pair),
            "gain": profile.gain,
            "max_aperture": profile.max_aperture,
        }
    if isinstance(profile, RetargetProfile):
        cfg = profile.config
        return {
            "kind": "retarget",
            "name": profile.name,
            "vector_pairs": [
                {"human": list(p.human), "robot": list(p.robot)} for p in cfg.vector_pairs
            ],
            "scale_alpha": cfg.scale_alpha,
            "smoothing_beta": cfg.smoothing_beta,
            "max_iterations": cfg.max_iterations,
            "step_tolerance": cfg.step_tolerance,
        }
    raise TypeError(f"not a hand profile: {type(profile).__name__}")


def profile_from_doc(doc: dict | None):
    if doc is None:
        return None
    if doc["kind"] == "aperture":
        return ApertureProfile(
            name=doc.get("name", "aperture"),
            pair=tuple(doc["pair"]),
            gain=float(doc["gain"]),
            max_aperture=float(doc["max_aperture"]),
        )
    if doc["kind"] == "retarget":
        pairs = tuple(
            VectorPair(human=tuple(p["human"]), robot=tuple(p["robot"]))
            for p in doc["vector_pairs"]
        )
        return RetargetProfile(
            name=doc.get("name", "retarget"),
            config=RetargetConfig(
                vector_pairs=pairs,
                scale_alpha=float(doc["scale_alpha"]),
                smoothing_beta=float(doc["smoothing_beta"]),
                max_iterations=int(doc["max_iterations"]),
                step_tolerance=float(doc["step_tolerance"]),
            ),
        )
    raise ValueError(f"unknown profile kind {doc['kind']!r}")


def make_header(scene, mapping_cfg: MappingConfig, control_rate_hz: int,
                created_at_us: int, hand_profile=None) -> dict:
    """Demo header; `hand_profile` is the one actually driving the hand,
    which may differ from the scene default when overridden at startup."""
    if hand_profile is None:
        hand_profile = scene.hand_profile
    return {
        "format_version": FORMAT_VERSION,
        "arm_digest": f"{scene.arm.digest:016x}",
        "hand_digest": f"{scene.hand.digest:016x}" if scene.hand is not None else None,
        "scene_digest": scene.source_digest,
        "scene_name": scene.name,
        "mapping": _mapping_to_doc(mapping_cfg),
        "hand_profile": _profile_to_doc(hand_profile),
        "control_rate_hz": control_rate_hz,
        "created_at_us": created_at_us,
    }


def _line_bytes(doc: dict) -> bytes:
    payload = canonical_dumps(doc).encode("utf-8")
    return payload + b"\t" + f"{fnv1a64(payload):016x}".encode("ascii") + b"\n"


class DemoWriter:
    """Append-only demo log; one flushed line per frame."""

    def __init__(self, path: str | Path, header: dict):
        self.path = Path(path)
        self.frames_written = 0
        self._closed = False
        try:
            self._fh = open(self.path, "wb")
            self._write_line(header)
        except OSError as exc:
            raise self._map_oserror(exc) from exc

    @staticmethod
    def _map_oserror(exc: OSError) -> RecorderError:
        if exc.errno == errno.ENOSPC:
            return StorageFull(str(exc))
        return WriteFailure(str(exc))

    def _write_line(self, doc: dict):
        self._fh.write(_line_bytes(doc))
        self._fh.flush()

    def record_frame(self, frame: dict):
        if self._closed:
            raise WriteFailure("writer is closed")
        try:
            self._write_line(frame)
        except OSError as exc:
            raise self._map_oserror(exc) from exc
        self.frames_written += 1

    def close(self):
        if not self._closed:
            self._closed = True
            try:
                self._fh.close()
            except OSError as exc:
                raise self._map_oserror(exc) from exc


def _parse_line(raw: bytes) -> dict | None:
    """One verified line, or None if damaged/truncated."""
    if b"\t" not in raw:
        return None
    payload, tail = raw.rsplit(b"\t", 1)
    tail = tail.strip()
    if len(tail) != 16:
        return None
    try:
        if int(tail, 16) != fnv1a64(payload):
            return None
        doc = json.loads(payload.decode("utf-8"))
    except (ValueError, UnicodeDecodeError):
        return None
    return doc if isinstance(doc, dict) else None


def validate_demo(path: str | Path) -> tuple[bool, str]:
    """Strict integrity scan: every line must checksum, the header must be
    well-formed, and tick indices must strictly increase. Unlike
    `load_demo` this refuses files with a damaged or torn tail."""
    data = Path(path).read_bytes()
    if not data:
        return False, "empty file"
    docs: list[dict] = []
    lines = data.split(b"\n")
    for i, raw in enumerate(lines):
        if not raw:
            if i != len(lines) - 1:
                return False, f"line {i + 1}: blank line inside the record"
            continue
        if i == len(lines) - 1:
            return False, f"line {i + 1}: torn trailing line (no newline)"
        doc = _parse_line(raw)
        if doc is None:
            return False, f"line {i + 1}: checksum or JSON failure"
        docs.append(doc)
    if not docs:
        return False, "no header line"
    header, frames = docs[0], docs[1:]
    if header.get("format_version") != FORMAT_VERSION:
        return False, f"unsupported format_version {header.get('format_version')!r}"
    for key in ("arm_digest", "scene_digest", "mapping", "control_rate_hz"):
        if key not in header:
            return False, f"header missing {key!r}"
    last_tick = None
    for j, f in enumerate(frames):
        t = f.get("tick")
        if not isinstance(t, int) or (last_tick is not None and t <= last_tick):
            return False, f"frame {j}: bad tick index {t!r}"
        last_tick = t
    return True, f"valid ({len(frames)} frames)"


def load_demo(path: str | Path) -> DemoRecord:
    """Parse a demo file, keeping the intact prefix of a damaged tail."""
    data = Path(path).read_bytes()
    lines = data.split(b"\n")
    docs: list[dict] = []
    for raw in lines:
        if not raw:
            continue
        # A line missing its newline is complete only if it checksums.
        doc = _parse_line(raw)
        if doc is None:
            break
        docs.append(doc)
    if not docs:
        raise RecorderError(f"{path}: no intact header line")
    header, frames = docs[0], docs[1:]
    if header.get("format_version") != FORMAT_VERSION:
        raise RecorderError(f"{path}: unsupported format_version {header.get('format_version')!r}")
    ticks = [f.get("tick") for f in frames]
    if any(not isinstance(t, int) for t in ticks) or any(
        b <= a for a, b in zip(ticks, ticks[1:])
    ):
        raise RecorderError(f"{path}: tick indices must strictly increase")
    return DemoRecord(header=header, frames=frames)


def replay(demo: DemoRecord, scene, mapping_cfg: MappingConfig | None = None) -> ReplayVerdict:
    """Re-run a demo's inputs against a fresh scene and compare per tick."""
    from .session import ServerCore  # session imports recorder for writing

    header = demo.header
    arm_digest = f"{scene.arm.digest:016x}"
    hand_digest = f"{scene.hand.digest:016x}" if scene.hand is not None else None
    if header["arm_digest"] != arm_digest:
        raise DigestMismatch(f"arm model digest {arm_digest} != header {header['arm_digest']}")
    if header["hand_digest"] != hand_digest:
        raise DigestMismatch(f"hand model digest {hand_digest} != header {header['hand_digest']}")
    if header["scene_digest"] != scene.source_digest:
        raise DigestMismatch(
            f"scene digest {scene.source_digest} != header {header['scene_digest']}"
        )

    if mapping_cfg is None:
        mapping_cfg = mapping_from_doc(header["mapping"])
    core = ServerCore(
        scene=scene,
        control_rate_hz=int(header["control_rate_hz"]),
        mapping_cfg=mapping_cfg,
        hand_profile=profile_from_doc(header.get("hand_profile")),
    )
    conn = "replay"
    core.connect(conn, now_us=int(header["created_at_us"]))
    core.force_paired(conn)

    for frame in demo.frames:
        tick = frame["tick"]
        produced = core.replay_tick(conn, frame)
        for key in ("ee_target", "hand_cmd", "aperture", "arm_q", "scene_digest"):
            if produced.get(key) != frame.get(key):
                return ReplayVerdict(
                    identical=False,
                    divergent_tick=tick,
                    detail=f"{key}: {produced.get(key)!r} != recorded {frame.get(key)!r}",
                )
    return ReplayVerdict(identical=True)


def mapping_from_doc(doc: dict) -> MappingConfig:
    from .geometry import Pose
    from .mapping import AxisLockMask

    locks = doc.get("locks", {})
    return MappingConfig(
        alignment=Pose.deserialize(doc["alignment"]),
        hand_offset=Pose.deserialize(doc["hand_offset"]),
        translation_scale=float(doc["translation_scale"]),
        locks=AxisLockMask(
            lock_tx=bool(locks.get("tx", False)),
            lock_ty=bool(locks.get("ty", False)),
            lock_tz=bool(locks.get("tz", False)),
            lock_rotation=bool(locks.get("rotation", False)),
        ),
    )


def export_dataset(demos: list[DemoRecord], out_path: str | Path) -> int:
    """Write one CSV row per frame; returns the number of rows."""
    if not demos:
        raise IncompatibleHeaders("no demos to export")
    ref = demos[0].header
    for d in demos[1:]:
        for key in ("arm_digest", "hand_digest", "control_rate_hz", "format_version"):
            if d.header.get(key) != ref.get(key):
                raise IncompatibleHeaders(
                    f"{key} differs: {d.header.get(key)!r} != {ref.get(key)!r}"
                )

    n_arm = max((len(f.get("arm_q") or []) for d in demos for f in d.frames), default=0)
    n_hand = max(
        (
            max(len(f.get("hand_cmd") or []), len(f.get("hand_state") or []))
            for d in demos
            for f in d.frames
        ),
        default=0,
    )

    cols = ["demo", "tick"]
    cols += [f"arm_q{i}" for i in range(n_arm)]
    cols += [f"hand_q{i}" for i in range(n_hand)]
    cols += ["aperture"]
    cols += [f"ee_{k}" for k in ("qw", "qx", "qy", "qz", "tx", "ty", "tz")]
    cols += [f"action_ee_{k}" for k in ("qw", "qx", "qy", "qz", "tx", "ty", "tz")]
    cols += [f"action_hand_q{i}" for i in range(n_hand)]
    cols += ["action_aperture"]

    def fmt(v) -> str:
        if v is None:
            return ""
        if isinstance(v, float):
            if not math.isfinite(v):
                raise WriteFailure(f"non-finite value in export: {v!r}")
            return format_number(v)
        return str(v)

    rows = 0
    try:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(cols) + "\n")
            for di, demo in enumerate(demos):
                for f in demo.frames:
                    arm_q = list(f.get("arm_q") or [])
                    hand_obs = list(f.get("hand_state") or [])
                    hand_act = list(f.get("hand_cmd") or [])
                    ee = list(f.get("ee_pose") or [None] * 7)
                    act_ee = list(f.get("ee_target") or [None] * 7)
                    vals = [di, f["tick"]]
                    vals += arm_q + [None] * (n_arm - len(arm_q))
                    vals += hand_obs + [None] * (n_hand - len(hand_obs))
                    vals += [f.get("aperture_state")]
                    vals += ee
                    vals += act_ee
                    vals += hand_act + [None] * (n_hand - len(hand_act))
                    vals += [f.get("aperture")]
                    fh.write(",".join(fmt(v) for v in vals) + "\n")
                    rows += 1
    except OSError as exc:
        raise DemoWriter._map_oserror(exc) from exc
    return rows
