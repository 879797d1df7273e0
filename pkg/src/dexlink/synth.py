"""Synthetic teleoperation client: scripted trajectories over the real socket.

This is the CI stand-in for the phone. It pairs with a running server,
engages, streams pose or hand updates at a fixed rate with absolute
send deadlines, and measures round-trip latency as send time to the
first StateReport whose input_seq is >= that update's seq. The >= is
deliberate: the control loop coalesces updates that land inside one
tick (only the newest is executed), and a report naming seq N proves
everything at or below N has been folded into the robot state.

Trajectory generators are pure functions of elapsed time in device
space (they all start at the identity, so engagement is seamless):

- hold: identity pose
- circle(radius, period): circle in the device x-y plane
- lissajous(ax, ay, fx, fy): figure curves in x-y
- grasp: piecewise-linear world waypoints taken from a scene file's
  script section, converted to device space using the EE pose reported
  at engage; aperture is commanded through pinch landmarks
- hand_wave: identity pose with the five finger curls oscillating
"""

from __future__ import annotations

import asyncio
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, UnitQuaternion, Vec3
from .protocol import (
    Ack,
    ButtonEvent,
    ErrorMsg,
    HandUpdate,
    PairAccept,
    PairRequest,
    PoseUpdate,
    StateReport,
    decode,
    encode,
)
from .retarget import LANDMARK_COUNT

__all__ = [
    "SCRIPT_KINDS",
    "SynthScript",
    "SynthResult",
    "parse_script",
    "script_pose",
    "hand_landmarks",
    "pinch_landmarks",
    "run_synth",
    "format_metrics",
]

SCRIPT_KINDS = ("hold", "circle", "lissajous", "grasp", "hand_wave")

IDENTITY_Q = UnitQuaternion(1.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True, slots=True)
class SynthScript:
    kind: str
    rate: float = 60.0
    duration: float = 5.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SCRIPT_KINDS:
            raise ValueError(f"unknown script kind {self.kind!r}; expected one of {SCRIPT_KINDS}")
        if not (1.0 <= self.rate <= 240.0):
            raise ValueError(f"rate must be in [1, 240] Hz, got {self.rate}")
        if not self.duration > 0:
            raise ValueError(f"duration must be positive, got {self.duration}")


def parse_script(text: str, rate: float = 60.0, duration: float = 5.0) -> SynthScript:
    """Parse 'kind' or 'kind:key=val,key=val' (e.g. circle:radius=0.1,period=4)."""
    kind, _, rest = text.partition(":")
    params: dict = {}
    if rest:
        for part in rest.split(","):
            key, sep, val = part.partition("=")
            if not sep or not key:
                raise ValueError(f"bad script parameter {part!r}; expected key=value")
            params[key.strip()] = float(val)
    return SynthScript(kind=kind.strip(), rate=rate, duration=duration, params=params)


# ---------------------------------------------------------------------------
# trajectory generators


def script_pose(script: SynthScript, t: float) -> Pose:
    """Device pose at elapsed time t; identity at t=0 for every kind."""
    p = script.params
    if script.kind in ("hold", "hand_wave", "grasp"):
        return Pose(IDENTITY_Q, Vec3(0.0, 0.0, 0.0))
    if script.kind == "circle":
        r = p.get("radius", 0.1)
        period = p.get("period", 4.0)
        w = 2.0 * math.pi * t / period
        return Pose(IDENTITY_Q, Vec3(r * math.cos(w) - r, r * math.sin(w), 0.0))
    if script.kind == "lissajous":
        ax, ay = p.get("ax", 0.1), p.get("ay", 0.06)
        fx, fy = p.get("fx", 0.5), p.get("fy", 0.75)
        return Pose(
            IDENTITY_Q,
            Vec3(ax * math.sin(2 * math.pi * fx * t), ay * math.sin(2 * math.pi * fy * t), 0.0),
        )
    raise ValueError(script.kind)


# ---------------------------------------------------------------------------
# hand synthesis: fixed two-segment finger model

_FINGER_BASES = (
    Vec3(0.030, -0.040, 0.0),  # thumb
    Vec3(0.090, -0.020, 0.0),  # index
    Vec3(0.095, 0.000, 0.0),  # middle
    Vec3(0.090, 0.020, 0.0),  # ring
    Vec3(0.080, 0.040, 0.0),  # little
)
_SEG1 = 0.035
_SEG2 = 0.025


def hand_landmarks(curls) -> tuple[Vec3, ...]:
    """21 landmarks from five curl values in [0, 1].

    Each finger is two rigid segments hinging in its sagittal plane:
    curl c maps to a joint angle of c*pi/2 at the knuckle and the same
    again at the middle joint. Crude, but smooth, monotone in c, and
    shared verbatim with the browser console's slider model.
    """
    if len(curls) != 5:
        raise ValueError(f"need 5 curl values, got {len(curls)}")
    pts = [Vec3(0.0, 0.0, 0.0)]
    for base, c in zip(_FINGER_BASES, curls):
        c = min(max(float(c), 0.0), 1.0)
        a1 = c * math.pi / 2
        a2 = 2 * a1
        pip = Vec3(
            base.x + _SEG1 * math.cos(a1), base.y, base.z - _SEG1 * math.sin(a1)
        )
        tip = Vec3(
            pip.x + _SEG2 * math.cos(a2), pip.y, pip.z - _SEG2 * math.sin(a2)
        )
        dip = Vec3((pip.x + tip.x) / 2, (pip.y + tip.y) / 2, (pip.z + tip.z) / 2)
        pts += [base, pip, dip, tip]
    assert len(pts) == LANDMARK_COUNT
    return tuple(pts)


def pinch_landmarks(distance: float) -> tuple[Vec3, ...]:
    """Landmarks whose thumb-index tip distance equals `distance`;
    drives a pinch-mapped parallel jaw to that exact aperture."""
    pts = [Vec3(0.0, 0.0, 0.0)] * LANDMARK_COUNT
    pts[8] = Vec3(float(distance), 0.0, 0.0)
    return tuple(pts)


def _wave_curls(t: float, period: float) -> tuple[float, ...]:
    return tuple(
        0.5 * (1.0 - math.cos(2 * math.pi * t / period + 0.4 * i)) / 1.0 for i in range(5)
    )


# ---------------------------------------------------------------------------
# waypoint tracks for grasp scripts


@dataclass(frozen=True, slots=True)
class _Segment:
    t0: float
    t1: float
    p0: Vec3
    p1: Vec3
    aperture: float


class WaypointTrack:
    """Piecewise-linear EE path through scene-script waypoints."""

    def __init__(self, entries: list[dict], start: Vec3):
        if not entries:
            raise ValueError("scene script has no waypoints")
        segs = []
        t = 0.0
        prev = start
        for e in entries:
            target = Vec3(*e["move_to"])
            dur = float(e.get("duration_s", 1.0))
            if dur <= 0:
                raise ValueError("waypoint duration must be positive")
            segs.append(_Segment(t, t + dur, prev, target, float(e.get("aperture", 0.08))))
            t += dur
            prev = target
        self.segments = segs
        self.total = t

    def sample(self, t: float) -> tuple[Vec3, float]:
        if t <= 0:
            s = self.segments[0]
            return s.p0, s.aperture
        for s in self.segments:
            if t <= s.t1:
                u = (t - s.t0) / (s.t1 - s.t0)
                return (
                    Vec3(
                        s.p0.x + u * (s.p1.x - s.p0.x),
                        s.p0.y + u * (s.p1.y - s.p0.y),
                        s.p0.z + u * (s.p1.z - s.p0.z),
                    ),
                    s.aperture,
                )
        last = self.segments[-1]
        return last.p1, last.aperture


def load_scene_script(scene_path) -> list[dict]:
    import yaml

    with open(scene_path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    entries = (doc or {}).get("script") or []
    if not entries:
        raise ValueError(f"{scene_path}: no script section")
    return entries


# ---------------------------------------------------------------------------
# the client


@dataclass(slots=True)
class SynthResult:
    sent: int = 0
    acked: int = 0
    reports: list = field(default_factory=list)
    latencies_ms: list = field(default_factory=list)
    server_errors: list = field(default_factory=list)
    final_flags: dict = field(default_factory=dict)
    exit_code: int = 0
    message: str = "ok"


def _now_us() -> int:
    return time.time_ns() // 1000


def format_metrics(res: SynthResult) -> str:
    if res.latencies_ms:
        p50, p95, p99 = np.percentile(res.latencies_ms, [50, 95, 99])
        lat = f"p50={p50:.2f}ms p95={p95:.2f}ms p99={p99:.2f}ms"
    else:
        lat = "p50=n/a p95=n/a p99=n/a"
    flags = ",".join(k for k, v in sorted(res.final_flags.items()) if v) or "none"
    return (
        f"sent={res.sent} acked={res.acked} reports={len(res.reports)} "
        f"latency {lat} flags={flags}"
    )


async def _receiver(ws, res: SynthResult, ledger: dict, events: dict):
    try:
        async for raw in ws:
            msg = decode(raw)
            if isinstance(msg, Ack):
                res.acked += 1
                events["acked"].set()
            elif isinstance(msg, StateReport):
                res.reports.append(msg)
                if msg.input_seq is not None:
                    # a report for seq N covers every seq <= N: older
                    # updates were superseded by the one that was executed
                    now = time.monotonic_ns()
                    for s in [s for s in ledger if s <= msg.input_seq]:
                        res.latencies_ms.append((now - ledger.pop(s)) / 1e6)
                if msg.detector_flags:
                    res.final_flags = dict(msg.detector_flags)
                if msg.engaged:
                    events["engaged"].set()
            elif isinstance(msg, PairAccept):
                events["paired"].set()
            elif isinstance(msg, ErrorMsg):
                res.server_errors.append(msg)
                if msg.code == "pairing_failed":
                    events["paired"].set()
    except Exception:
        pass  # connection teardown is handled by the sender loop


async def run_synth(
    host: str,
    port: int,
    code: str,
    script: SynthScript,
    scene_script: list[dict] | None = None,
    client_name: str = "synth",
) -> SynthResult:
    """Pair, engage, stream the script, disengage. Never raises for
    protocol-level failures; inspect exit_code/message."""
    from websockets.asyncio.client import connect
    from websockets.exceptions import ConnectionClosed

    res = SynthResult()
    ledger: dict[int, int] = {}
    events = {k: asyncio.Event() for k in ("paired", "engaged", "acked")}

    try:
        ws = await connect(f"ws://{host}:{port}/ws", max_queue=4096)
    except OSError as exc:
        res.exit_code = 4
        res.message = f"connect failed: {exc}"
        return res

    recv_task = asyncio.create_task(_receiver(ws, res, ledger, events))
    try:
        await ws.send(encode(PairRequest(code=code, client_name=client_name, protocol_version=1)))
        try:
            await asyncio.wait_for(events["paired"].wait(), timeout=5.0)
        except asyncio.TimeoutError:
            res.exit_code = 4
            res.message = "no pairing response"
            return res
        if any(e.code == "pairing_failed" for e in res.server_errors):
            res.exit_code = 3
            res.message = "pairing rejected"
            return res

        is_hand = script.kind in ("grasp", "hand_wave")
        track: WaypointTrack | None = None

        def update(seq: int, t: float, ee0: Vec3 | None):
            ts = _now_us()
            if script.kind == "grasp":
                if track is None:  # pre-engage: identity pose, jaw open
                    return HandUpdate(
                        seq=seq,
                        timestamp_us=ts,
                        pose=Pose(IDENTITY_Q, Vec3(0.0, 0.0, 0.0)),
                        landmarks=pinch_landmarks(0.08),
                    )
                world, aperture = track.sample(t)
                pose = Pose(
                    IDENTITY_Q,
                    Vec3(world.x - ee0.x, world.y - ee0.y, world.z - ee0.z),
                )
                return HandUpdate(
                    seq=seq, timestamp_us=ts, pose=pose, landmarks=pinch_landmarks(aperture)
                )
            if script.kind == "hand_wave":
                period = script.params.get("period", 2.0)
                return HandUpdate(
                    seq=seq,
                    timestamp_us=ts,
                    pose=Pose(IDENTITY_Q, Vec3(0.0, 0.0, 0.0)),
                    landmarks=hand_landmarks(_wave_curls(t, period)),
                )
            return PoseUpdate(seq=seq, timestamp_us=ts, pose=script_pose(script, t))

        async def send_update(seq: int, t: float, ee0):
            msg = update(seq, t, ee0)
            ledger[seq] = time.monotonic_ns()
            await ws.send(encode(msg))
            res.sent += 1

        # engage from the first update so the reference is fresh
        seq = 1
        await send_update(seq, 0.0, Vec3(0.0, 0.0, 0.0) if is_hand else None)
        await ws.send(encode(ButtonEvent(button_id="engage_reset", action="press")))
        try:
            await asyncio.wait_for(events["engaged"].wait(), timeout=5.0)
        except asyncio.TimeoutError:
            res.exit_code = 4
            res.message = "engage not confirmed"
            return res

        ee0 = None
        if script.kind == "grasp":
            engaged_report = next(r for r in res.reports if r.engaged)
            t = engaged_report.ee_pose.translation
            ee0 = Vec3(t.x, t.y, t.z)
            track = WaypointTrack(scene_script or [], ee0)

        n = int(script.duration * script.rate)
        start = time.monotonic()
        for k in range(1, n + 1):
            deadline = start + k / script.rate
            delay = deadline - time.monotonic()
            if delay > 0:
                await asyncio.sleep(delay)
            seq += 1
            await send_update(seq, k / script.rate, ee0)

        # hold the session engaged until the last update has been reported,
        # otherwise its ledger entry would be orphaned by the disengage
        drain_deadline = time.monotonic() + 1.0
        while ledger and time.monotonic() < drain_deadline:
            await asyncio.sleep(0.005)
        await ws.send(encode(ButtonEvent(button_id="engage_reset", action="press")))
        await asyncio.sleep(3.0 / script.rate)  # let final reports drain
    except ConnectionClosed as exc:
        res.exit_code = 4
        res.message = f"disconnected mid-stream: {exc}"
        return res
    finally:
        recv_task.cancel()
        try:
            await ws.close()
        except Exception:
            pass

    res.message = "ok"
    return res


def run_synth_sync(*args, **kw) -> SynthResult:
    return asyncio.run(run_synth(*args, **kw))
