"""Connection sessions, the control tick, and robot-side safety rules.

`ServerCore` is the transport-free heart of the teleoperation server:
the WebSocket layer feeds it decoded messages plus a clock value and
sends back whatever it returns. All methods take explicit microsecond
timestamps, so tests and demo replay drive it with a synthetic clock
and get bit-identical behaviour.

Safety model. A session walks idle -> paired -> engaged; only an
engaged session produces simulator commands (clutch: while not
engaged the robot receives nothing and holds). Engaging captures the
current device pose and EE pose as references, so the first command
equals the EE pose where it stopped; there is no jump. Exactly one
session may be engaged at a time, and a stream gap of a second or
more while engaged forces a disengage.

Input handling is newest-wins: each pose/hand update either supersedes
the unconsumed mailbox slot or is dropped (old seq, stale timestamp),
and every drop shows up in a per-session counter. A control tick
consumes at most one update per stream, so flooding the socket cannot
queue up motion.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path as _Path

from . import mapping as mp
from . import simworld as sw
from .geometry import Pose, Vec3
from .protocol import (
    Ack,
    ButtonEvent,
    ConfigUpdate,
    ErrorMsg,
    HandUpdate,
    PairAccept,
    PairRequest,
    PoseUpdate,
    StateReport,
    StreamMessage,
)
from .recorder import DemoWriter, RecorderError, make_header
from .retarget import (
    ApertureProfile,
    HandFrame,
    RetargetProfile,
    bind as retarget_bind,
    retarget_step,
)

__all__ = [
    "STALENESS_BUDGET_US",
    "POSE_GAP_DISENGAGE_US",
    "MAX_PAIR_FAILURES",
    "SessionPhase",
    "ButtonBinding",
    "DEFAULT_BUTTONS",
    "Session",
    "HandleResult",
    "TickResult",
    "ServerCore",
]

log = logging.getLogger(__name__)

STALENESS_BUDGET_US = 200_000  # inclusive: exactly 200 ms old is still fresh
POSE_GAP_DISENGAGE_US = 1_000_000
MAX_PAIR_FAILURES = 3
IDLE_REPORT_HZ = 30  # approximate cadence when no fresh input is being consumed


class SessionPhase(str, Enum):
    IDLE = "idle"
    PAIRED = "paired"
    ENGAGED = "engaged"


@dataclass(frozen=True, slots=True)
class ButtonBinding:
    """What a button press does. `axis`/`factor` qualify the action."""

    action: str
    axis: str | None = None
    factor: float | None = None


DEFAULT_BUTTONS: dict[str, ButtonBinding] = {
    "engage_reset": ButtonBinding("engage_reset"),
    "toggle_lock_tx": ButtonBinding("toggle_lock", axis="tx"),
    "toggle_lock_ty": ButtonBinding("toggle_lock", axis="ty"),
    "toggle_lock_tz": ButtonBinding("toggle_lock", axis="tz"),
    "toggle_lock_rotation": ButtonBinding("toggle_lock", axis="rotation"),
    "scale_up": ButtonBinding("scale_delta", factor=1.25),
    "scale_down": ButtonBinding("scale_delta", factor=0.8),
    "gripper_toggle": ButtonBinding("gripper_toggle"),
    "start_recording": ButtonBinding("start_recording"),
    "stop_recording": ButtonBinding("stop_recording"),
}


@dataclass(slots=True)
class _Slot:
    msg: PoseUpdate | HandUpdate
    receive_us: int
    consumed: bool = False


@dataclass(slots=True)
class Mailbox:
    """Latest-value store per stream plus an ordered button queue."""

    latest_pose: _Slot | None = None
    latest_hand: _Slot | None = None
    pending_buttons: deque = field(default_factory=deque)

    def offer(self, slot_name: str, msg, now_us: int, counters: dict) -> None:
        current: _Slot | None = getattr(self, slot_name)
        if current is not None and not current.consumed:
            counters["superseded"] = counters.get("superseded", 0) + 1
        setattr(self, slot_name, _Slot(msg=msg, receive_us=now_us))


@dataclass(slots=True)
class Session:
    conn_id: str
    phase: SessionPhase = SessionPhase.IDLE
    session_id: str | None = None
    client_name: str = ""
    mailbox: Mailbox = field(default_factory=Mailbox)
    mapping: mp.MappingConfig = field(default_factory=mp.MappingConfig)
    engage_state: mp.EngageState | None = None
    wrist_mode: bool = False  # engaged from a hand stream; locked until disengage
    gripper_open: bool = True
    pinch_aperture: float | None = None
    hand_cmd_hold: tuple[float, ...] | None = None
    last_command: sw.Command | None = None
    last_pose_seq: int = -1
    last_hand_seq: int = -1
    pair_failures: int = 0
    counters: dict = field(default_factory=dict)
    report_seq: int = 0
    ticks_since_report: int = 10**9  # emit on the first eligible tick
    retarget_state: object | None = None
    recording: DemoWriter | None = None
    tick_config_events: list = field(default_factory=list)
    warned_unpaired: bool = False
    closed: bool = False

    def count(self, reason: str) -> None:
        self.counters[reason] = self.counters.get(reason, 0) + 1


@dataclass(frozen=True, slots=True)
class HandleResult:
    outbound: tuple[StreamMessage, ...] = ()
    close: bool = False


@dataclass(frozen=True, slots=True)
class TickResult:
    outbound: tuple[tuple[str, StreamMessage], ...] = ()


def _pose_doc(msg: PoseUpdate, recv_us: int) -> dict:
    return {
        "seq": msg.seq,
        "timestamp_us": msg.timestamp_us,
        "recv_us": recv_us,
        "pose": list(msg.pose.serialize()),
    }


def _hand_doc(msg: HandUpdate, recv_us: int) -> dict:
    doc = _pose_doc(msg, recv_us)
    doc["landmarks"] = [[p.x, p.y, p.z] for p in msg.landmarks]
    return doc


def _config_doc(msg: ConfigUpdate) -> dict:
    doc: dict = {}
    if msg.translation_scale is not None:
        doc["translation_scale"] = msg.translation_scale
    if msg.locks is not None:
        doc["locks"] = {
            "tx": msg.locks.lock_tx,
            "ty": msg.locks.lock_ty,
            "tz": msg.locks.lock_tz,
            "rotation": msg.locks.lock_rotation,
        }
    return doc


class ServerCore:
    """One robot, one scene, any number of sessions, at most one engaged."""

    def __init__(
        self,
        scene: sw.Scene,
        control_rate_hz: int = 100,
        mapping_cfg: mp.MappingConfig | None = None,
        hand_profile=None,
        registry=None,
        buttons: dict[str, ButtonBinding] | None = None,
        demo_dir=None,
    ):
        if not (1 <= control_rate_hz <= 1000):
            raise ValueError(f"control_rate_hz out of range: {control_rate_hz}")
        self.scene = scene
        self.control_rate_hz = int(control_rate_hz)
        self.dt = 1.0 / self.control_rate_hz
        self.mapping_cfg_default = mapping_cfg if mapping_cfg is not None else mp.MappingConfig()
        self.hand_profile = hand_profile if hand_profile is not None else scene.hand_profile
        self.registry = registry
        self.buttons = dict(DEFAULT_BUTTONS) if buttons is None else dict(buttons)
        self.demo_dir = demo_dir
        self.sessions: dict[str, Session] = {}
        self.engaged_conn: str | None = None
        self.tick_index = 0
        self.trial_clock: sw.TrialClock | None = None
        self.trial_success = False
        self._session_counter = 0
        self._demo_counter = 0
        self._last_tick_us: int | None = None
        self._report_every = max(1, round(self.control_rate_hz / IDLE_REPORT_HZ))

    # -- connection lifecycle -------------------------------------------------

    def connect(self, conn_id: str, now_us: int) -> Session:
        if conn_id in self.sessions:
            raise ValueError(f"connection id already in use: {conn_id}")
        sess = Session(conn_id=conn_id, mapping=self._fresh_mapping())
        self.sessions[conn_id] = sess
        return sess

    def disconnect(self, conn_id: str, now_us: int) -> None:
        sess = self.sessions.pop(conn_id, None)
        if sess is None:
            return
        if self.engaged_conn == conn_id:
            self.engaged_conn = None  # robot holds; nobody is commanding it
        self._stop_recording(sess)
        sess.phase = SessionPhase.IDLE
        sess.closed = True

    def _fresh_mapping(self) -> mp.MappingConfig:
        d = self.mapping_cfg_default
        return mp.MappingConfig(
            alignment=d.alignment,
            hand_offset=d.hand_offset,
            translation_scale=d.translation_scale,
            locks=d.locks,
        )

    def force_paired(self, conn_id: str) -> Session:
        """Skip pairing; used by demo replay, which reruns a recorded session."""
        sess = self.sessions[conn_id]
        sess.phase = SessionPhase.PAIRED
        self._session_counter += 1
        sess.session_id = f"s{self._session_counter:04d}"
        return sess

    # -- inbound messages -----------------------------------------------------

    def handle_message(self, conn_id: str, msg: StreamMessage, now_us: int) -> HandleResult:
        sess = self.sessions[conn_id]
        if isinstance(msg, PairRequest):
            return self._handle_pair(sess, msg, now_us)
        if sess.phase is SessionPhase.IDLE:
            sess.count("unpaired_input")
            if not sess.warned_unpaired:
                sess.warned_unpaired = True
                return HandleResult(
                    outbound=(ErrorMsg(code="not_paired", detail="pair before streaming"),)
                )
            return HandleResult()
        if isinstance(msg, PoseUpdate) and not isinstance(msg, HandUpdate):
            return self._handle_stream(sess, msg, now_us, "latest_pose", "last_pose_seq")
        if isinstance(msg, HandUpdate):
            return self._handle_stream(sess, msg, now_us, "latest_hand", "last_hand_seq")
        if isinstance(msg, ButtonEvent):
            if msg.action == "press":
                sess.mailbox.pending_buttons.append(msg.button_id)
            return HandleResult()
        if isinstance(msg, ConfigUpdate):
            return self._handle_config(sess, msg)
        # Server-to-client types bounced back at us, and anything future.
        sess.count("illegal_message")
        return HandleResult(
            outbound=(ErrorMsg(code="unexpected", detail=f"cannot accept {msg.type}"),)
        )

    def _handle_pair(self, sess: Session, msg: PairRequest, now_us: int) -> HandleResult:
        if sess.phase is not SessionPhase.IDLE:
            sess.count("illegal_message")
            return HandleResult(outbound=(ErrorMsg(code="protocol", detail="already paired"),))
        ok = self.registry.redeem(msg.code, now_us) if self.registry is not None else False
        if not ok:
            sess.pair_failures += 1
            close = sess.pair_failures >= MAX_PAIR_FAILURES
            detail = "invalid or expired code"
            if close:
                detail += "; closing after repeated failures"
            return HandleResult(
                outbound=(ErrorMsg(code="pairing_failed", detail=detail),), close=close
            )
        sess.phase = SessionPhase.PAIRED
        sess.client_name = msg.client_name
        self._session_counter += 1
        sess.session_id = f"s{self._session_counter:04d}"
        caps = {
            "scene": self.scene.name,
            "arm_dof": self.scene.arm.dof,
            "control_rate_hz": self.control_rate_hz,
            "max_translation_scale": mp.MAX_TRANSLATION_SCALE,
        }
        return HandleResult(
            outbound=(PairAccept(session_id=sess.session_id, server_capabilities=caps),)
        )

    def _handle_stream(
        self, sess: Session, msg, now_us: int, slot_name: str, seq_attr: str
    ) -> HandleResult:
        if msg.seq <= getattr(sess, seq_attr):
            sess.count("stale_seq")
            return HandleResult()
        if now_us - msg.timestamp_us > STALENESS_BUDGET_US:
            sess.count("stale_time")
            return HandleResult()
        setattr(sess, seq_attr, msg.seq)
        sess.mailbox.offer(slot_name, msg, now_us, sess.counters)
        return HandleResult(outbound=(Ack(of_seq=msg.seq),))

    def _handle_config(self, sess: Session, msg: ConfigUpdate) -> HandleResult:
        if msg.translation_scale is not None and not (
            0.0 < msg.translation_scale <= mp.MAX_TRANSLATION_SCALE
        ):
            sess.count("config_rejected")
            return HandleResult(
                outbound=(
                    ErrorMsg(
                        code="config_rejected",
                        detail=f"translation_scale must be in (0, {mp.MAX_TRANSLATION_SCALE}]",
                    ),
                )
            )
        self._apply_config_doc(sess, _config_doc(msg))
        return HandleResult()

    def _apply_config_doc(self, sess: Session, doc: dict) -> None:
        if "translation_scale" in doc:
            sess.mapping.translation_scale = float(doc["translation_scale"])
        if "locks" in doc:
            lk = doc["locks"]
            sess.mapping.locks = mp.AxisLockMask(
                lock_tx=bool(lk.get("tx", False)),
                lock_ty=bool(lk.get("ty", False)),
                lock_tz=bool(lk.get("tz", False)),
                lock_rotation=bool(lk.get("rotation", False)),
            )
        sess.tick_config_events.append(doc)

    # -- recording ------------------------------------------------------------

    def begin_recording(self, conn_id: str, writer: DemoWriter) -> None:
        sess = self.sessions[conn_id]
        if sess.recording is not None:
            raise ValueError("already recording")
        sess.recording = writer

    def end_recording(self, conn_id: str) -> None:
        self._stop_recording(self.sessions[conn_id])

    def _stop_recording(self, sess: Session) -> None:
        if sess.recording is not None:
            writer, sess.recording = sess.recording, None
            try:
                writer.close()
            except RecorderError as exc:
                log.warning("closing demo writer failed: %s", exc)

    def _start_recording(self, sess: Session, now_us: int, msgs: list) -> None:
        if sess.recording is not None:
            return
        if self.demo_dir is None:
            msgs.append(
                ErrorMsg(code="recording_unavailable", detail="server has no demo directory")
            )
            return
        self._demo_counter += 1
        path = _Path(self.demo_dir) / f"demo_{self._demo_counter:03d}.demo"
        header = make_header(
            self.scene, sess.mapping, self.control_rate_hz, now_us, self.hand_profile
        )
        try:
            sess.recording = DemoWriter(path, header)
        except RecorderError as exc:
            msgs.append(ErrorMsg(code="recording_failed", detail=str(exc)))

    # -- the control tick -----------------------------------------------------

    def control_tick(self, now_us: int) -> TickResult:
        """Run one tick. The tick cadence may be irregular (the transport
        kicks an early tick when input lands); the simulated time step is
        the measured gap, recorded per frame so replay reuses it exactly."""
        if self._last_tick_us is None:
            dt_us = round(self.dt * 1e6)
        else:
            dt_us = min(max(now_us - self._last_tick_us, 1), 100_000)
        self._last_tick_us = now_us

        outbound: list[tuple[str, StreamMessage]] = []
        tick = self.tick_index
        self.tick_index += 1
        for conn_id in list(self.sessions):
            sess = self.sessions[conn_id]
            if sess.phase is SessionPhase.IDLE:
                continue
            frame, report, msgs = self._tick_session(
                sess, now_us, tick, dt_us, build_frame=sess.recording is not None
            )
            for m in msgs:
                outbound.append((conn_id, m))
            if report is not None:
                outbound.append((conn_id, report))
            if sess.recording is not None:
                try:
                    sess.recording.record_frame(frame)
                except RecorderError as exc:
                    self._stop_recording(sess)
                    outbound.append(
                        (conn_id, ErrorMsg(code="recording_failed", detail=str(exc)))
                    )
        return TickResult(outbound=tuple(outbound))

    def replay_tick(self, conn_id: str, frame: dict) -> dict:
        """Inject one recorded frame's inputs and rerun the tick it described."""
        sess = self.sessions[conn_id]
        inputs = frame.get("inputs", {})
        for doc in inputs.get("config") or []:
            self._apply_config_doc(sess, doc)
        pose_doc = inputs.get("pose")
        if pose_doc is not None:
            msg = PoseUpdate(
                seq=pose_doc["seq"],
                timestamp_us=pose_doc["timestamp_us"],
                pose=Pose.deserialize(pose_doc["pose"]),
            )
            sess.mailbox.latest_pose = _Slot(msg=msg, receive_us=pose_doc["recv_us"])
        hand_doc = inputs.get("hand")
        if hand_doc is not None:
            msg = HandUpdate(
                seq=hand_doc["seq"],
                timestamp_us=hand_doc["timestamp_us"],
                pose=Pose.deserialize(hand_doc["pose"]),
                landmarks=tuple(Vec3(*p) for p in hand_doc["landmarks"]),
            )
            sess.mailbox.latest_hand = _Slot(msg=msg, receive_us=hand_doc["recv_us"])
        for button_id in inputs.get("buttons") or []:
            sess.mailbox.pending_buttons.append(button_id)
        dt_us = frame.get("dt_us", round(self.dt * 1e6))
        produced, _report, _msgs = self._tick_session(
            sess, frame["now_us"], frame["tick"], dt_us, build_frame=True
        )
        return produced

    def _tick_session(self, sess: Session, now_us: int, tick: int, dt_us: int,
                      build_frame: bool = False):
        msgs: list[StreamMessage] = []
        config_events = sess.tick_config_events
        sess.tick_config_events = []
        drained = self._drain_buttons(sess, now_us, msgs)
        self._check_stream_gap(sess, now_us, msgs)

        consumed_pose = consumed_hand = None
        command = None
        if sess.phase is SessionPhase.ENGAGED:
            consumed_pose, consumed_hand, command = self._compute_command(sess, now_us)
            if command is not None:
                sw.step(self.scene, command, dt_us / 1e6)
                sess.last_command = command
        self._latch_trial()

        frame = None
        if build_frame:
            frame = self._build_frame(
                sess, tick, now_us, dt_us, config_events, drained,
                consumed_pose, consumed_hand, command,
            )
        report = self._maybe_report(sess, consumed_pose, consumed_hand)
        return frame, report, msgs

    def _drain_buttons(self, sess: Session, now_us: int, msgs: list) -> list[str]:
        drained: list[str] = []
        while sess.mailbox.pending_buttons:
            button_id = sess.mailbox.pending_buttons.popleft()
            drained.append(button_id)
            binding = self.buttons.get(button_id)
            if binding is None:
                sess.count("unknown_button")
                continue
            self._apply_button(sess, binding, now_us, msgs)
        return drained

    def _apply_button(self, sess: Session, binding: ButtonBinding, now_us: int, msgs: list):
        act = binding.action
        if act == "engage_reset":
            if sess.phase is SessionPhase.ENGAGED:
                self._disengage(sess)
            elif sess.phase is SessionPhase.PAIRED:
                self._try_engage(sess, now_us, msgs)
            else:
                sess.count("illegal_event")
        elif act == "toggle_lock":
            sess.mapping.locks = sess.mapping.locks.toggled(binding.axis)
        elif act == "scale_delta":
            new = sess.mapping.translation_scale * binding.factor
            sess.mapping.translation_scale = min(max(new, 1e-6), mp.MAX_TRANSLATION_SCALE)
        elif act == "gripper_toggle":
            sess.gripper_open = not sess.gripper_open
        elif act == "start_recording":
            self._start_recording(sess, now_us, msgs)
        elif act == "stop_recording":
            self._stop_recording(sess)
        else:
            sess.count("unknown_button")

    def _try_engage(self, sess: Session, now_us: int, msgs: list) -> None:
        if self.engaged_conn is not None and self.engaged_conn != sess.conn_id:
            sess.count("busy_rejected")
            msgs.append(ErrorMsg(code="busy", detail="robot busy: another session is engaged"))
            return
        slot = sess.mailbox.latest_hand or sess.mailbox.latest_pose
        if slot is None or now_us - slot.receive_us > STALENESS_BUDGET_US:
            sess.count("engage_no_pose")
            msgs.append(
                ErrorMsg(code="engage_failed", detail="no fresh device pose to engage from")
            )
            return
        wrist = isinstance(slot.msg, HandUpdate)
        device = mp.hand_pose(slot.msg.pose, sess.mapping) if wrist else slot.msg.pose
        sess.engage_state = mp.engage(device, self.scene.ee_pose(), now_us)
        sess.wrist_mode = wrist
        sess.phase = SessionPhase.ENGAGED
        sess.last_command = None
        self.engaged_conn = sess.conn_id
        if self.trial_clock is None:
            self.trial_clock = sw.TrialClock(
                started_at_us=now_us, limit_s=self.scene.trial_limit_s
            )
        if self.scene.hand is not None and isinstance(self.hand_profile, RetargetProfile):
            sess.retarget_state = retarget_bind(
                self.scene.hand, self.hand_profile.config, self.scene.hand_q
            )

    def _disengage(self, sess: Session) -> None:
        sess.phase = SessionPhase.PAIRED
        sess.engage_state = None
        sess.last_command = None
        sess.retarget_state = None
        sess.pinch_aperture = None
        sess.hand_cmd_hold = None
        if self.engaged_conn == sess.conn_id:
            self.engaged_conn = None

    def _check_stream_gap(self, sess: Session, now_us: int, msgs: list) -> None:
        if sess.phase is not SessionPhase.ENGAGED:
            return
        slot = sess.mailbox.latest_hand if sess.wrist_mode else sess.mailbox.latest_pose
        if slot is None or now_us - slot.receive_us >= POSE_GAP_DISENGAGE_US:
            sess.count("pose_gap_disengage")
            self._disengage(sess)
            msgs.append(
                ErrorMsg(code="pose_gap", detail="device stream gap >= 1 s; disengaged")
            )

    def _fresh_slot(self, slot: _Slot | None, now_us: int) -> _Slot | None:
        if slot is None or slot.consumed:
            return None
        if now_us - slot.receive_us > STALENESS_BUDGET_US:
            return None
        return slot

    def _compute_command(self, sess: Session, now_us: int):
        """One command per tick: fresh input if any, else re-assert the hold."""
        consumed_pose = consumed_hand = None
        if sess.wrist_mode:
            slot = self._fresh_slot(sess.mailbox.latest_hand, now_us)
            if slot is not None:
                slot.consumed = True
                consumed_hand = slot
        else:
            slot = self._fresh_slot(sess.mailbox.latest_pose, now_us)
            if slot is not None:
                slot.consumed = True
                consumed_pose = slot

        if slot is not None:
            device = (
                mp.hand_pose(slot.msg.pose, sess.mapping)
                if sess.wrist_mode
                else slot.msg.pose
            )
            ee_target = mp.command_pose(sess.engage_state, sess.mapping, device)
        elif sess.last_command is not None:
            ee_target = sess.last_command.ee_target
        else:
            ee_target = sess.engage_state.ee_ref

        if consumed_hand is not None:
            frame = HandFrame(
                landmarks=consumed_hand.msg.landmarks,
                device_pose=consumed_hand.msg.pose,
                timestamp_us=consumed_hand.msg.timestamp_us,
            )
            if isinstance(self.hand_profile, RetargetProfile) and sess.retarget_state is not None:
                sess.hand_cmd_hold = retarget_step(
                    self.scene.hand, self.hand_profile.config, sess.retarget_state, frame
                )
            elif isinstance(self.hand_profile, ApertureProfile):
                sess.pinch_aperture = self.hand_profile.aperture(frame)

        # Pinch distance wins over the toggle button once hand frames flow;
        # with no fresh frame both hold their last value.
        if sess.pinch_aperture is not None:
            aperture = sess.pinch_aperture
        else:
            aperture = self.scene.max_aperture if sess.gripper_open else 0.0

        return consumed_pose, consumed_hand, sw.Command(
            ee_target=ee_target, hand_q=sess.hand_cmd_hold, aperture=aperture
        )

    def _latch_trial(self) -> None:
        if self.trial_clock is None or self.trial_success:
            return
        if any(self.scene.detector_flags().values()):
            self.trial_success = True

    def trial_status(self, now_us: int) -> str:
        if self.trial_clock is None:
            return "idle"
        return sw.trial_status(self.trial_clock, now_us, self.trial_success)

    def _build_frame(
        self, sess, tick, now_us, dt_us, config_events, drained,
        consumed_pose, consumed_hand, command,
    ) -> dict:
        scene = self.scene
        return {
            "tick": tick,
            "now_us": now_us,
            "dt_us": dt_us,
            "inputs": {
                "pose": _pose_doc(consumed_pose.msg, consumed_pose.receive_us)
                if consumed_pose
                else None,
                "hand": _hand_doc(consumed_hand.msg, consumed_hand.receive_us)
                if consumed_hand
                else None,
                "buttons": drained,
                "config": config_events,
            },
            "ee_target": list(command.ee_target.serialize()) if command else None,
            "hand_cmd": list(command.hand_q) if command and command.hand_q is not None else None,
            "aperture": command.aperture if command else None,
            "arm_q": list(scene.arm_q),
            "hand_state": list(scene.hand_q) if scene.hand is not None else None,
            "aperture_state": scene.aperture,
            "ee_pose": list(scene.ee_pose().serialize()),
            "scene_digest": scene.state_digest(),
        }

    def _maybe_report(self, sess: Session, consumed_pose, consumed_hand) -> StateReport | None:
        consumed = consumed_pose or consumed_hand
        sess.ticks_since_report += 1
        if consumed is None and sess.ticks_since_report < self._report_every:
            return None
        sess.ticks_since_report = 0
        report = StateReport(
            seq=sess.report_seq,
            ee_pose=self.scene.ee_pose(),
            joint_vector=tuple(self.scene.arm_q),
            engaged=sess.phase is SessionPhase.ENGAGED,
            detector_flags=self.scene.detector_flags(),
            input_seq=consumed.msg.seq if consumed is not None else None,
        )
        sess.report_seq += 1
        return report

    # -- observability ---------------------------------------------------------

    def world_snapshot(self, now_us: int) -> dict:
        doc = self.scene.world_state()
        doc["trial"] = {
            "status": self.trial_status(now_us),
            "limit_s": self.scene.trial_limit_s,
            "elapsed_s": (
                (now_us - self.trial_clock.started_at_us) / 1e6 if self.trial_clock else 0.0
            ),
        }
        doc["engaged"] = self.engaged_conn is not None
        doc["sessions"] = [
            {
                "session_id": s.session_id,
                "phase": s.phase.value,
                "client_name": s.client_name,
                "counters": dict(s.counters),
            }
            for s in self.sessions.values()
            if s.phase is not SessionPhase.IDLE
        ]
        return doc
