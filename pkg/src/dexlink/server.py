"""WebSocket + REST transport around the session core.

One uvicorn event loop runs everything: connection handlers decode
wire messages and hand them to the core, and a single control task
ticks the core. Because both run on the same loop there is no shared
state to guard; the mailbox handoff is plain attribute assignment.

The control task sleeps toward a fixed-rate deadline but can be kicked
early when input lands, so a pose update does not wait out the rest of
a control period before it is consumed and reported. Tick time steps
are measured, not assumed, and each recorded frame carries its own dt.

REST surface (pydantic-modelled): /healthz, /pair (current pairing
code; reissued once consumed or expired), /world (scene snapshot for
the console's plot). Static console assets are served under /console
when a build directory is configured.
"""

from __future__ import annotations

import asyncio
import logging
import random
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from pydantic import BaseModel

from .kinematics import load_model_file
from .protocol import (
    CodeRegistry,
    ErrorMsg,
    MalformedMessage,
    NonFiniteField,
    PairAccept,
    ProtocolError,
    UnsupportedVersion,
    decode,
    encode,
)
from .recorder import DemoWriter, make_header
from .retarget import load_profile
from .session import ServerCore
from .simworld import load_scene

__all__ = [
    "ServerSettings",
    "build_scene",
    "resolve_scene_path",
    "create_app",
    "OUTBOX_LIMIT",
]

log = logging.getLogger(__name__)

OUTBOX_LIMIT = 512  # per-connection outbound queue; oldest dropped when full
MIN_TICK_GAP_S = 0.001


def _now_us() -> int:
    return time.time_ns() // 1000


def resolve_scene_path(ref: str) -> Path:
    """Accept a filesystem path or the name of a bundled scene."""
    p = Path(ref)
    if p.exists():
        return p
    from .assets import asset_path

    name = ref if ref.endswith((".yaml", ".yml")) else f"{ref}.yaml"
    return asset_path("scenes", name)


def build_scene(scene_ref: str, arm: str | None = None, hand: str | None = None,
                profile: str | None = None):
    """Load a scene file and apply model/profile overrides."""
    scene = load_scene(resolve_scene_path(scene_ref))
    if arm is not None:
        model = load_model_file(arm)
        scene.arm = model
        scene.ee_frame = model.links[-1]
        scene.arm_q = scene.home_q = model.zero_q()
    if hand is not None:
        model = load_model_file(hand)
        scene.hand = model
        scene.hand_q = model.zero_q()
    if profile is not None:
        scene.hand_profile = load_profile(profile)
    return scene


# ---------------------------------------------------------------------------
# REST models


class HealthResponse(BaseModel):
    status: str
    scene: str
    tick: int
    uptime_s: float
    engaged: bool


class PairStatusResponse(BaseModel):
    code: str
    expires_in_s: float
    active_sessions: int


class TrialInfo(BaseModel):
    status: str
    limit_s: float
    elapsed_s: float


class ObjectState(BaseModel):
    name: str
    pose: list[float]
    width: float
    attached: bool


class FixtureState(BaseModel):
    name: str
    type: str
    value: float
    fraction: float
    handle: list[float]
    gripped: bool


class SessionInfo(BaseModel):
    session_id: str | None
    phase: str
    client_name: str
    counters: dict[str, int]


class WorldResponse(BaseModel):
    ee: list[float]
    aperture: float
    arm_q: list[float]
    hand_q: list[float]
    objects: list[ObjectState]
    fixtures: list[FixtureState]
    trial: TrialInfo
    engaged: bool
    sessions: list[SessionInfo]


# ---------------------------------------------------------------------------
# server state


@dataclass
class ServerSettings:
    scene_ref: str = "ms_pick"
    arm: str | None = None
    hand: str | None = None
    profile: str | None = None
    control_rate_hz: int = 100
    record_path: str | None = None
    demo_dir: str | None = None
    console_dir: str | None = None
    seed: int | None = None


class _State:
    def __init__(self, settings: ServerSettings, scene):
        self.settings = settings
        self.registry = CodeRegistry()
        self.rng = random.Random(settings.seed)
        self.core = ServerCore(
            scene=scene,
            control_rate_hz=settings.control_rate_hz,
            registry=self.registry,
            demo_dir=settings.demo_dir,
        )
        self.outboxes: dict[str, asyncio.Queue] = {}
        self.kick = asyncio.Event()
        self.stop = asyncio.Event()
        self.started_mono = time.monotonic()
        self.current_code = None
        self.record_started = False
        self._conn_counter = 0

    def next_conn_id(self) -> str:
        self._conn_counter += 1
        return f"conn{self._conn_counter}"

    def pairing_code(self):
        """The advertised code; replaced once redeemed or expired."""
        now = _now_us()
        pc = self.current_code
        if pc is None or not pc.valid_at(now) or not self.registry.is_active(pc.code):
            pc = self.registry.issue(self.rng, now)
            self.current_code = pc
        return pc

    def offer(self, q: asyncio.Queue, msg) -> None:
        while True:
            try:
                q.put_nowait(msg)
                return
            except asyncio.QueueFull:
                try:
                    q.get_nowait()  # drop the oldest; the stream is latest-wins
                except asyncio.QueueEmpty:
                    pass

    def send(self, conn_id: str, msg) -> None:
        q = self.outboxes.get(conn_id)
        if q is not None:
            self.offer(q, msg)


async def _sender(ws: WebSocket, q: asyncio.Queue):
    try:
        while True:
            msg = await q.get()
            await ws.send_bytes(encode(msg))
    except Exception:
        pass  # peer went away; the receive loop owns cleanup


async def _control_loop(st: _State):
    period = 1.0 / st.core.control_rate_hz
    next_deadline = time.monotonic() + period
    last_tick = 0.0
    while not st.stop.is_set():
        timeout = next_deadline - time.monotonic()
        if timeout > 0:
            try:
                await asyncio.wait_for(st.kick.wait(), timeout)
            except asyncio.TimeoutError:
                pass
        st.kick.clear()
        now = time.monotonic()
        if now < next_deadline and now - last_tick < MIN_TICK_GAP_S:
            continue  # kicked immediately after a tick; let input accumulate
        if now >= next_deadline:
            next_deadline += period
            if next_deadline <= now:  # fell behind; resynchronize
                next_deadline = now + period
        last_tick = now
        result = st.core.control_tick(_now_us())
        for conn_id, msg in result.outbound:
            st.send(conn_id, msg)


def _decode_error_code(exc: ProtocolError) -> str:
    if isinstance(exc, NonFiniteField):
        return "nonfinite"
    if isinstance(exc, UnsupportedVersion):
        return "unsupported_version"
    if isinstance(exc, MalformedMessage):
        return "malformed"
    return "protocol"


def create_app(settings: ServerSettings | None = None, scene=None) -> FastAPI:
    settings = settings or ServerSettings()
    if scene is None:
        scene = build_scene(settings.scene_ref, settings.arm, settings.hand, settings.profile)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        st: _State = app.state.dex
        st.pairing_code()
        loop_task = asyncio.create_task(_control_loop(st))
        try:
            yield
        finally:
            st.stop.set()
            st.kick.set()
            loop_task.cancel()
            for conn_id in list(st.core.sessions):
                st.core.disconnect(conn_id, _now_us())

    app = FastAPI(title="dexlink teleoperation server", lifespan=lifespan)
    st = _State(settings, scene)
    app.state.dex = st

    @app.get("/healthz", response_model=HealthResponse)
    def healthz():
        return HealthResponse(
            status="ok",
            scene=st.core.scene.name,
            tick=st.core.tick_index,
            uptime_s=time.monotonic() - st.started_mono,
            engaged=st.core.engaged_conn is not None,
        )

    @app.get("/pair", response_model=PairStatusResponse)
    def pair_status():
        pc = st.pairing_code()
        return PairStatusResponse(
            code=pc.code,
            expires_in_s=max(0.0, (pc.expires_at_us - _now_us()) / 1e6),
            active_sessions=sum(
                s.phase.value != "idle" for s in st.core.sessions.values()
            ),
        )

    @app.get("/world", response_model=WorldResponse)
    def world():
        return WorldResponse(**st.core.world_snapshot(_now_us()))

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket):
        await websocket.accept()
        conn_id = st.next_conn_id()
        st.core.connect(conn_id, _now_us())
        q: asyncio.Queue = asyncio.Queue(maxsize=OUTBOX_LIMIT)
        st.outboxes[conn_id] = q
        sender = asyncio.create_task(_sender(websocket, q))
        want_close = False
        try:
            while True:
                event = await websocket.receive()
                if event["type"] == "websocket.disconnect":
                    break
                data = event.get("bytes") if event.get("bytes") is not None else event.get("text")
                if data is None:
                    continue
                try:
                    msg = decode(data)
                except ProtocolError as exc:
                    st.offer(q, ErrorMsg(code=_decode_error_code(exc), detail=str(exc)))
                    continue
                res = st.core.handle_message(conn_id, msg, _now_us())
                for out in res.outbound:
                    st.offer(q, out)
                st.kick.set()
                if any(isinstance(out, PairAccept) for out in res.outbound):
                    _maybe_start_recording(st, conn_id)
                if res.close:
                    want_close = True
                    break
        except WebSocketDisconnect:
            pass
        finally:
            for _ in range(20):  # let queued replies flush before teardown
                if q.empty():
                    break
                await asyncio.sleep(0.01)
            sender.cancel()
            st.outboxes.pop(conn_id, None)
            st.core.disconnect(conn_id, _now_us())
        if want_close:
            try:
                await websocket.close(code=1008)
            except Exception:
                pass

    console_dir = settings.console_dir
    if console_dir and Path(console_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=console_dir, html=True), name="console")

    return app


def _maybe_start_recording(st: _State, conn_id: str) -> None:
    if st.settings.record_path is None or st.record_started:
        return
    sess = st.core.sessions[conn_id]
    header = make_header(
        st.core.scene,
        sess.mapping,
        st.core.control_rate_hz,
        _now_us(),
        st.core.hand_profile,
    )
    st.core.begin_recording(conn_id, DemoWriter(st.settings.record_path, header))
    st.record_started = True
    log.info("recording session %s to %s", sess.session_id, st.settings.record_path)
