/**
 * DOM wiring. All logic lives in the imported modules; this file only
 * binds widgets to them. Connection target defaults to the page's own
 * host and can be overridden with ?host=...&port=....
 */

import { ConsoleClient } from "./client.js";
import { handLandmarks } from "./hand.js";
import { DeviceSensors, InputMode, VirtualSixDof } from "./inputs.js";
import { buttonEvent, codeProblem, configUpdate, Locks } from "./messages.js";
import { drawWorld, Viewport, WorldSnapshot } from "./scene2d.js";
import { FrameSample, rafPump, StreamLoop } from "./stream.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const params = new URLSearchParams(location.search);
const host = params.get("host") ?? location.hostname;
const port = params.get("port") ?? location.port;
const wsUrl = `ws://${host}:${port}/ws`;
const restBase = `http://${host}:${port}`;

const client = new ConsoleClient((url) => {
  const ws = new WebSocket(url);
  return {
    send: (d: string) => ws.send(d),
    close: () => ws.close(),
    get bufferedAmount() {
      return ws.bufferedAmount;
    },
    set onopen(cb: (() => void) | null) {
      ws.onopen = cb;
    },
    set onclose(cb: (() => void) | null) {
      ws.onclose = cb;
    },
    set onmessage(cb: ((data: string) => void) | null) {
      ws.onmessage = cb ? (ev) => cb(String(ev.data)) : null;
    },
  };
});

const virtual = new VirtualSixDof();
const sensors = new DeviceSensors();
let mode: InputMode = "virtual_6dof";
let handDemo = false;
const curls = [0, 0, 0, 0, 0];

function sampleFrame(): FrameSample {
  const src = mode === "virtual_6dof" ? virtual : sensors;
  if (handDemo) return { pose: src.samplePose(), landmarks: handLandmarks(curls) };
  return { pose: src.samplePose() };
}

const stream = new StreamLoop(
  rafPump(),
  {
    send: (t) => client.sendRaw(t),
    bufferedAmount: () => client.socket?.bufferedAmount ?? 0,
  },
  sampleFrame,
  { onSent: client.noteSent },
);

// --- pairing ---------------------------------------------------------------

const codeInput = el<HTMLInputElement>("code");
const pairStatus = el<HTMLSpanElement>("pair-status");

el<HTMLButtonElement>("pair").addEventListener("click", () => {
  const code = codeInput.value.trim().toUpperCase();
  const problem = codeProblem(code);
  if (problem) {
    pairStatus.textContent = problem; // client-side: nothing is sent
    return;
  }
  pairStatus.textContent = "pairing...";
  if (client.phase === "disconnected") {
    client.connect(wsUrl);
    const prev = client.onPhase;
    client.onPhase = (p) => {
      prev?.(p);
      if (p === "connected") client.pair(code, "console");
    };
  } else {
    client.pair(code, "console");
  }
});

client.onPhase = (p) => {
  el("phase").textContent = p;
  if (p === "paired") {
    pairStatus.textContent = `paired (${JSON.stringify(client.capabilities)})`;
    stream.start(); // stream runs from Paired on; idle inputs are identity poses
  }
  if (p === "disconnected") {
    stream.stop();
    if (client.pairFailures >= 3) pairStatus.textContent = "too many failures; reconnect";
  }
};

setInterval(() => {
  const err = client.lastError;
  if (err && err.code === "pairing_failed") {
    pairStatus.textContent =
      client.pairFailures >= 3 ? "rejected 3x; connection closed" : `rejected: ${err.detail}`;
  }
}, 300);

// --- input widgets ----------------------------------------------------------

function bindStick(id: string, onDrag: (dx: number, dy: number) => void): void {
  const pad = el<HTMLDivElement>(id);
  let last: [number, number] | null = null;
  pad.addEventListener("pointerdown", (ev) => {
    pad.setPointerCapture(ev.pointerId);
    last = [ev.clientX, ev.clientY];
  });
  pad.addEventListener("pointermove", (ev) => {
    if (!last) return;
    onDrag(ev.clientX - last[0], ev.clientY - last[1]);
    last = [ev.clientX, ev.clientY];
  });
  const up = () => (last = null);
  pad.addEventListener("pointerup", up);
  pad.addEventListener("pointercancel", up);
}

bindStick("stick-left", (dx, dy) =>
  mode === "virtual_6dof" ? virtual.dragTranslate(dx, dy) : sensors.dragTranslate(dx, dy),
);
bindStick("stick-right", (dx, dy) => {
  if (mode === "virtual_6dof") virtual.dragRotate(dx, dy);
});
el<HTMLDivElement>("stick-right").addEventListener("wheel", (ev) => {
  ev.preventDefault();
  if (mode === "virtual_6dof") virtual.twistRoll(ev.deltaY * 0.002);
});
el<HTMLInputElement>("z-slider").addEventListener("input", function (this: HTMLInputElement) {
  const v = Number(this.value);
  const target = mode === "virtual_6dof" ? virtual : sensors;
  target.z = v * 0.001;
});

el<HTMLSelectElement>("mode").addEventListener("change", function (this: HTMLSelectElement) {
  if (this.value === "device_sensors" && !sensors.available) {
    // sensor mode only once the browser has granted permission
    const do_ = window.DeviceOrientationEvent as unknown as {
      requestPermission?: () => Promise<string>;
    };
    (do_.requestPermission?.() ?? Promise.resolve("granted")).then((r) => {
      if (r === "granted") {
        window.addEventListener("deviceorientation", (ev) =>
          sensors.onOrientation(ev.alpha, ev.beta, ev.gamma),
        );
        sensors.available = true;
        mode = "device_sensors";
      } else {
        this.value = "virtual_6dof";
      }
    });
    return;
  }
  mode = this.value as InputMode;
});

el<HTMLInputElement>("hand-demo").addEventListener("change", function (this: HTMLInputElement) {
  handDemo = this.checked;
  el("curl-panel").style.display = handDemo ? "" : "none";
});
for (let i = 0; i < 5; i++) {
  el<HTMLInputElement>(`curl-${i}`).addEventListener("input", function (this: HTMLInputElement) {
    curls[i] = Number(this.value);
  });
}

// --- buttons and config ----------------------------------------------------

for (const [btn, id] of [
  ["engage", "engage_reset"],
  ["gripper", "gripper_toggle"],
] as const) {
  el<HTMLButtonElement>(btn).addEventListener("click", () => {
    if (client.phase === "paired") client.sendRaw(buttonEvent(id, "press"));
  });
}
let recording = false;
el<HTMLButtonElement>("record").addEventListener("click", () => {
  if (client.phase !== "paired") return;
  client.sendRaw(buttonEvent(recording ? "stop_recording" : "start_recording", "press"));
  recording = !recording;
  el("record").textContent = recording ? "stop recording" : "record";
});

const locks: Locks = { tx: false, ty: false, tz: false, rotation: false };
for (const axis of ["tx", "ty", "tz", "rotation"] as const) {
  el<HTMLInputElement>(`lock-${axis}`).addEventListener(
    "change",
    function (this: HTMLInputElement) {
      locks[axis] = this.checked;
      if (client.phase === "paired") client.sendRaw(configUpdate({ locks }));
    },
  );
}
el<HTMLInputElement>("scale").addEventListener("change", function (this: HTMLInputElement) {
  el("scale-value").textContent = this.value;
  if (client.phase === "paired") {
    client.sendRaw(configUpdate({ translationScale: Number(this.value) }));
  }
});

// --- live view ---------------------------------------------------------------

const canvas = el<HTMLCanvasElement>("scene");
const viewport: Viewport = {
  widthPx: canvas.width,
  heightPx: canvas.height,
  spanM: 1.2,
  centerX: 0.2,
  centerY: 0,
};
let world: WorldSnapshot | null = null;

async function pollWorld(): Promise<void> {
  try {
    const r = await fetch(`${restBase}/world`);
    world = (await r.json()) as WorldSnapshot;
  } catch {
    world = null;
  }
}
setInterval(pollWorld, 100);

function fmt(n: number): string {
  return n.toFixed(3);
}

function render(): void {
  const ctx = canvas.getContext("2d");
  if (ctx && world) drawWorld(ctx, viewport, world);

  const r = client.lastReport;
  if (r) {
    el("ee").textContent =
      `xyz [${fmt(r.eePose[4])}, ${fmt(r.eePose[5])}, ${fmt(r.eePose[6])}]  ` +
      `q [${r.eePose.slice(0, 4).map(fmt).join(", ")}]`;
    el("joints").innerHTML = r.jointVector
      .map((q) => `<span class="bar" style="height:${8 + Math.min(40, Math.abs(q) * 20)}px"></span>`)
      .join("");
    el("flags").textContent =
      Object.entries(r.detectorFlags)
        .filter(([, v]) => v)
        .map(([k]) => k)
        .join(", ") || "none";
    el("engaged").textContent = r.engaged ? "engaged" : "clutched";
    el("engaged").className = r.engaged ? "badge on" : "badge";
  }
  const p50 = client.latencyPercentile(50);
  const p95 = client.latencyPercentile(95);
  el("latency").textContent = p50 === null ? "n/a" : `${p50.toFixed(1)} / ${p95!.toFixed(1)} ms`;
  el("counters").textContent =
    `sent ${stream.sent}  acked ${client.acked}  dropped ${stream.dropped}  ` +
    `reports ${client.reportCount}  decode errors ${client.decodeErrors}`;
  // reports older than half a second mean the view is no longer live
  el("stalled").style.display = client.stalled() ? "" : "none";
  if (world) {
    el("trial").textContent = `${world.trial.status} ${world.trial.elapsed_s.toFixed(1)}s / ${world.trial.limit_s}s`;
  }
  requestAnimationFrame(render);
}
requestAnimationFrame(render);
