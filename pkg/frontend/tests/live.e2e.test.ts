/**
 * End-to-end drive against the real server binary. One gantry-scene
 * process backs the whole file; every test pairs its own connection
 * with a code fetched from /pair (codes are single-use).
 *
 * Covered here, live: pairing with a typed code including the
 * three-failures-close path, a 60 s schema-valid pose stream at well
 * over 30 Hz, lock-z holding the end-effector z fixed under a z drag,
 * and the translation-scale two-run comparison.
 */

import { existsSync } from "node:fs";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { canonicalJson } from "../src/canonical.js";
import { ConsoleClient } from "../src/client.js";
import { VirtualSixDof } from "../src/inputs.js";
import { buttonEvent, configUpdate } from "../src/messages.js";
import { StreamLoop, timerPump } from "../src/stream.js";
import { LiveServer, sleep, spawnServer, waitFor, wsFactory } from "./helpers.js";

const SCENE = join(__dirname, "fixtures", "gantry.yaml");
const DIST = join(__dirname, "..", "dist");

let server: LiveServer;

beforeAll(async () => {
  expect(existsSync(join(DIST, "index.html")), "run `npm run build` before the live tests").toBe(
    true,
  );
  server = await spawnServer(SCENE, ["--console-dir", DIST]);
}, 30_000);

afterAll(async () => {
  await server?.stop();
});

async function freshCode(): Promise<string> {
  const res = await fetch(`http://127.0.0.1:${server.port}/pair`);
  expect(res.status).toBe(200);
  const doc = (await res.json()) as { code: string };
  return doc.code;
}

interface Rig {
  client: ConsoleClient;
  device: VirtualSixDof;
  loop: StreamLoop;
  outbound: string[];
  stop(): void;
}

/** Connect, pair with a fresh code, and start a 60 Hz pose stream. */
async function pairedRig(name: string): Promise<Rig> {
  const client = new ConsoleClient(wsFactory);
  client.connect(`ws://127.0.0.1:${server.port}/ws`);
  await waitFor(() => client.phase === "connected", 5000, "socket open");
  client.pair(await freshCode(), name);
  await waitFor(() => client.phase === "paired", 5000, "pairing");

  const device = new VirtualSixDof();
  const outbound: string[] = [];
  const loop = new StreamLoop(
    timerPump(60),
    {
      send: (text) => {
        outbound.push(text);
        client.sendRaw(text);
      },
      bufferedAmount: () => client.socket?.bufferedAmount ?? 0,
    },
    () => ({ pose: device.samplePose() }),
    { onSent: client.noteSent },
  );
  loop.start();
  await waitFor(() => client.acked > 3, 5000, "first acks");
  return {
    client,
    device,
    loop,
    outbound,
    stop: () => {
      loop.stop();
      client.disconnect();
    },
  };
}

async function engage(rig: Rig): Promise<void> {
  rig.client.sendRaw(buttonEvent("engage_reset", "press"));
  await waitFor(() => rig.client.lastReport?.engaged === true, 5000, "engage");
}

async function disengage(rig: Rig): Promise<void> {
  rig.client.sendRaw(buttonEvent("engage_reset", "press"));
  await waitFor(() => rig.client.lastReport?.engaged === false, 5000, "disengage");
}

/** Mutate the input once per period while the stream runs. */
async function drive(frames: number, periodMs: number, fn: () => void): Promise<void> {
  for (let i = 0; i < frames; i++) {
    fn();
    await sleep(periodMs);
  }
}

const eeOf = (rig: Rig) => rig.client.lastReport!.eePose;

describe("live console", () => {
  it("serves the built console assets under /console", async () => {
    const res = await fetch(`http://127.0.0.1:${server.port}/console/`);
    expect(res.status).toBe(200);
    const body = await res.text();
    expect(body).toContain("js/main.js");
    const js = await fetch(`http://127.0.0.1:${server.port}/console/js/main.js`);
    expect(js.status).toBe(200);
  });

  it("pairs with a typed code and closes the socket after three bad codes", async () => {
    const client = new ConsoleClient(wsFactory);
    client.connect(`ws://127.0.0.1:${server.port}/ws`);
    await waitFor(() => client.phase === "connected", 5000, "socket open");

    const real = await freshCode();
    // shift every symbol so the guess is well-formed but wrong
    const alphabet = "ABCDEFGHJKLMNPQRSTUVWXYZ23456789";
    const wrong = [...real]
      .map((ch) => alphabet[(alphabet.indexOf(ch) + 1) % alphabet.length])
      .join("");

    for (let attempt = 1; attempt <= 3; attempt++) {
      client.pair(wrong, "console-e2e");
      await waitFor(() => client.pairFailures === attempt, 5000, `failure ${attempt}`);
      expect(client.lastError?.code).toBe("pairing_failed");
      expect(client.phase).not.toBe("paired");
    }
    // third failure: server hangs up, console must reconnect to retry
    await waitFor(() => client.needsReconnect, 5000, "server close");
    expect(client.phase).toBe("disconnected");

    client.connect(`ws://127.0.0.1:${server.port}/ws`);
    await waitFor(() => client.phase === "connected", 5000, "reconnect");
    client.pair(real, "console-e2e");
    await waitFor(() => client.phase === "paired", 5000, "pairing after reconnect");
    expect(client.sessionId).not.toBeNull();
    expect(typeof client.capabilities.control_rate_hz).toBe("number");
    client.disconnect();
  });

  it(
    "sustains a schema-valid pose stream above 30 Hz for 60 s without stalling",
    async () => {
      const rig = await pairedRig("console-e2e");
      // engage so the stream is consumed end to end; input_seq in the
      // reports then closes the latency ledger like the real console
      await engage(rig);
      const reportMarks: number[] = [];
      for (let chunk = 0; chunk < 12; chunk++) {
        await sleep(5000);
        expect(rig.client.stalled(), `stalled in chunk ${chunk}`).toBe(false);
        reportMarks.push(rig.client.reportCount);
      }
      rig.loop.stop();
      await waitFor(
        () => rig.client.acked === rig.loop.sent,
        5000,
        "acks to drain after 60 s stream",
      );
      rig.stop();

      // rate: >= 30 Hz sustained over the full minute
      expect(rig.loop.sent).toBeGreaterThanOrEqual(1800);
      expect(rig.outbound.length).toBe(rig.loop.sent);
      // reports kept flowing in every 5 s slice, not just on average
      for (let i = 1; i < reportMarks.length; i++) {
        expect(reportMarks[i]!).toBeGreaterThan(reportMarks[i - 1]!);
      }

      // every emitted frame is byte-identical to its canonical wire
      // form, and with the sticks untouched the streaming lane carries
      // nothing but pose updates (buttons go out as discrete events)
      let prevSeq = 0;
      for (const text of rig.outbound) {
        expect(canonicalJson(JSON.parse(text))).toBe(text);
        const msg = JSON.parse(text) as { type: string; seq: number };
        expect(msg.type).toBe("pose_update");
        expect(msg.seq).toBeGreaterThan(prevSeq);
        prevSeq = msg.seq;
      }
      expect(rig.client.decodeErrors).toBe(0);
      expect(rig.client.lastError).toBeNull();
      const p95 = rig.client.latencyPercentile(95);
      expect(p95).not.toBeNull();
      console.info(
        `sustain: sent=${rig.loop.sent} dropped=${rig.loop.dropped} ` +
          `reports=${rig.client.reportCount} p95=${p95!.toFixed(2)}ms`,
      );
    },
    90_000,
  );

  it(
    "holds end-effector z constant under a z drag once tz is locked",
    async () => {
      const rig = await pairedRig("console-e2e");
      await engage(rig);
      const zEngaged = eeOf(rig)[6]!;

      // control phase: the same drag with no lock moves z
      await drive(60, 16, () => rig.device.slideZ(-3));
      await sleep(400);
      const zUnlocked = eeOf(rig)[6]!;
      expect(Math.abs(zUnlocked - zEngaged)).toBeGreaterThan(0.02);

      rig.client.sendRaw(
        configUpdate({ locks: { tx: false, ty: false, tz: true, rotation: false } }),
      );
      await sleep(400); // lock lands, arm settles on the frozen z
      const z0 = eeOf(rig)[6]!;
      const zSeen: number[] = [];
      rig.client.onReport = (r) => zSeen.push(r.eePose[6]!);
      const inputZBefore = rig.device.z;
      await drive(120, 16, () => rig.device.slideZ(-3));
      rig.client.onReport = null;

      expect(rig.device.z - inputZBefore).toBeGreaterThan(0.1); // the drag really happened
      expect(zSeen.length).toBeGreaterThan(50);
      const worst = Math.max(...zSeen.map((z) => Math.abs(z - z0)));
      expect(worst).toBeLessThan(1e-9);

      await disengage(rig);
      rig.stop();
    },
    30_000,
  );

  it(
    "halves translation when the scale slider drops from 1.0 to 0.5",
    async () => {
      const rig = await pairedRig("console-e2e");

      const runDrag = async (scale: number): Promise<number> => {
        rig.client.sendRaw(configUpdate({ translationScale: scale }));
        await sleep(200);
        await engage(rig);
        await sleep(400);
        const x0 = eeOf(rig)[4]!;
        await drive(20, 16, () => rig.device.dragTranslate(5, 0)); // +100 px total
        await sleep(600); // let the arm finish converging
        const x1 = eeOf(rig)[4]!;
        await disengage(rig);
        return x1 - x0;
      };

      const dxFull = await runDrag(1.0);
      rig.device.reset();
      await sleep(200); // stream the recentered pose before re-engaging
      const dxHalf = await runDrag(0.5);
      rig.stop();

      expect(dxFull).toBeCloseTo(0.1, 2); // 100 px at 0.001 m/px, scale 1
      expect(Math.abs(dxHalf / dxFull - 0.5)).toBeLessThan(0.05);
    },
    40_000,
  );
});
