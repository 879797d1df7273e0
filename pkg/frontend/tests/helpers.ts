/**
 * Test plumbing: a node WebSocket adapter, a manually stepped frame
 * pump, and a child-process harness around the real `dexlink serve`
 * CLI for the live tests. The console code is exercised exactly as the
 * browser runs it; only the socket constructor and the pump differ.
 */

import { spawn, ChildProcess } from "node:child_process";
import { once } from "node:events";
import { createInterface } from "node:readline";
import WebSocket from "ws";

import { SocketFactory, SocketLike } from "../src/client.js";
import { FramePump } from "../src/stream.js";

export const wsFactory: SocketFactory = (url: string): SocketLike => {
  const ws = new WebSocket(url);
  let onmessage: ((data: string) => void) | null = null;
  ws.on("message", (data) => onmessage?.(data.toString()));
  return {
    send: (d) => ws.send(d),
    close: () => ws.close(),
    get bufferedAmount() {
      return ws.bufferedAmount;
    },
    set onopen(cb: (() => void) | null) {
      if (cb) ws.on("open", cb);
    },
    set onclose(cb: (() => void) | null) {
      if (cb) ws.on("close", cb);
    },
    set onmessage(cb: ((data: string) => void) | null) {
      onmessage = cb;
    },
  };
};

/** Pump stepped explicitly by the test; no timers involved. */
export class ManualPump implements FramePump {
  private cb: (() => void) | null = null;
  request(cb: () => void): number {
    this.cb = cb;
    return 1;
  }
  cancel(): void {
    this.cb = null;
  }
  step(n = 1): void {
    for (let i = 0; i < n; i++) {
      const cb = this.cb;
      this.cb = null;
      cb?.();
    }
  }
}

export interface LiveServer {
  port: number;
  code: string;
  proc: ChildProcess;
  stop(): Promise<void>;
}

/** Spawns the real CLI and reads the pairing code off its stdout. */
export async function spawnServer(scene: string, extra: string[] = []): Promise<LiveServer> {
  const port = 21000 + Math.floor(Math.random() * 20000);
  const proc = spawn(
    "dexlink",
    ["serve", "--port", String(port), "--scene", scene, ...extra],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  const lines = createInterface({ input: proc.stdout! });
  const code = await new Promise<string>((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("server never printed a code")), 10_000);
    lines.on("line", (line) => {
      const m = /^pairing code: ([A-Z2-9]{6})$/.exec(line);
      if (m) {
        clearTimeout(timer);
        resolve(m[1]!);
      }
    });
    proc.on("exit", (c) => reject(new Error(`serve exited early with ${c}`)));
    proc.stderr!.on("data", () => {});
  });
  await new Promise((r) => setTimeout(r, 300)); // let the socket start accepting
  return {
    port,
    code,
    proc,
    stop: async () => {
      proc.kill("SIGTERM");
      await Promise.race([once(proc, "exit"), new Promise((r) => setTimeout(r, 5000))]);
    },
  };
}

export function sleep(ms: number): Promise<void> {
  return new Promise((r) => setTimeout(r, ms));
}

export async function waitFor(cond: () => boolean, timeoutMs: number, what: string): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (!cond()) {
    if (Date.now() > deadline) throw new Error(`timed out waiting for ${what}`);
    await sleep(10);
  }
}
