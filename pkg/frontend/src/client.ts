/**
 * Connection and session state for the console.
 *
 * Wraps one WebSocket behind a small interface so tests can substitute
 * a node client or a fake. Tracks pairing, the latest StateReport,
 * acknowledgement and latency counters, and staleness. Latency uses
 * the same coalescing rule as the server's synthetic client: a report
 * naming input_seq N closes the clock on every recorded send at or
 * below N, because the control loop executes only the newest update
 * that arrived in a tick.
 */

import { decodeInbound, ErrorMsg, Inbound, pairRequest, StateReport } from "./messages.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  readonly bufferedAmount: number;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onmessage: ((data: string) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export type Phase = "disconnected" | "connecting" | "connected" | "paired";

const STALL_MS = 500;
const LATENCY_WINDOW = 600;

export class ConsoleClient {
  phase: Phase = "disconnected";
  sessionId: string | null = null;
  capabilities: Record<string, unknown> = {};
  lastReport: StateReport | null = null;
  lastReportAtMs = -Infinity;
  lastError: ErrorMsg | null = null;
  pairFailures = 0;
  /** set when the server closed us (e.g. three failed pairings) */
  needsReconnect = false;

  acked = 0;
  reportCount = 0;
  decodeErrors = 0;
  latenciesMs: number[] = [];

  onReport: ((r: StateReport) => void) | null = null;
  onPhase: ((p: Phase) => void) | null = null;

  private sock: SocketLike | null = null;
  private ledger = new Map<number, number>();
  private readonly nowMs: () => number;

  constructor(
    private readonly makeSocket: SocketFactory,
    nowMs?: () => number,
  ) {
    this.nowMs = nowMs ?? (() => performance.now());
  }

  connect(url: string): void {
    this.disconnect();
    this.needsReconnect = false;
    this.setPhase("connecting");
    const sock = this.makeSocket(url);
    this.sock = sock;
    sock.onopen = () => this.setPhase("connected");
    sock.onclose = () => {
      this.needsReconnect = true;
      this.sock = null;
      this.setPhase("disconnected");
    };
    sock.onmessage = (data) => this.handle(data);
  }

  disconnect(): void {
    const s = this.sock;
    this.sock = null;
    if (s) {
      s.onclose = null;
      s.close();
    }
    this.ledger.clear();
    this.setPhase("disconnected");
  }

  get socket(): SocketLike | null {
    return this.sock;
  }

  sendRaw(text: string): void {
    this.sock?.send(text);
  }

  pair(code: string, clientName: string): void {
    this.sendRaw(pairRequest(code, clientName));
  }

  /** StreamLoop onSent hook. */
  noteSent = (seq: number, sentAtMs: number): void => {
    this.ledger.set(seq, sentAtMs);
  };

  stalled(nowMs: number = this.nowMs()): boolean {
    return this.phase === "paired" && nowMs - this.lastReportAtMs > STALL_MS;
  }

  latencyPercentile(p: number): number | null {
    if (this.latenciesMs.length === 0) return null;
    const sorted = [...this.latenciesMs].sort((a, b) => a - b);
    const idx = Math.min(sorted.length - 1, Math.floor((p / 100) * sorted.length));
    return sorted[idx]!;
  }

  private setPhase(p: Phase): void {
    if (this.phase !== p) {
      this.phase = p;
      this.onPhase?.(p);
    }
  }

  private handle(data: string): void {
    let msg: Inbound | null;
    try {
      msg = decodeInbound(data);
    } catch {
      this.decodeErrors++;
      return;
    }
    if (msg === null) return;
    switch (msg.type) {
      case "pair_accept":
        this.sessionId = msg.sessionId;
        this.capabilities = msg.capabilities;
        this.pairFailures = 0;
        this.setPhase("paired");
        break;
      case "ack":
        this.acked++;
        break;
      case "state_report": {
        this.reportCount++;
        this.lastReport = msg;
        this.lastReportAtMs = this.nowMs();
        if (msg.inputSeq !== null) {
          const now = this.nowMs();
          for (const [seq, t0] of this.ledger) {
            if (seq <= msg.inputSeq) {
              this.ledger.delete(seq);
              this.latenciesMs.push(now - t0);
            }
          }
          if (this.latenciesMs.length > LATENCY_WINDOW) {
            this.latenciesMs.splice(0, this.latenciesMs.length - LATENCY_WINDOW);
          }
        }
        this.onReport?.(msg);
        break;
      }
      case "error_msg":
        this.lastError = msg;
        if (msg.code === "pairing_failed") this.pairFailures++;
        break;
    }
  }
}
