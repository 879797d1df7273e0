/**
 * The streaming tick: one update per display frame.
 *
 * Driven by a pluggable frame pump (requestAnimationFrame in the
 * browser, a timer in tests) so the loop itself is testable headless.
 * Sequence numbers are allocated per message actually handed to the
 * socket and never reset while the connection lives, so they increase
 * strictly across input-mode switches and pauses. Backpressure never
 * queues: if the socket's buffer is above the cap, the frame is
 * dropped on the spot (it is the oldest unsent data; the next frame
 * will sample fresher input anyway) and counted.
 */

import { handUpdate, Landmark, Pose7, poseUpdate } from "./messages.js";

export interface FramePump {
  request(cb: () => void): number;
  cancel(id: number): void;
}

export function rafPump(): FramePump {
  return {
    request: (cb) => requestAnimationFrame(() => cb()),
    cancel: (id) => cancelAnimationFrame(id),
  };
}

/** Timer-driven pump for tests and headless runs. */
export function timerPump(hz: number): FramePump {
  const period = 1000 / hz;
  return {
    request: (cb) => setTimeout(cb, period) as unknown as number,
    cancel: (id) => clearTimeout(id as unknown as ReturnType<typeof setTimeout>),
  };
}

export interface StreamSink {
  send(text: string): void;
  bufferedAmount(): number;
}

export interface FrameSample {
  pose: Pose7;
  /** present only in hand-demo mode; switches the message type */
  landmarks?: Landmark[];
}

export interface StreamOptions {
  maxBufferedBytes?: number;
  nowUs?: () => number;
  /** called with the seq and send time of every update that went out */
  onSent?: (seq: number, sentAtMs: number) => void;
}

export class StreamLoop {
  sent = 0;
  dropped = 0;

  private seq = 0;
  private running = false;
  private pumpId = 0;
  private readonly maxBuffered: number;
  private readonly nowUs: () => number;

  constructor(
    private readonly pump: FramePump,
    private readonly sink: StreamSink,
    private sample: () => FrameSample,
    private readonly opts: StreamOptions = {},
  ) {
    this.maxBuffered = opts.maxBufferedBytes ?? 64 * 1024;
    // wall-clock epoch microseconds: the server drops updates whose
    // timestamp is older than its staleness budget, judged against
    // its own wall clock, so a monotonic-origin stamp would never ack
    this.nowUs = opts.nowUs ?? (() => Math.round((performance.timeOrigin + performance.now()) * 1000));
  }

  /** Swap the input source; seq keeps counting. */
  setSource(sample: () => FrameSample): void {
    this.sample = sample;
  }

  start(): void {
    if (this.running) return;
    this.running = true;
    this.schedule();
  }

  stop(): void {
    this.running = false;
    this.pump.cancel(this.pumpId);
  }

  private schedule(): void {
    this.pumpId = this.pump.request(() => {
      if (!this.running) return;
      this.frame();
      this.schedule();
    });
  }

  private frame(): void {
    if (this.sink.bufferedAmount() > this.maxBuffered) {
      this.dropped++;
      return;
    }
    const { pose, landmarks } = this.sample();
    const seq = ++this.seq;
    const ts = this.nowUs();
    const text = landmarks ? handUpdate(seq, ts, pose, landmarks) : poseUpdate(seq, ts, pose);
    this.sink.send(text);
    this.sent++;
    this.opts.onSent?.(seq, performance.now());
  }
}
