/**
 * Top-down (x-y) scene painter fed by GET /world snapshots.
 *
 * 2D is enough to steer the shipped scenes and keeps the console
 * dependency-free; z shows up in the numeric readouts instead. The
 * painter only needs a tiny slice of CanvasRenderingContext2D so tests
 * can hand it a recording fake.
 */

export interface WorldObject {
  name: string;
  pose: number[];
  width: number;
  attached: boolean;
}

export interface WorldFixture {
  name: string;
  type: string;
  value: number;
  fraction: number;
  handle: number[];
  gripped: boolean;
}

export interface WorldSnapshot {
  ee: number[];
  aperture: number;
  objects: WorldObject[];
  fixtures: WorldFixture[];
  trial: { status: string; limit_s: number; elapsed_s: number };
  engaged: boolean;
}

export interface Paint2D {
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  stroke(): void;
  fill(): void;
  fillText(s: string, x: number, y: number): void;
  // unions match the DOM context so a real canvas is assignable as-is
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
}

export interface Viewport {
  widthPx: number;
  heightPx: number;
  /** world meters shown across the canvas width */
  spanM: number;
  centerX: number;
  centerY: number;
}

export function worldToPx(v: Viewport, x: number, y: number): [number, number] {
  const scale = v.widthPx / v.spanM;
  // +x world is up on screen, +y world is left: operator-over-the-table view
  return [v.widthPx / 2 - (y - v.centerY) * scale, v.heightPx / 2 - (x - v.centerX) * scale];
}

export function drawWorld(ctx: Paint2D, v: Viewport, world: WorldSnapshot): void {
  ctx.clearRect(0, 0, v.widthPx, v.heightPx);
  const scale = v.widthPx / v.spanM;

  ctx.font = "11px sans-serif";
  for (const obj of world.objects) {
    const [px, py] = worldToPx(v, obj.pose[4] ?? 0, obj.pose[5] ?? 0);
    const w = Math.max(4, obj.width * scale);
    ctx.fillStyle = obj.attached ? "#d97706" : "#475569";
    ctx.fillRect(px - w / 2, py - w / 2, w, w);
    ctx.fillStyle = "#94a3b8";
    ctx.fillText(obj.name, px + w / 2 + 3, py + 3);
  }

  for (const f of world.fixtures) {
    const [px, py] = worldToPx(v, f.handle[0] ?? 0, f.handle[1] ?? 0);
    ctx.strokeStyle = f.gripped ? "#d97706" : "#64748b";
    ctx.lineWidth = 2;
    // extent bar: filled fraction of the articulation range
    const barLen = 40;
    ctx.strokeRect(px - barLen / 2, py - 5, barLen, 10);
    ctx.fillStyle = f.fraction > 0.15 ? "#16a34a" : "#64748b";
    ctx.fillRect(px - barLen / 2, py - 5, barLen * Math.min(1, Math.max(0, f.fraction)), 10);
    ctx.fillStyle = "#94a3b8";
    ctx.fillText(`${f.name} ${(f.fraction * 100).toFixed(0)}%`, px + barLen / 2 + 4, py + 4);
  }

  // end effector: circle with aperture-scaled jaws
  const [ex, ey] = worldToPx(v, world.ee[4] ?? 0, world.ee[5] ?? 0);
  ctx.strokeStyle = world.engaged ? "#22d3ee" : "#64748b";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.arc(ex, ey, 6, 0, 2 * Math.PI);
  ctx.stroke();
  const jaw = 6 + world.aperture * scale * 0.5;
  ctx.beginPath();
  ctx.moveTo(ex - jaw, ey - 6);
  ctx.lineTo(ex - jaw, ey + 6);
  ctx.moveTo(ex + jaw, ey - 6);
  ctx.lineTo(ex + jaw, ey + 6);
  ctx.stroke();
}
