import { describe, expect, it } from "vitest";

import { handLandmarks, SEG1, SEG2 } from "../src/hand.js";

// frozen from the server's synthetic-client implementation at
// curls [0.1, 0.25, 0.5, 0.75, 1.0]; equality below is bit-exact
const SERVER_PARITY: [number, number, number][] = [
  [0.0, 0.0, 0.0],
  [0.03, -0.04, 0.0],
  [0.06456909192082982, -0.04, -0.005475206276408081],
  [0.07645729837451924, -0.04, -0.009337918706094923],
  [0.08834550482820866, -0.04, -0.013200631135781765],
  [0.09, -0.02, 0.0],
  [0.12233578363789505, -0.02, -0.013393920132778143],
  [0.13117461840272687, -0.02, -0.022232754897609987],
  [0.14001345316755873, -0.02, -0.03107158966244183],
  [0.095, 0.0, 0.0],
  [0.11974873734152916, 0.0, -0.024748737341529162],
  [0.11974873734152916, 0.0, -0.03724873734152916],
  [0.11974873734152916, 0.0, -0.04974873734152917],
  [0.09, 0.02, 0.0],
  [0.10339392013277815, 0.02, -0.03233578363789504],
  [0.09455508536794631, 0.02, -0.04117461840272689],
  [0.08571625060311447, 0.02, -0.05001345316755873],
  [0.08, 0.04, 0.0],
  [0.08, 0.04, -0.035],
  [0.0675, 0.04, -0.035],
  [0.055, 0.04, -0.035],
];

describe("handLandmarks", () => {
  it("matches the server model bit-exactly", () => {
    const pts = handLandmarks([0.1, 0.25, 0.5, 0.75, 1.0]);
    expect(pts).toHaveLength(21);
    for (let i = 0; i < 21; i++) {
      expect(pts[i], `landmark ${i}`).toEqual(SERVER_PARITY[i]);
    }
  });

  it("puts the wrist at the origin and emits base/pip/dip/tip per finger", () => {
    const pts = handLandmarks([0, 0, 0, 0, 0]);
    expect(pts[0]).toEqual([0, 0, 0]);
    // dip is the midpoint of pip and tip for every finger
    for (let f = 0; f < 5; f++) {
      const [, pip, dip, tip] = pts.slice(1 + 4 * f, 5 + 4 * f) as [
        [number, number, number],
        [number, number, number],
        [number, number, number],
        [number, number, number],
      ];
      for (let a = 0; a < 3; a++) {
        expect(dip[a]).toBeCloseTo((pip[a]! + tip[a]!) / 2, 15);
      }
    }
  });

  it("extends straight fingers at zero curl", () => {
    const pts = handLandmarks([0, 0, 0, 0, 0]);
    const indexTip = pts[8]!;
    expect(indexTip[0]).toBeCloseTo(0.15, 12);
    expect(indexTip[1]).toBeCloseTo(-0.02, 12);
    expect(indexTip[2]).toBe(0);
  });

  it("sweeps the index tip toward flexion as its curl rises", () => {
    // distance from base shrinks monotonically: |tip-base|^2 =
    // s1^2 + s2^2 + 2*s1*s2*cos(a1) and a1 grows with curl
    let prev = Infinity;
    for (let k = 0; k <= 20; k++) {
      const c = k / 20;
      const pts = handLandmarks([0, c, 0, 0, 0]);
      const base = pts[5]!;
      const tip = pts[8]!;
      const d = Math.hypot(tip[0]! - base[0]!, tip[1]! - base[1]!, tip[2]! - base[2]!);
      if (k === 0) expect(d).toBeCloseTo(SEG1 + SEG2, 12);
      else {
        expect(d).toBeLessThan(prev);
        expect(tip[2]).toBeLessThan(0);
      }
      prev = d;
    }
  });

  it("clamps curls outside [0, 1]", () => {
    expect(handLandmarks([-0.5, -1, 2, 1.5, 99])).toEqual(handLandmarks([0, 0, 1, 1, 1]));
  });

  it("leaves other fingers untouched when one slider moves", () => {
    const a = handLandmarks([0, 0, 0, 0, 0]);
    const b = handLandmarks([0, 1, 0, 0, 0]);
    // only index (landmarks 5..8) may differ
    for (let i = 0; i < 21; i++) {
      if (i >= 5 && i <= 8) continue;
      expect(b[i], `landmark ${i}`).toEqual(a[i]);
    }
  });
});
