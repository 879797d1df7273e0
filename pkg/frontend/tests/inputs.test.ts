import { describe, expect, it } from "vitest";

import { DeviceSensors, quatFromEuler, quatFromOrientationEvent } from "../src/inputs.js";

const HALF = Math.SQRT1_2;

describe("quatFromOrientationEvent", () => {
  it("is identity at rest and unit-norm everywhere", () => {
    expect(quatFromOrientationEvent(0, 0, 0)).toEqual({ w: 1, x: 0, y: 0, z: 0 });
    for (const [a, b, g] of [
      [37, -12, 81],
      [359, 179, -89],
      [123.4, 56.7, -8.9],
    ] as const) {
      const q = quatFromOrientationEvent(a, b, g);
      expect(Math.hypot(q.w, q.x, q.y, q.z)).toBeCloseTo(1, 12);
    }
  });

  it("maps each W3C angle to its body axis (z, x, y order)", () => {
    const qa = quatFromOrientationEvent(180, 0, 0);
    expect(Math.abs(qa.z)).toBeCloseTo(1, 12); // alpha spins about z
    expect(qa.w).toBeCloseTo(0, 12);

    const qb = quatFromOrientationEvent(0, 90, 0);
    expect(qb.w).toBeCloseTo(HALF, 12); // beta tips about x
    expect(qb.x).toBeCloseTo(HALF, 12);

    const qg = quatFromOrientationEvent(0, 0, 90);
    expect(qg.w).toBeCloseTo(HALF, 12); // gamma rolls about y
    expect(qg.y).toBeCloseTo(HALF, 12);
  });
});

describe("quatFromEuler", () => {
  it("matches single-axis closed forms", () => {
    const yaw = quatFromEuler(Math.PI / 2, 0, 0);
    expect(yaw.w).toBeCloseTo(HALF, 12);
    expect(yaw.z).toBeCloseTo(HALF, 12);
    const pitch = quatFromEuler(0, Math.PI / 2, 0);
    expect(pitch.y).toBeCloseTo(HALF, 12);
    const roll = quatFromEuler(0, 0, Math.PI / 2);
    expect(roll.x).toBeCloseTo(HALF, 12);
  });
});

describe("DeviceSensors", () => {
  it("stays unavailable until a full orientation sample lands", () => {
    const s = new DeviceSensors();
    expect(s.available).toBe(false);
    s.onOrientation(null, 10, 10); // permission granted but no reading yet
    expect(s.available).toBe(false);
    expect(s.samplePose()).toEqual([1, 0, 0, 0, 0, 0, 0]);
    s.onOrientation(180, 0, 0);
    expect(s.available).toBe(true);
    const pose = s.samplePose();
    expect(Math.abs(pose[3]!)).toBeCloseTo(1, 12);
  });

  it("keeps touch translation independent of orientation", () => {
    const s = new DeviceSensors();
    s.onOrientation(0, 90, 0);
    s.dragTranslate(50, -20);
    s.slideZ(-10);
    const pose = s.samplePose();
    expect(pose[4]).toBeCloseTo(0.05, 12);
    expect(pose[5]).toBeCloseTo(0.02, 12);
    expect(pose[6]).toBeCloseTo(0.01, 12);
    expect(pose[0]).toBeCloseTo(HALF, 12);
  });
});
