/**
 * Five slider values to 21 hand landmarks.
 *
 * This is the same two-segment finger model the server's synthetic
 * client uses (synth.hand_landmarks), kept numerically identical so a
 * slider sweep here and a scripted sweep there retarget the same way:
 * curl c in [0, 1] bends the knuckle by c*pi/2 and the middle joint by
 * twice that, each finger hinging in its own sagittal plane.
 *
 * Order: wrist, then thumb/index/middle/ring/little as base, pip, dip
 * (midpoint), tip.
 */

import { Landmark } from "./messages.js";

const FINGER_BASES: Landmark[] = [
  [0.03, -0.04, 0], // thumb
  [0.09, -0.02, 0], // index
  [0.095, 0, 0], // middle
  [0.09, 0.02, 0], // ring
  [0.08, 0.04, 0], // little
];
export const SEG1 = 0.035;
export const SEG2 = 0.025;

export const LANDMARK_COUNT = 21;

export function handLandmarks(curls: readonly number[]): Landmark[] {
  if (curls.length !== 5) throw new Error(`need 5 curl values, got ${curls.length}`);
  const pts: Landmark[] = [[0, 0, 0]];
  for (let i = 0; i < 5; i++) {
    const base = FINGER_BASES[i]!;
    const c = Math.min(Math.max(curls[i]!, 0), 1);
    const a1 = (c * Math.PI) / 2;
    const a2 = 2 * a1;
    const pip: Landmark = [base[0] + SEG1 * Math.cos(a1), base[1], base[2] - SEG1 * Math.sin(a1)];
    const tip: Landmark = [pip[0] + SEG2 * Math.cos(a2), pip[1], pip[2] - SEG2 * Math.sin(a2)];
    const dip: Landmark = [(pip[0] + tip[0]) / 2, (pip[1] + tip[1]) / 2, (pip[2] + tip[2]) / 2];
    pts.push(base, pip, dip, tip);
  }
  return pts;
}
