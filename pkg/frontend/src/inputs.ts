/**
 * Input modes composing the 6-DoF device pose streamed to the server.
 *
 * Exactly one mode is active at a time:
 *
 * - virtual_6dof: on-screen dual-joystick widget. The left stick is a
 *   trackpad for planar translation, a vertical slider drives z, the
 *   right stick accumulates yaw/pitch, and a twist (wheel) accumulates
 *   roll. Sticks are positional: dragging displaces the virtual
 *   device and releasing holds it, which matches the clutch-based
 *   mapping on the server (re-engage to re-zero).
 *
 * - device_sensors: rotation from the browser's orientation events,
 *   translation from touch drag. Browsers expose no usable device
 *   translation, so this mode is a reduced-fidelity stand-in for a
 *   tracked 6-DoF device: do not mistake it for AR-grade tracking.
 *   No client-side reference math is needed; engaging on the server
 *   captures whatever orientation the device currently reports.
 */

import { Pose7 } from "./messages.js";

export type InputMode = "virtual_6dof" | "device_sensors";

export interface Quat {
  w: number;
  x: number;
  y: number;
  z: number;
}

/** Intrinsic yaw (z), pitch (y), roll (x). */
export function quatFromEuler(yaw: number, pitch: number, roll: number): Quat {
  const cy = Math.cos(yaw / 2),
    sy = Math.sin(yaw / 2);
  const cp = Math.cos(pitch / 2),
    sp = Math.sin(pitch / 2);
  const cr = Math.cos(roll / 2),
    sr = Math.sin(roll / 2);
  return {
    w: cy * cp * cr + sy * sp * sr,
    x: cy * cp * sr - sy * sp * cr,
    y: cy * sp * cr + sy * cp * sr,
    z: sy * cp * cr - cy * sp * sr,
  };
}

/** W3C deviceorientation angles (degrees, ZXY intrinsic) to a quaternion. */
export function quatFromOrientationEvent(alpha: number, beta: number, gamma: number): Quat {
  const d = Math.PI / 180;
  const cz = Math.cos((alpha * d) / 2),
    sz = Math.sin((alpha * d) / 2);
  const cx = Math.cos((beta * d) / 2),
    sx = Math.sin((beta * d) / 2);
  const cy = Math.cos((gamma * d) / 2),
    sy = Math.sin((gamma * d) / 2);
  return {
    w: cz * cx * cy - sz * sx * sy,
    x: cz * sx * cy - sz * cx * sy,
    y: cz * cx * sy + sz * sx * cy,
    z: sz * cx * cy + cz * sx * sy,
  };
}

export interface PoseSource {
  samplePose(): Pose7;
}

export class VirtualSixDof implements PoseSource {
  /** meters of virtual device motion per pixel of drag */
  translationGain = 0.001;
  /** radians per pixel on the right stick */
  rotationGain = 0.005;

  x = 0;
  y = 0;
  z = 0;
  yaw = 0;
  pitch = 0;
  roll = 0;

  /** Left stick drag: screen right is +x, screen up is +y. */
  dragTranslate(dxPx: number, dyPx: number): void {
    this.x += dxPx * this.translationGain;
    this.y -= dyPx * this.translationGain;
  }

  slideZ(dPx: number): void {
    this.z -= dPx * this.translationGain; // slider up is +z
  }

  dragRotate(dxPx: number, dyPx: number): void {
    this.yaw += dxPx * this.rotationGain;
    this.pitch += dyPx * this.rotationGain;
  }

  twistRoll(dRad: number): void {
    this.roll += dRad;
  }

  reset(): void {
    this.x = this.y = this.z = this.yaw = this.pitch = this.roll = 0;
  }

  samplePose(): Pose7 {
    const q = quatFromEuler(this.yaw, this.pitch, this.roll);
    return [q.w, q.x, q.y, q.z, this.x, this.y, this.z];
  }
}

export class DeviceSensors implements PoseSource {
  translationGain = 0.001;

  private q: Quat = { w: 1, x: 0, y: 0, z: 0 };
  x = 0;
  y = 0;
  z = 0;
  /** set once the browser has granted sensor permission */
  available = false;

  onOrientation(alpha: number | null, beta: number | null, gamma: number | null): void {
    if (alpha === null || beta === null || gamma === null) return;
    this.q = quatFromOrientationEvent(alpha, beta, gamma);
    this.available = true;
  }

  dragTranslate(dxPx: number, dyPx: number): void {
    this.x += dxPx * this.translationGain;
    this.y -= dyPx * this.translationGain;
  }

  slideZ(dPx: number): void {
    this.z -= dPx * this.translationGain;
  }

  samplePose(): Pose7 {
    return [this.q.w, this.q.x, this.q.y, this.q.z, this.x, this.y, this.z];
  }
}
