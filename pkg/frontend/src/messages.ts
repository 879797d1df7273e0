/**
 * Wire messages. Emitters produce canonical bytes (field order is part
 * of the format, see ../../schema/SCHEMA.md); the decoder is tolerant
 * about field order and unknown extras, per the same document.
 */

import { canonicalJson, Json } from "./canonical.js";

/** [qw, qx, qy, qz, tx, ty, tz] */
export type Pose7 = [number, number, number, number, number, number, number];
export type Landmark = [number, number, number];

export const IDENTITY_POSE: Pose7 = [1, 0, 0, 0, 0, 0, 0];

export const CODE_LENGTH = 6;
export const CODE_ALPHABET = "ABCDEFGHJKLMNPQRSTUVWXYZ23456789";

export function codeProblem(code: string): string | null {
  if (code.length !== CODE_LENGTH) return `code must be ${CODE_LENGTH} characters`;
  for (const ch of code) {
    if (!CODE_ALPHABET.includes(ch)) return `invalid character ${JSON.stringify(ch)}`;
  }
  return null;
}

// ---------------------------------------------------------------------------
// emitters

export function pairRequest(code: string, clientName: string): string {
  return canonicalJson({
    type: "pair_request",
    code,
    client_name: clientName,
    protocol_version: 1,
  });
}

export function poseUpdate(seq: number, timestampUs: number, pose: Pose7): string {
  return canonicalJson({ type: "pose_update", seq, timestamp_us: timestampUs, pose });
}

export function handUpdate(
  seq: number,
  timestampUs: number,
  pose: Pose7,
  landmarks: Landmark[],
): string {
  return canonicalJson({
    type: "hand_update",
    seq,
    timestamp_us: timestampUs,
    pose,
    landmarks: landmarks as Json,
  });
}

export function buttonEvent(buttonId: string, action: "press" | "release"): string {
  return canonicalJson({ type: "button_event", button_id: buttonId, action });
}

export interface Locks {
  tx: boolean;
  ty: boolean;
  tz: boolean;
  rotation: boolean;
}

export function configUpdate(opts: { translationScale?: number; locks?: Locks }): string {
  return canonicalJson({
    type: "config_update",
    translation_scale: opts.translationScale,
    locks: opts.locks === undefined ? undefined : { ...opts.locks },
  });
}

// ---------------------------------------------------------------------------
// decoder

export interface PairAccept {
  type: "pair_accept";
  sessionId: string;
  capabilities: Record<string, Json>;
}

export interface StateReport {
  type: "state_report";
  seq: number;
  eePose: Pose7;
  jointVector: number[];
  engaged: boolean;
  detectorFlags: Record<string, boolean>;
  inputSeq: number | null;
}

export interface AckMsg {
  type: "ack";
  ofSeq: number;
}

export interface ErrorMsg {
  type: "error_msg";
  code: string;
  detail: string;
}

export type Inbound = PairAccept | StateReport | AckMsg | ErrorMsg;

export class BadMessage extends Error {}

function num(doc: Record<string, unknown>, field: string): number {
  const v = doc[field];
  if (typeof v !== "number" || !Number.isFinite(v)) {
    throw new BadMessage(`${field}: expected finite number`);
  }
  return v;
}

function str(doc: Record<string, unknown>, field: string): string {
  const v = doc[field];
  if (typeof v !== "string") throw new BadMessage(`${field}: expected string`);
  return v;
}

function pose7(doc: Record<string, unknown>, field: string): Pose7 {
  const v = doc[field];
  if (!Array.isArray(v) || v.length !== 7 || v.some((x) => typeof x !== "number")) {
    throw new BadMessage(`${field}: expected 7 numbers`);
  }
  return v as Pose7;
}

/** Returns null for message types the console has no business handling. */
export function decodeInbound(text: string): Inbound | null {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch {
    throw new BadMessage("not JSON");
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new BadMessage("not an object");
  }
  const d = doc as Record<string, unknown>;
  switch (d["type"]) {
    case "pair_accept":
      return {
        type: "pair_accept",
        sessionId: str(d, "session_id"),
        capabilities: (d["server_capabilities"] ?? {}) as Record<string, Json>,
      };
    case "state_report": {
      const jv = d["joint_vector"];
      if (!Array.isArray(jv) || jv.some((x) => typeof x !== "number")) {
        throw new BadMessage("joint_vector: expected numbers");
      }
      return {
        type: "state_report",
        seq: num(d, "seq"),
        eePose: pose7(d, "ee_pose"),
        jointVector: jv as number[],
        engaged: d["engaged"] === true,
        detectorFlags: (d["detector_flags"] ?? {}) as Record<string, boolean>,
        inputSeq: typeof d["input_seq"] === "number" ? d["input_seq"] : null,
      };
    }
    case "ack":
      return { type: "ack", ofSeq: num(d, "of_seq") };
    case "error_msg":
      return { type: "error_msg", code: str(d, "code"), detail: str(d, "detail") };
    default:
      return null;
  }
}
