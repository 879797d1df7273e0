/**
 * Byte-stable JSON matching the server's canonical serializer.
 *
 * The golden encodings in ../schema were frozen from the server side,
 * which formats floats the way CPython's repr does: shortest
 * round-trip decimal, fixed notation for decimal exponents in
 * [-4, 15], otherwise scientific with a sign and at least two exponent
 * digits, and integral floats printed without the trailing ".0".
 * JavaScript's own Number-to-string uses different notation cutoffs
 * (e.g. 1e16 prints as "10000000000000000", 1e-5 as "0.00001"), so the
 * digits are taken from toExponential() and re-rendered here.
 */

export class NonFiniteNumber extends Error {}

export function formatNumber(v: number): string {
  if (!Number.isFinite(v)) throw new NonFiniteNumber(`cannot serialize ${v}`);
  if (v === 0) return "0"; // also flattens -0
  // toExponential() without an argument is specified to use the fewest
  // digits that uniquely identify the value
  const m = /^(-?)(\d)(?:\.(\d+))?e([+-]\d+)$/.exec(v.toExponential());
  if (!m) throw new Error(`unexpected exponential form for ${v}`);
  const sign = m[1]!;
  const digits = m[2]! + (m[3] ?? "");
  const k = parseInt(m[4]!, 10);
  if (k >= -4 && k < 16) {
    if (k >= digits.length - 1) return sign + digits + "0".repeat(k - digits.length + 1);
    if (k >= 0) return sign + digits.slice(0, k + 1) + "." + digits.slice(k + 1);
    return sign + "0." + "0".repeat(-k - 1) + digits;
  }
  const mantissa = m[3] ? `${m[2]}.${m[3]}` : m[2]!;
  const expDigits = String(Math.abs(k)).padStart(2, "0");
  return `${sign}${mantissa}e${k < 0 ? "-" : "+"}${expDigits}`;
}

export type Json = null | boolean | number | string | Json[] | { [key: string]: Json | undefined };

export function canonicalJson(value: Json): string {
  if (value === null) return "null";
  if (value === true) return "true";
  if (value === false) return "false";
  if (typeof value === "number") return formatNumber(value);
  if (typeof value === "string") return JSON.stringify(value);
  if (Array.isArray(value)) return "[" + value.map(canonicalJson).join(",") + "]";
  const parts: string[] = [];
  for (const [key, val] of Object.entries(value)) {
    if (val === undefined) continue; // optional field left out
    parts.push(JSON.stringify(key) + ":" + canonicalJson(val));
  }
  return "{" + parts.join(",") + "}";
}
