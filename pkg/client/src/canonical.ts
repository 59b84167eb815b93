/**
 * Canonical JSON encoding, matching the server's byte-for-byte.
 *
 * Keys sorted by Unicode code point at every level, compact separators,
 * UTF-8. Only strings, safe integers, booleans, null, arrays, and objects
 * are representable; non-integer numbers are refused because their text
 * forms differ across languages.
 *
 * The string is assembled manually: relying on object key order would let
 * JavaScript float integer-like keys to the front, and Array.sort compares
 * UTF-16 code units rather than code points.
 */

const MAX_CANONICAL_INT = Number.MAX_SAFE_INTEGER; // 2^53 - 1

export class NotCanonical extends Error {}

export function codePointCompare(a: string, b: string): number {
  const as = Array.from(a);
  const bs = Array.from(b);
  const n = Math.min(as.length, bs.length);
  for (let i = 0; i < n; i++) {
    const ca = as[i].codePointAt(0)!;
    const cb = bs[i].codePointAt(0)!;
    if (ca !== cb) return ca - cb;
  }
  return as.length - bs.length;
}

function encodeString(value: string): string {
  if (!value.isWellFormed()) {
    throw new NotCanonical("lone surrogate in string");
  }
  // JSON.stringify emits exactly the server's escape set for well-formed
  // strings: \" \\ \b \t \n \f \r and \u00xx for other C0 controls.
  return JSON.stringify(value);
}

function encode(value: unknown, path: string): string {
  if (value === null) return "null";
  if (typeof value === "boolean") return value ? "true" : "false";
  if (typeof value === "string") return encodeString(value);
  if (typeof value === "number") {
    if (!Number.isInteger(value) || Math.abs(value) > MAX_CANONICAL_INT) {
      throw new NotCanonical(`${path}: not a canonical integer`);
    }
    return String(value);
  }
  if (Array.isArray(value)) {
    return "[" + value.map((item, i) => encode(item, `${path}[${i}]`)).join(",") + "]";
  }
  if (typeof value === "object") {
    const record = value as Record<string, unknown>;
    const keys = Object.keys(record).sort(codePointCompare);
    const parts = keys.map(
      (key) => `${encodeString(key)}:${encode(record[key], `${path}.${key}`)}`,
    );
    return "{" + parts.join(",") + "}";
  }
  throw new NotCanonical(`${path}: unsupported type ${typeof value}`);
}

export function canonicalJson(value: unknown): string {
  return encode(value, "$");
}

export function canonicalBytes(value: unknown): Buffer {
  return Buffer.from(canonicalJson(value), "utf-8");
}
