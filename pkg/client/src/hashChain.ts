/**
 * Audit-chain recomputation against the server's record layout.
 *
 * hash = SHA-256( raw(prev_hash) || canonical(event) || seq as 8-byte BE ),
 * seq contiguous from 0, genesis prev_hash = 32 zero bytes. The `ts` field
 * is informational and outside the preimage.
 */

import { createHash } from "node:crypto";
import { canonicalBytes } from "./canonical.js";

export const GENESIS_PREV_HASH = "0".repeat(64);

export interface AuditRecord {
  seq: number;
  prev_hash: string;
  event: unknown;
  hash: string;
  ts?: string;
}

export interface VerifyResult {
  ok: boolean;
  firstBadSeq: number | null;
  records: number;
}

export function recordHash(prevHash: string, event: unknown, seq: number): string {
  const seqBytes = Buffer.alloc(8);
  seqBytes.writeBigUInt64BE(BigInt(seq));
  const preimage = Buffer.concat([
    Buffer.from(prevHash, "hex"),
    canonicalBytes(event),
    seqBytes,
  ]);
  return createHash("sha256").update(preimage).digest("hex");
}

/** Verify a full chain starting at seq 0. */
export function verifyRecords(records: AuditRecord[]): VerifyResult {
  let prev = GENESIS_PREV_HASH;
  for (let i = 0; i < records.length; i++) {
    const rec = records[i];
    if (rec.seq !== i || rec.prev_hash !== prev) {
      return { ok: false, firstBadSeq: i, records: records.length };
    }
    let expected: string;
    try {
      expected = recordHash(rec.prev_hash, rec.event, rec.seq);
    } catch {
      return { ok: false, firstBadSeq: i, records: records.length };
    }
    if (expected !== rec.hash) {
      return { ok: false, firstBadSeq: i, records: records.length };
    }
    prev = rec.hash;
  }
  return { ok: true, firstBadSeq: null, records: records.length };
}

/**
 * Verify a tail fetched mid-chain: every record's own digest must
 * recompute, sequence numbers must be contiguous, and consecutive records
 * must link. The first record's prev_hash cannot be checked without its
 * predecessor (unless the tail reaches back to genesis).
 */
export function verifyTail(records: AuditRecord[]): VerifyResult {
  for (let i = 0; i < records.length; i++) {
    const rec = records[i];
    let expected: string;
    try {
      expected = recordHash(rec.prev_hash, rec.event, rec.seq);
    } catch {
      return { ok: false, firstBadSeq: rec.seq, records: records.length };
    }
    if (expected !== rec.hash) {
      return { ok: false, firstBadSeq: rec.seq, records: records.length };
    }
    if (i > 0) {
      const before = records[i - 1];
      if (rec.seq !== before.seq + 1 || rec.prev_hash !== before.hash) {
        return { ok: false, firstBadSeq: rec.seq, records: records.length };
      }
    } else if (rec.seq === 0 && rec.prev_hash !== GENESIS_PREV_HASH) {
      return { ok: false, firstBadSeq: 0, records: records.length };
    }
  }
  return { ok: true, firstBadSeq: null, records: records.length };
}

export function parseLogLines(text: string): AuditRecord[] {
  return text
    .split("\n")
    .filter((line) => line.trim().length > 0)
    .map((line) => JSON.parse(line) as AuditRecord);
}
