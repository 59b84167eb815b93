import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";
import {
  GENESIS_PREV_HASH,
  parseLogLines,
  recordHash,
  verifyRecords,
  verifyTail,
} from "../src/hashChain.js";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

function fixtureLog() {
  return parseLogLines(readFileSync(join(FIXTURES, "audit_fixture.log"), "utf-8"));
}

describe("hash chain against server fixtures", () => {
  it("recomputes every server digest byte for byte", () => {
    const records = fixtureLog();
    expect(records.length).toBeGreaterThan(5);
    for (const rec of records) {
      expect(recordHash(rec.prev_hash, rec.event, rec.seq)).toBe(rec.hash);
    }
  });

  it("verifies the full fixture chain", () => {
    const records = fixtureLog();
    expect(records[0].prev_hash).toBe(GENESIS_PREV_HASH);
    const result = verifyRecords(records);
    expect(result.ok).toBe(true);
    expect(result.records).toBe(records.length);
  });

  it("detects an event mutation at its index", () => {
    const records = fixtureLog();
    (records[3].event as Record<string, unknown>)["kind"] = "forged";
    const result = verifyRecords(records);
    expect(result.ok).toBe(false);
    expect(result.firstBadSeq).toBe(3);
  });

  it("detects relinked deletions", () => {
    const records = fixtureLog();
    records.splice(2, 1);
    records.forEach((rec, i) => (rec.seq = i));
    const result = verifyRecords(records);
    expect(result.ok).toBe(false);
    expect(result.firstBadSeq).toBe(2);
  });

  it("verifies tails that start mid-chain", () => {
    const records = fixtureLog();
    const tail = records.slice(4);
    expect(verifyTail(tail).ok).toBe(true);
    const broken = records.slice(4);
    broken[1] = { ...broken[1], hash: "ab".repeat(32) };
    const result = verifyTail(broken);
    expect(result.ok).toBe(false);
    expect(result.firstBadSeq).toBe(broken[1].seq);
  });
});
