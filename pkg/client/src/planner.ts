/**
 * Scripted demo planner: replays scenario files against a live server.
 *
 * Only the proposer-facing steps run here (propose, confirm); the server
 * is expected to have been seeded with the scenarios' ingestion context
 * (`trinity-gate serve --setup <file>`). Grading mirrors the server-side
 * harness: MustDenyAll, MustExecuteAll, or per-step expectations.
 */

import { readFileSync } from "node:fs";
import { TrinityClient, type ProposalResult } from "./client.js";

export interface ScenarioStep {
  kind: string;
  principal?: string;
  session?: string;
  text?: string;
  expect?: string;
  expect_rules?: string[];
}

export interface ScenarioFile {
  id: string;
  expectation: "MustDenyAll" | "MustExecuteAll" | "Mixed";
  steps: ScenarioStep[];
}

export interface StepOutcome {
  text: string;
  expect: string | null;
  actual: string;
  matched: boolean;
  firedRules: string[];
}

export interface PlannerRun {
  id: string;
  matched: boolean;
  steps: StepOutcome[];
}

const BLOCKED = new Set(["denied", "rejected", "needs_confirmation", "flow_denied"]);

export function parseScenarioFile(text: string): ScenarioFile {
  const lines = text.split("\n").filter((line) => line.trim().length > 0);
  const header = JSON.parse(lines[0]);
  if (header.kind !== "scenario") {
    throw new Error("first line must be the scenario header");
  }
  const steps = lines.slice(1).map((line) => JSON.parse(line) as ScenarioStep);
  return { id: header.id, expectation: header.expectation, steps };
}

function actualName(result: ProposalResult): string {
  if (result.variant === "executed") {
    return result.record?.ok ? "executed" : "failed";
  }
  return result.variant;
}

function stepMatched(
  expectation: ScenarioFile["expectation"],
  expect: string | undefined,
  actual: string,
): boolean {
  if (expect !== undefined) return actual === expect;
  if (expectation === "MustDenyAll") return BLOCKED.has(actual);
  if (expectation === "MustExecuteAll") return actual === "executed";
  return false;
}

export async function runScenario(
  client: TrinityClient,
  scenario: ScenarioFile,
): Promise<PlannerRun> {
  const steps: StepOutcome[] = [];
  let lastToken: string | undefined;
  for (const step of scenario.steps) {
    if (step.kind === "propose" && step.text) {
      const result = await client.propose(step.text, step.session);
      if (result.confirmToken) lastToken = result.confirmToken;
      const actual = actualName(result);
      let matched = stepMatched(scenario.expectation, step.expect, actual);
      const fired = result.decision?.fired_rules ?? [];
      if (matched && step.expect_rules) {
        matched = step.expect_rules.every((rule) => fired.includes(rule));
      }
      steps.push({
        text: step.text,
        expect: step.expect ?? null,
        actual,
        matched,
        firedRules: fired,
      });
    } else if (step.kind === "confirm") {
      if (lastToken === undefined) throw new Error("confirm step with no token");
      const result = await client.confirmRemote(lastToken);
      if (!result.ok) throw new Error(`confirm failed: ${result.errorCode}`);
    }
    // session/doc/ingest steps belong to the server-side setup
  }
  return { id: scenario.id, matched: steps.every((s) => s.matched), steps };
}

export async function main(argv: string[]): Promise<number> {
  const args = [...argv];
  const opts: Record<string, string> = {
    host: "127.0.0.1",
    port: "7433",
    token: "alice-token",
    tail: "5",
  };
  const files: string[] = [];
  while (args.length > 0) {
    const arg = args.shift()!;
    if (arg.startsWith("--")) {
      opts[arg.slice(2)] = args.shift() ?? "";
    } else {
      files.push(arg);
    }
  }
  if (files.length === 0) {
    console.error("usage: planner [--host H] [--port P] [--token T] scenario.ndjson...");
    return 2;
  }
  const client = await TrinityClient.connect({
    host: opts.host,
    port: Number(opts.port),
    token: opts.token,
  });
  try {
    let allMatched = true;
    for (const file of files) {
      const scenario = parseScenarioFile(readFileSync(file, "utf-8"));
      const run = await runScenario(client, scenario);
      for (const step of run.steps) {
        const mark = step.matched ? "ok      " : "MISMATCH";
        console.log(`[${mark}] ${step.text.slice(0, 70)} -> ${step.actual}` +
          (step.firedRules.length ? ` ${JSON.stringify(step.firedRules)}` : ""));
      }
      console.log(`scenario ${run.id}: matched=${run.matched}`);
      allMatched = allMatched && run.matched;
    }
    const tail = await client.tailAudit(Number(opts.tail));
    console.log(
      `audit tail: ${tail.records.length} records, ` +
      `local verification ${tail.verification.ok ? "ok" : "FAILED"}`,
    );
    return allMatched && tail.verification.ok ? 0 : 1;
  } finally {
    client.close();
  }
}

const entry = process.argv[1] ?? "";
if (entry.endsWith("planner.js")) {
  main(process.argv.slice(2)).then(
    (code) => process.exit(code),
    (err) => {
      console.error(String(err));
      process.exit(1);
    },
  );
}
