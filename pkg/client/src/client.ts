/**
 * Client SDK for the gate's newline-delimited JSON protocol.
 *
 * One connection per client; requests are serialized FIFO (the protocol is
 * strictly one response per request). Denials, rejections, and
 * confirmation prompts come back as typed results; only transport and
 * protocol breakage throws.
 */

import { createConnection, type Socket } from "node:net";
import { ConnectionLost, ProtocolViolation } from "./errors.js";
import {
  type AuditRecord,
  type VerifyResult,
  verifyTail,
} from "./hashChain.js";

const MAX_FRAME_BYTES = 64 * 1024;

export interface ClientConfig {
  host: string;
  port: number;
  token: string;
  session?: string;
}

export interface Decision {
  outcome: "allow" | "deny";
  fired_rules: string[];
  explanation: Record<string, unknown>;
}

export interface ExecutionRecord {
  record_id: string;
  action: string;
  ok: boolean;
  detail: string;
  result_handle: string | null;
  result_label: string | null;
  result_payload?: string;
  redacted?: boolean;
}

export interface ProposalResult {
  variant: "executed" | "denied" | "needs_confirmation" | "rejected" | "flow_denied";
  record?: ExecutionRecord;
  decision?: Decision;
  confirmToken?: string;
  errorCode?: string;
  errorMessage?: string;
}

export interface ConfirmResult {
  ok: boolean;
  errorCode?: string;
  errorMessage?: string;
}

export interface AuditTail {
  records: AuditRecord[];
  verification: VerifyResult;
}

interface Pending {
  resolve: (line: string) => void;
  reject: (err: Error) => void;
}

export class TrinityClient {
  private socket: Socket;
  private buffer = "";
  private queue: Pending[] = [];
  private closed = false;
  readonly principal: string;
  readonly sink: string;
  readonly session: string;

  private constructor(socket: Socket, principal: string, sink: string, session: string) {
    this.socket = socket;
    this.principal = principal;
    this.sink = sink;
    this.session = session;
    socket.on("data", (chunk) => this.onData(chunk));
    socket.on("error", (err) => this.failAll(new ConnectionLost(String(err))));
    socket.on("close", () => this.failAll(new ConnectionLost()));
  }

  static async connect(config: ClientConfig): Promise<TrinityClient> {
    const socket: Socket = await new Promise((resolve, reject) => {
      const s = createConnection({ host: config.host, port: config.port });
      s.once("connect", () => resolve(s));
      s.once("error", reject);
    });
    const client = new TrinityClient(socket, "", "", config.session ?? "default");
    const hello = await client.roundTrip({ token: config.token });
    if (hello.error) {
      client.close();
      throw new ProtocolViolation(`identity refused: ${hello.error.code}`);
    }
    if (hello.op !== "hello") {
      client.close();
      throw new ProtocolViolation("expected hello frame");
    }
    // principal/sink are connection facts asserted by the server
    (client as { principal: string }).principal = hello.principal as string;
    (client as { sink: string }).sink = hello.sink as string;
    return client;
  }

  private onData(chunk: Buffer): void {
    this.buffer += chunk.toString("utf-8");
    if (this.buffer.length > MAX_FRAME_BYTES * 2) {
      this.failAll(new ProtocolViolation("oversized frame from server"));
      return;
    }
    let idx: number;
    while ((idx = this.buffer.indexOf("\n")) >= 0) {
      const line = this.buffer.slice(0, idx);
      this.buffer = this.buffer.slice(idx + 1);
      const pending = this.queue.shift();
      if (pending === undefined) {
        this.failAll(new ProtocolViolation("unsolicited frame from server"));
        return;
      }
      pending.resolve(line);
    }
  }

  private failAll(err: Error): void {
    if (this.closed) return;
    this.closed = true;
    const waiting = this.queue;
    this.queue = [];
    for (const pending of waiting) pending.reject(err);
    this.socket.destroy();
  }

  private roundTrip(request: unknown): Promise<Record<string, any>> {
    if (this.closed) {
      return Promise.reject(new ConnectionLost("client already closed"));
    }
    const line = JSON.stringify(request) + "\n";
    return new Promise<string>((resolve, reject) => {
      this.queue.push({ resolve, reject });
      this.socket.write(line, (err) => {
        if (err) this.failAll(new ConnectionLost(String(err)));
      });
    }).then((raw) => {
      try {
        return JSON.parse(raw) as Record<string, any>;
      } catch {
        throw new ProtocolViolation("unparseable frame from server");
      }
    });
  }

  async health(): Promise<boolean> {
    const resp = await this.roundTrip({ op: "health" });
    return resp.outcome?.ok === true;
  }

  /** Submit one proposal; denials come back as results, never throws. */
  async propose(text: string, session?: string): Promise<ProposalResult> {
    const resp = await this.roundTrip({
      op: "propose",
      session: session ?? this.session,
      body: { text },
    });
    if (resp.error) {
      if (resp.error.code === "FlowDenied") {
        return {
          variant: "flow_denied",
          errorCode: resp.error.code,
          errorMessage: resp.error.message,
        };
      }
      throw new ProtocolViolation(`propose failed: ${resp.error.code}`);
    }
    const outcome = resp.outcome;
    if (!outcome || typeof outcome.variant !== "string") {
      throw new ProtocolViolation("propose response missing outcome");
    }
    return {
      variant: outcome.variant,
      record: outcome.record,
      decision: outcome.decision,
      confirmToken: outcome.confirm_token,
      errorCode: outcome.error?.code,
      errorMessage: outcome.error?.message,
    };
  }

  /** Mirror of the gate's confirm operation. */
  async confirmRemote(token: string): Promise<ConfirmResult> {
    const resp = await this.roundTrip({ op: "confirm", body: { token } });
    if (resp.error) {
      return { ok: false, errorCode: resp.error.code, errorMessage: resp.error.message };
    }
    return { ok: resp.outcome?.variant === "confirmed" };
  }

  /**
   * Fetch the last n audit records and re-verify them locally: every
   * digest is recomputed with the canonical encoding and linkage between
   * consecutive records is checked.
   */
  async tailAudit(n: number): Promise<AuditTail> {
    if (!Number.isInteger(n) || n < 1) {
      throw new ProtocolViolation("tail size must be a positive integer");
    }
    const resp = await this.roundTrip({ op: "audit_tail", body: { n } });
    if (resp.error) {
      throw new ProtocolViolation(`audit_tail refused: ${resp.error.code}`);
    }
    const records = resp.outcome?.records as AuditRecord[] | undefined;
    if (!Array.isArray(records)) {
      throw new ProtocolViolation("audit_tail response missing records");
    }
    return { records, verification: verifyTail(records) };
  }

  close(): void {
    this.closed = true;
    this.socket.destroy();
  }
}
