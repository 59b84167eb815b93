"""Network endpoint exposing the gate to out-of-process agents.

Wire protocol (newline-delimited UTF-8 JSON over TCP, one object per line,
64 KiB frame cap):

    client -> {"token": "<connection token>"}              # once, first line
    server -> {"op": "hello", "principal": P, "sink": L}

    client -> {"op": "propose", "session": S, "body": {"text": T}}
    client -> {"op": "confirm", "body": {"token": T}}
    client -> {"op": "audit_tail", "body": {"n": N}}
    client -> {"op": "health"}
    server -> {"op": ..., "principal": P, "session": S, "outcome": {...}}
            | {"op": ..., "error": {"code": C, "message": M}}

Identity is connection-bound: the token maps to a principal and a response
sink label in the service config; principal fields inside request bodies
are ignored. Responses never carry payload bytes whose label does not flow
to the connection's sink; with strict response sourcing the whole response
is refused instead of redacted. Malformed or oversized frames close the
connection without a response.
"""

from __future__ import annotations

import json
import os
import socket
import socketserver
import threading
from dataclasses import dataclass
from typing import Optional

from .errors import PolicySyntaxError
from .gate import Gate, Outcome
from .errors import TrinityError
from .ifc import Label, flow_check
from .policy import PolicySet

MAX_FRAME_BYTES = 64 * 1024
DEFAULT_BIND = "127.0.0.1:7433"
BIND_ENV_VAR = "TRINITY_BIND"

OPS = ("propose", "confirm", "audit_tail", "health")


@dataclass(frozen=True)
class ConnectionIdentity:
    token: str
    principal: str
    sink: Label


@dataclass
class ServiceConfig:
    bind: str
    identities: dict[str, ConnectionIdentity]


def parse_service_config(text: str, policy: PolicySet) -> ServiceConfig:
    """Line-oriented config: a [server] bind and an [identities] table."""
    bind = DEFAULT_BIND
    identities: dict[str, ConnectionIdentity] = {}
    current = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            if current not in ("server", "identities"):
                raise PolicySyntaxError(f"line {line_no}: unknown section {current!r}")
            continue
        toks = line.split()
        if current == "server":
            if toks[0] != "bind" or len(toks) != 2:
                raise PolicySyntaxError(f"line {line_no}: expected 'bind HOST:PORT'")
            bind = toks[1]
        elif current == "identities":
            if toks[0] != "identity":
                raise PolicySyntaxError(f"line {line_no}: expected identity entry")
            kv = dict(tok.split("=", 1) for tok in toks[1:])
            missing = {"token", "principal", "sink"} - kv.keys()
            if missing:
                raise PolicySyntaxError(f"line {line_no}: identity missing {sorted(missing)}")
            sink = policy.lattice.get(kv["sink"])
            if sink not in policy.sinks:
                raise PolicySyntaxError(
                    f"line {line_no}: {kv['sink']!r} is not a declared sink"
                )
            identities[kv["token"]] = ConnectionIdentity(kv["token"], kv["principal"], sink)
        else:
            raise PolicySyntaxError(f"line {line_no}: content before any section")
    return ServiceConfig(bind, identities)


class GateService:
    """Protocol logic, independent of the socket plumbing."""

    def __init__(self, gate: Gate, config: ServiceConfig) -> None:
        self.gate = gate
        self.config = config

    def identify(self, hello_line: str) -> Optional[ConnectionIdentity]:
        try:
            obj = json.loads(hello_line)
        except ValueError:
            return None
        token = obj.get("token")
        if not isinstance(token, str):
            return None
        return self.config.identities.get(token)

    def handle_request(self, identity: ConnectionIdentity, line: str) -> Optional[dict]:
        """One response per request; None means close without responding."""
        try:
            req = json.loads(line)
        except ValueError:
            return None
        if not isinstance(req, dict):
            return None
        op = req.get("op")
        session = req.get("session", "default")
        if not isinstance(session, str):
            return None
        base = {"op": op, "principal": identity.principal, "session": session}
        if op not in OPS:
            return {**base, "error": {"code": "UnknownOp", "message": f"op {op!r}"}}
        body = req.get("body") or {}
        if op == "health":
            return {**base, "outcome": {"ok": True}}
        if op == "propose":
            text = body.get("text")
            if not isinstance(text, str):
                return None
            outcome = self.gate.submit(text, identity.principal, session)
            return self._shape_propose(base, identity, session, outcome)
        if op == "confirm":
            token = body.get("token")
            if not isinstance(token, str):
                return None
            try:
                self.gate.confirm(token, identity.principal)
            except TrinityError as exc:
                return {**base, "error": {"code": exc.code, "message": str(exc)}}
            return {**base, "outcome": {"variant": "confirmed"}}
        # audit_tail: the log itself is labeled metadata; check it flows
        n = body.get("n")
        if not isinstance(n, int) or n < 1:
            return None
        decision = flow_check(
            self.gate.policy.lattice, [self.gate.policy.audit_label()], identity.sink
        )
        if not decision.allowed:
            self.gate._audit(
                {
                    "kind": "flow_denied",
                    "at": "audit_tail",
                    "join": decision.explanation["join"],
                    "sink": identity.sink.name,
                    "principal": identity.principal,
                    "session": session,
                }
            )
            return {**base, "error": {"code": "FlowDenied", "message": "sink too low"}}
        records = [
            {
                "event": r.event,
                "hash": r.hash,
                "prev_hash": r.prev_hash,
                "seq": r.seq,
                "ts": r.ts,
            }
            for r in self.gate.audit.tail(n)
        ]
        return {**base, "outcome": {"records": records}}

    def _shape_propose(
        self,
        base: dict,
        identity: ConnectionIdentity,
        session: str,
        outcome: Outcome,
    ) -> dict:
        lattice = self.gate.policy.lattice
        include_payload = False
        if outcome.variant == "executed" and outcome.record.result_payload:
            label = lattice.get(outcome.record.result_label)
            decision = flow_check(lattice, [label], identity.sink)
            if decision.allowed:
                include_payload = True
                self.gate.note_delivery(
                    identity.principal, session, label,
                    f"wire:{outcome.record.record_id}",
                )
            else:
                self.gate._audit(
                    {
                        "kind": "flow_denied",
                        "at": "propose_response",
                        "join": decision.explanation["join"],
                        "sink": identity.sink.name,
                        "principal": identity.principal,
                        "session": session,
                    }
                )
                if self.gate.policy.strict_response_sourcing:
                    return {
                        **base,
                        "error": {
                            "code": "FlowDenied",
                            "message": "result label exceeds connection sink",
                        },
                    }
        wire = outcome.to_wire(include_payload=include_payload)
        if (
            outcome.variant == "executed"
            and outcome.record.result_payload
            and not include_payload
        ):
            wire["record"]["redacted"] = True
        return {**base, "outcome": wire}


class _Handler(socketserver.StreamRequestHandler):
    def _read_frame(self) -> Optional[str]:
        line = self.rfile.readline(MAX_FRAME_BYTES + 1)
        if not line or len(line) > MAX_FRAME_BYTES or not line.endswith(b"\n"):
            return None
        try:
            return line.decode("utf-8")
        except UnicodeDecodeError:
            return None

    def _send(self, obj: dict) -> None:
        data = json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"
        self.wfile.write(data.encode("utf-8"))
        self.wfile.flush()

    def handle(self) -> None:
        service: GateService = self.server.service  # type: ignore[attr-defined]
        hello = self._read_frame()
        if hello is None:
            return
        identity = service.identify(hello)
        if identity is None:
            self._send({"error": {"code": "IdentityUnknown", "message": "bad token"}})
            return
        self._send(
            {"op": "hello", "principal": identity.principal, "sink": identity.sink.name}
        )
        while True:
            frame = self._read_frame()
            if frame is None:
                return
            response = service.handle_request(identity, frame)
            if response is None:
                return
            self._send(response)


class GateServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, service: GateService, bind: str) -> None:
        host, _, port = bind.rpartition(":")
        super().__init__((host or "127.0.0.1", int(port)), _Handler)
        self.service = service

    @property
    def bound_address(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"


def resolve_bind(cli_bind: Optional[str], config_bind: str) -> str:
    env = os.environ.get(BIND_ENV_VAR)
    if env:
        return env
    if cli_bind:
        return cli_bind
    return config_bind


def serve_forever(service: GateService, bind: str) -> GateServer:
    server = GateServer(service, bind)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server
