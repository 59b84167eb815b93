"""The command gate: sole path from proposals to tool effects.

Pipeline per submission: parse -> validate -> resolve argument labels ->
authorize -> mint + consume a single-use capability -> run the adapter in
its declared sandbox. Every stage outcome is audited; nothing executes on a
denial or rejection, and an unavailable audit sink aborts before any effect
(fail closed). Adapters are reachable only from inside this module; the
proposer-facing surface exposes submit and confirm, nothing else.

Adapters here are sandboxed simulations: mail goes to an outbox file,
retrieval and reads consult a locally registered labeled corpus, and memory
writes target the scope-isolated store.
"""

from __future__ import annotations

import hashlib
import re
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

from .audit import AuditLog
from .encoding import canonical_json
from .errors import (
    AlreadyUsed,
    CapabilityError,
    ParseError,
    ProposalTypeError,
    RegistryFrozen,
    TrinityError,
    UnknownAction,
    UnknownToken,
    WrongPrincipal,
)
from .fac import (
    ActionProposal,
    FacVocabulary,
    ParamKind,
    RefValue,
    parse_proposal,
    validate_params,
)
from .ifc import (
    Channel,
    DeclassificationGrant,
    Decision,
    Label,
    LabeledValue,
    ProvenanceTag,
    TagMinter,
    declassify,
    propagate,
)
from .memory import MemoryStore
from .policy import (
    Context,
    DeclassificationEntry,
    PolicySet,
    authorize,
    confirmable,
    confirmation_was_load_bearing,
)

_HANDLE_RE = re.compile(r"^[A-Za-z0-9_-]+$")


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ExecutionCapability:
    """Single-use permission to run one authorized proposal."""

    token: str
    proposal_digest: str

    @property
    def digest(self) -> str:
        return _digest(self.token)


@dataclass
class AdapterResult:
    ok: bool
    detail: str
    output: Optional[LabeledValue] = None
    output_handle: Optional[str] = None


@dataclass(frozen=True)
class ExecutionRecord:
    record_id: str
    action: str
    ok: bool
    detail: str
    proposal_digest: str
    capability_digest: str
    result_handle: Optional[str] = None
    result_label: Optional[str] = None
    result_payload: Optional[str] = None

    def to_wire(self, include_payload: bool) -> dict:
        out = {
            "record_id": self.record_id,
            "action": self.action,
            "ok": self.ok,
            "detail": self.detail,
            "result_handle": self.result_handle,
            "result_label": self.result_label,
        }
        if include_payload:
            out["result_payload"] = self.result_payload
        return out


@dataclass(frozen=True)
class Outcome:
    """What a submission came to: executed, denied, needs confirmation, or
    rejected before it ever reached the authorizer."""

    variant: str  # "executed" | "denied" | "needs_confirmation" | "rejected"
    record: Optional[ExecutionRecord] = None
    decision: Optional[Decision] = None
    confirm_token: Optional[str] = None
    error_code: Optional[str] = None
    error_message: Optional[str] = None

    def to_wire(self, include_payload: bool = False) -> dict:
        out: dict = {"variant": self.variant}
        if self.record is not None:
            out["record"] = self.record.to_wire(include_payload)
        if self.decision is not None:
            out["decision"] = self.decision.to_event()
        if self.confirm_token is not None:
            out["confirm_token"] = self.confirm_token
        if self.error_code is not None:
            out["error"] = {"code": self.error_code, "message": self.error_message}
        return out


@dataclass
class _ConfirmToken:
    principal: str
    session: str
    confirmed: bool = False
    used: bool = False


class _SessionState:
    def __init__(self) -> None:
        self.lock = threading.RLock()
        self.handles: dict[str, LabeledValue] = {}
        self.handle_seq = 0
        self.last_input_label: Optional[Label] = None
        self.last_input_tag: Optional[ProvenanceTag] = None
        self.declassifications: list[DeclassificationEntry] = []

    def mint_handle(self, value: LabeledValue, name: Optional[str] = None) -> str:
        if name is not None:
            if not _HANDLE_RE.match(name):
                raise ValueError(f"bad handle name {name!r}")
            if name in self.handles:
                raise ValueError(f"handle {name!r} already minted")
            self.handles[name] = value
            return name
        while True:
            self.handle_seq += 1
            candidate = f"v{self.handle_seq}"
            if candidate not in self.handles:
                self.handles[candidate] = value
                return candidate


class _Resolver:
    def __init__(self, state: _SessionState, policy: PolicySet) -> None:
        self._state = state
        self._policy = policy

    def has_handle(self, handle: str) -> bool:
        return handle in self._state.handles

    def has_label(self, name: str) -> bool:
        return self._policy.lattice.has(name)

    def has_scope(self, name: str) -> bool:
        return name in self._policy.scopes


class AdapterServices:
    """The controlled facade adapters get instead of the gate itself."""

    def __init__(self, gate: "Gate", state: _SessionState, ctx: Context) -> None:
        self._gate = gate
        self._state = state
        self.ctx = ctx
        self.lattice = gate.policy.lattice
        self.policy = gate.policy
        self.memory = gate.memory

    def lookup_doc(self, doc_id: str) -> Optional[LabeledValue]:
        return self._gate._docs.get(doc_id)

    def doc_ids(self) -> list[str]:
        return list(self._gate._docs)

    def get_handle(self, handle: str) -> LabeledValue:
        return self._state.handles[handle]

    def propagate(self, inputs: list[LabeledValue]) -> Label:
        return self._gate._timed_propagate(inputs)

    def mint_output(
        self,
        payload: str,
        inputs: list[LabeledValue],
        source_id: str,
        label: Optional[Label] = None,
    ) -> tuple[str, LabeledValue]:
        """Store an adapter output as a new labeled session value."""
        out_label = label if label is not None else self.propagate(inputs)
        tag = self._gate._minter.mint(Channel.TOOL_OUTPUT, source_id)
        value = LabeledValue(payload, out_label, (tag,))
        handle = self._state.mint_handle(value)
        return handle, value

    def outbox_append(self, record: dict) -> None:
        self._gate._outbox_append(record)

    def declassify_value(
        self, value: LabeledValue, target: Label, src_handle: str
    ) -> tuple[str, LabeledValue, DeclassificationGrant]:
        grant = self.policy.find_grant(value.label, target, self.ctx.principal)
        new_value = declassify(
            value,
            target,
            grant,
            lattice=self.lattice,
            minter=self._gate._minter,
            audit_append=self._gate._audit,
            principal=self.ctx.principal,
            session=self.ctx.session,
            value_ref=src_handle,
        )
        new_handle = self._state.mint_handle(new_value)
        assert grant is not None  # declassify raised otherwise
        for handle in (src_handle, new_handle):
            self._state.declassifications.append(
                DeclassificationEntry(grant.grant_id, handle, grant.action_scope)
            )
        return new_handle, new_value, grant

    def apply_confirmation(self, token: str) -> None:
        self._gate._apply_confirm(token, self.ctx.principal)


class ToolAdapter:
    """Base adapter: compiles one authorized action into its sandboxed effect."""

    action: str = ""
    effect: str = ""
    sandbox: str = ""

    def resolve_arg_label(
        self, param: str, value: str, services: AdapterServices
    ) -> Optional[Label]:
        """Label for a text argument that names a resource; None for default."""
        return None

    def invoke(self, proposal: ActionProposal, services: AdapterServices) -> AdapterResult:
        raise NotImplementedError


class ProposerSurface:
    """The only interface an untrusted proposer is handed.

    Exposes submit and confirm; adapters, stores, and registries are not
    reachable from here.
    """

    def __init__(self, gate: "Gate") -> None:
        self.__gate = gate

    def submit(self, text: str, principal: str, session: str) -> Outcome:
        return self.__gate.submit(text, principal, session)

    def confirm(self, token: str, principal: str) -> None:
        self.__gate.confirm(token, principal)


class Gate:
    def __init__(
        self,
        vocab: FacVocabulary,
        policy: PolicySet,
        audit: AuditLog,
        memory: Optional[MemoryStore] = None,
        outbox_path: Optional[Path] = None,
        timing_sink: Optional[Callable[[str, int], None]] = None,
    ) -> None:
        self.vocab = vocab
        self.policy = policy
        self.audit = audit
        self.memory = memory or MemoryStore(policy.scopes, policy.lattice)
        self._outbox_path = outbox_path
        self._outbox: list[dict] = []
        self._outbox_seq = 0
        self._timing_sink = timing_sink
        self._minter = TagMinter()
        self._docs: dict[str, LabeledValue] = {}
        self._adapters: dict[str, ToolAdapter] = {}
        self._serving = False
        self._sessions: dict[tuple[str, str], _SessionState] = {}
        self._sessions_lock = threading.Lock()
        self._confirm_tokens: dict[str, _ConfirmToken] = {}
        self._confirm_lock = threading.Lock()
        self._capabilities: dict[str, ExecutionCapability] = {}
        self._consumed_capabilities: set[str] = set()
        self._capability_lock = threading.Lock()
        self.adapter_invocations = 0

    # --- construction-time wiring ---

    def register_adapter(self, action: str, adapter: ToolAdapter) -> None:
        if self._serving:
            raise RegistryFrozen("adapters cannot change once serving started")
        if not self.vocab.has(action):
            raise UnknownAction(f"action {action!r} is not in the vocabulary")
        self._adapters[action] = adapter

    def start_serving(self) -> None:
        self._serving = True

    def proposer_surface(self) -> ProposerSurface:
        return ProposerSurface(self)

    # --- control-plane ingestion (operator/harness facing, never proposer) ---

    def register_doc(
        self,
        doc_id: str,
        payload: str,
        label_name: str,
        channel: Channel = Channel.RETRIEVED_DOCUMENT,
        source_id: str = "",
    ) -> None:
        label = self.policy.lattice.get(label_name)
        tag = self._minter.mint(channel, source_id or f"doc:{doc_id}")
        self._docs[doc_id] = LabeledValue(payload, label, (tag,))
        self._audit(
            {
                "kind": "ingest",
                "channel": channel.value,
                "source_id": tag.source_id,
                "label": label.name,
                "doc_id": doc_id,
                "principal": "",
                "session": "",
            }
        )

    def ingest(
        self,
        principal: str,
        session: str,
        payload: str,
        label_name: str,
        channel: Channel,
        source_id: str,
        handle: Optional[str] = None,
        doc_id: Optional[str] = None,
    ) -> str:
        """Bring one labeled artifact into a session; returns its handle.

        Data-channel artifacts (retrieved documents, tool outputs) update the
        session's most-recent-input label; command channels do not.
        """
        state = self._session_state(principal, session)
        with state.lock:
            label = self.policy.lattice.get(label_name)
            tag = self._minter.mint(channel, source_id)
            value = LabeledValue(payload, label, (tag,))
            minted = state.mint_handle(value, handle)
            if doc_id is not None:
                self._docs[doc_id] = value
            if not channel.command_capable:
                state.last_input_label = label
                state.last_input_tag = tag
            self._audit(
                {
                    "kind": "ingest",
                    "channel": channel.value,
                    "source_id": source_id,
                    "label": label.name,
                    "handle": minted,
                    "doc_id": doc_id or "",
                    "principal": principal,
                    "session": session,
                }
            )
            return minted

    def ingest_turn(
        self, principal: str, session: str, artifacts: Iterable[dict]
    ) -> list[str]:
        """Ingest several artifacts as one turn; taint takes their join."""
        state = self._session_state(principal, session)
        with state.lock:
            handles = []
            data_labels: list[Label] = []
            data_tag: Optional[ProvenanceTag] = None
            for art in artifacts:
                channel = Channel(art["channel"])
                handles.append(
                    self.ingest(
                        principal,
                        session,
                        art["payload"],
                        art["label"],
                        channel,
                        art["source_id"],
                        handle=art.get("handle"),
                        doc_id=art.get("doc_id"),
                    )
                )
                if not channel.command_capable:
                    data_labels.append(self.policy.lattice.get(art["label"]))
                    data_tag = state.last_input_tag
            if data_labels:
                state.last_input_label = self.policy.lattice.join(data_labels)
                state.last_input_tag = data_tag
            return handles

    def note_delivery(
        self, principal: str, session: str, label: Label, source_id: str
    ) -> None:
        """Record that payload bytes of ``label`` were shown to the proposer.

        Delivered tool output is a data-channel input to whatever the
        proposer says next, so it moves the session taint.
        """
        state = self._session_state(principal, session)
        with state.lock:
            tag = self._minter.mint(Channel.TOOL_OUTPUT, source_id)
            state.last_input_label = label
            state.last_input_tag = tag
            self._audit(
                {
                    "kind": "delivery",
                    "channel": Channel.TOOL_OUTPUT.value,
                    "source_id": source_id,
                    "label": label.name,
                    "principal": principal,
                    "session": session,
                }
            )

    # --- the mediation pipeline ---

    def submit(self, text: str, principal: str, session: str) -> Outcome:
        state = self._session_state(principal, session)
        with state.lock:
            return self._submit_locked(text, principal, session, state)

    def _submit_locked(
        self, text: str, principal: str, session: str, state: _SessionState
    ) -> Outcome:
        try:
            raw = parse_proposal(text, self.vocab)
        except ParseError as exc:
            self._audit(
                {
                    "kind": "reject",
                    "stage": "parse",
                    "error": exc.code,
                    "proposal_digest": _digest(text),
                    "principal": principal,
                    "session": session,
                }
            )
            return Outcome("rejected", error_code=exc.code, error_message=str(exc))
        try:
            proposal = validate_params(
                raw, self.vocab, _Resolver(state, self.policy), principal, session
            )
        except ProposalTypeError as exc:
            self._audit(
                {
                    "kind": "reject",
                    "stage": "validate",
                    "error": exc.code,
                    "action": raw.action,
                    "proposal_digest": _digest(text),
                    "principal": principal,
                    "session": session,
                }
            )
            return Outcome("rejected", error_code=exc.code, error_message=str(exc))

        proposal_digest = _digest(proposal.canonical_text())
        adapter = self._adapters.get(proposal.action)
        ctx = self._context(principal, session, state)
        services = AdapterServices(self, state, ctx)
        arg_labels = self._resolve_arg_labels(proposal, state, adapter, services)

        t0 = time.perf_counter_ns()
        decision = authorize(proposal, arg_labels, ctx, self.policy)
        self._time("authorize", time.perf_counter_ns() - t0)

        if not decision.allowed:
            if confirmable(decision, proposal, arg_labels, ctx, self.policy):
                token = secrets.token_urlsafe(16)
                with self._confirm_lock:
                    self._confirm_tokens[token] = _ConfirmToken(principal, session)
                self._audit(
                    {
                        "kind": "needs_confirmation",
                        "action": proposal.action,
                        "decision": decision.to_event(),
                        "token_digest": _digest(token),
                        "proposal_digest": proposal_digest,
                        "principal": principal,
                        "session": session,
                    }
                )
                return Outcome(
                    "needs_confirmation", decision=decision, confirm_token=token
                )
            self._audit(
                {
                    "kind": "decision",
                    "action": proposal.action,
                    "decision": decision.to_event(),
                    "proposal_digest": proposal_digest,
                    "principal": principal,
                    "session": session,
                }
            )
            return Outcome("denied", decision=decision)

        # allow: mint the capability, audit the decision, consume, execute.
        load_bearing = confirmation_was_load_bearing(
            proposal, arg_labels, ctx, self.policy
        )
        capability = ExecutionCapability(
            token=secrets.token_urlsafe(16), proposal_digest=proposal_digest
        )
        with self._capability_lock:
            self._capabilities[capability.digest] = capability
        self._audit(
            {
                "kind": "decision",
                "action": proposal.action,
                "decision": decision.to_event(),
                "proposal_digest": proposal_digest,
                "capability_digest": capability.digest,
                "principal": principal,
                "session": session,
            }
        )
        if load_bearing:
            consumed = self._consume_confirmation(principal, session)
            self._audit(
                {
                    "kind": "confirm_consumed",
                    "token_digest": consumed,
                    "proposal_digest": proposal_digest,
                    "principal": principal,
                    "session": session,
                }
            )
        self._consume_capability(capability, proposal_digest)
        self._audit(
            {
                "kind": "capability_consume",
                "capability_digest": capability.digest,
                "proposal_digest": proposal_digest,
                "principal": principal,
                "session": session,
            }
        )

        if adapter is None:
            result = AdapterResult(False, "no adapter registered")
        else:
            self.adapter_invocations += 1
            try:
                result = adapter.invoke(proposal, services)
            except TrinityError as exc:
                result = AdapterResult(False, f"{exc.code}: {exc}")
            except Exception as exc:  # sandboxed failure, never a crash
                result = AdapterResult(False, f"AdapterError: {exc}")

        effect_rec = self._audit(
            {
                "kind": "effect",
                "action": proposal.action,
                "ok": result.ok,
                "detail": result.detail,
                "result_handle": result.output_handle or "",
                "result_label": result.output.label.name if result.output else "",
                "capability_digest": capability.digest,
                "proposal_digest": proposal_digest,
                "principal": principal,
                "session": session,
            }
        )
        record = ExecutionRecord(
            record_id=f"x{effect_rec.seq}",
            action=proposal.action,
            ok=result.ok,
            detail=result.detail,
            proposal_digest=proposal_digest,
            capability_digest=capability.digest,
            result_handle=result.output_handle,
            result_label=result.output.label.name if result.output else None,
            result_payload=result.output.payload if result.output else None,
        )
        return Outcome("executed", record=record)

    def confirm(self, token: str, principal: str) -> None:
        """Register a user confirmation for a previously issued token."""
        self._apply_confirm(token, principal)
        self._audit(
            {
                "kind": "confirm",
                "token_digest": _digest(token),
                "principal": principal,
                "session": self._confirm_tokens[token].session,
            }
        )

    # --- internals ---

    def _apply_confirm(self, token: str, principal: str) -> None:
        with self._confirm_lock:
            entry = self._confirm_tokens.get(token)
            if entry is None:
                raise UnknownToken("no such confirmation token")
            if entry.principal != principal:
                raise WrongPrincipal("token was issued to a different principal")
            if entry.confirmed or entry.used:
                raise AlreadyUsed("token already confirmed or spent")
            entry.confirmed = True

    def _consume_confirmation(self, principal: str, session: str) -> str:
        with self._confirm_lock:
            for token, entry in self._confirm_tokens.items():
                if (
                    entry.principal == principal
                    and entry.session == session
                    and entry.confirmed
                    and not entry.used
                ):
                    entry.used = True
                    return _digest(token)
        return ""

    def _consume_capability(self, capability: ExecutionCapability, digest: str) -> None:
        with self._capability_lock:
            if capability.digest in self._consumed_capabilities:
                raise CapabilityError("capability already consumed")
            if capability.proposal_digest != digest:
                raise CapabilityError("capability does not cover this proposal")
            self._consumed_capabilities.add(capability.digest)

    def _session_state(self, principal: str, session: str) -> _SessionState:
        key = (principal, session)
        with self._sessions_lock:
            state = self._sessions.get(key)
            if state is None:
                state = _SessionState()
                self._sessions[key] = state
            return state

    def _context(self, principal: str, session: str, state: _SessionState) -> Context:
        with self._confirm_lock:
            pending = frozenset(
                token
                for token, entry in self._confirm_tokens.items()
                if entry.principal == principal
                and entry.session == session
                and entry.confirmed
                and not entry.used
            )
        return Context(
            principal=principal,
            session=session,
            last_input_label=state.last_input_label,
            last_input_provenance=state.last_input_tag,
            pending_confirmations=pending,
            session_declassifications=tuple(state.declassifications),
        )

    def session_context(self, principal: str, session: str) -> Context:
        state = self._session_state(principal, session)
        with state.lock:
            return self._context(principal, session, state)

    def _resolve_arg_labels(
        self,
        proposal: ActionProposal,
        state: _SessionState,
        adapter: Optional[ToolAdapter],
        services: AdapterServices,
    ) -> dict[str, Label]:
        lattice = self.policy.lattice
        action = self.vocab.get(proposal.action)
        labels: dict[str, Label] = {}
        taint = state.last_input_label or lattice.bottom
        for name, value in proposal.args:
            schema = action.param(name)
            if isinstance(value, RefValue):
                labels[name] = state.handles[value.handle].label
            elif schema is not None and schema.kind in (
                ParamKind.LABEL_NAME,
                ParamKind.SCOPE_NAME,
                ParamKind.PRINCIPAL,
            ):
                labels[name] = lattice.bottom
            else:
                resolved = None
                if adapter is not None:
                    resolved = adapter.resolve_arg_label(name, value, services)
                labels[name] = resolved if resolved is not None else taint
        return labels

    def _timed_propagate(self, inputs: list[LabeledValue]) -> Label:
        t0 = time.perf_counter_ns()
        label = propagate(self.policy.lattice, inputs)
        self._time("propagate", time.perf_counter_ns() - t0)
        return label

    def _time(self, what: str, nanos: int) -> None:
        if self._timing_sink is not None:
            self._timing_sink(what, nanos)

    def _audit(self, event: dict):
        return self.audit.append(event)

    def _outbox_append(self, record: dict) -> None:
        record = dict(record)
        record["seq"] = self._outbox_seq
        self._outbox_seq += 1
        self._outbox.append(record)
        if self._outbox_path is not None:
            with open(self._outbox_path, "a", encoding="utf-8") as fh:
                fh.write(canonical_json(record) + "\n")

    def outbox_records(self) -> list[dict]:
        return list(self._outbox)

    def doc_ids(self) -> list[str]:
        return list(self._docs)

    def state_digest(self) -> str:
        """Digest of all mutable control-plane state; used to prove purity."""
        sessions = {}
        for (principal, session), state in sorted(self._sessions.items()):
            sessions[f"{principal}/{session}"] = {
                "handles": {h: v.to_record() for h, v in sorted(state.handles.items())},
                "last_input": state.last_input_label.name
                if state.last_input_label
                else "",
                "declassifications": [
                    [e.grant_id, e.value_handle, e.action_scope or ""]
                    for e in state.declassifications
                ],
            }
        snapshot = {
            "sessions": sessions,
            "docs": {d: v.to_record() for d, v in sorted(self._docs.items())},
            "audit_len": len(self.audit),
            "outbox": self._outbox,
            "confirm_tokens": len(self._confirm_tokens),
            "capabilities": len(self._capabilities),
        }
        return _digest(canonical_json(snapshot))


# --- the sandboxed simulation adapters ---


class RetrieveAdapter(ToolAdapter):
    action = "Retrieve"
    effect = "substring search over registered docs and readable memory"
    sandbox = "doc registry (read) + memory scopes readable by the principal"

    def invoke(self, proposal: ActionProposal, services: AdapterServices) -> AdapterResult:
        query = proposal.args_dict()["query"]
        assert isinstance(query, str)
        matched: list[LabeledValue] = []
        lines: list[str] = []
        for doc_id in services.doc_ids():
            doc = services.lookup_doc(doc_id)
            if doc is not None and (query in doc_id or query in doc.payload):
                matched.append(doc)
                lines.append(f"doc {doc_id}: {doc.payload}")
        for rec in services.memory.search(query, services.ctx):
            matched.append(rec.value)
            lines.append(f"memory {rec.scope}/{rec.key}: {rec.value.payload}")
        handle, value = services.mint_output(
            "\n".join(lines), matched, f"retrieve:{len(matched)}"
        )
        return AdapterResult(
            True, f"{len(matched)} matches", output=value, output_handle=handle
        )


class _DocBackedAdapter(ToolAdapter):
    def resolve_arg_label(
        self, param: str, value: str, services: AdapterServices
    ) -> Optional[Label]:
        if param == "doc_id":
            doc = services.lookup_doc(value)
            if doc is not None:
                return doc.label
            return services.lattice.bottom
        return None


class ReadDocAdapter(_DocBackedAdapter):
    action = "ReadDoc"
    effect = "return the payload of one registered doc"
    sandbox = "doc registry (read)"

    def invoke(self, proposal: ActionProposal, services: AdapterServices) -> AdapterResult:
        doc_id = proposal.args_dict()["doc_id"]
        assert isinstance(doc_id, str)
        doc = services.lookup_doc(doc_id)
        if doc is None:
            return AdapterResult(False, f"doc {doc_id!r} not found")
        handle, value = services.mint_output(doc.payload, [doc], f"readdoc:{doc_id}")
        return AdapterResult(True, f"read {doc_id}", output=value, output_handle=handle)


class SummarizeAdapter(_DocBackedAdapter):
    action = "Summarize"
    effect = "produce a deterministic extractive summary of one doc"
    sandbox = "doc registry (read)"

    def invoke(self, proposal: ActionProposal, services: AdapterServices) -> AdapterResult:
        doc_id = proposal.args_dict()["doc_id"]
        assert isinstance(doc_id, str)
        doc = services.lookup_doc(doc_id)
        if doc is None:
            return AdapterResult(False, f"doc {doc_id!r} not found")
        summary = f"[summary of {doc_id}] {doc.payload[:160]}"
        handle, value = services.mint_output(summary, [doc], f"summarize:{doc_id}")
        return AdapterResult(
            True, f"summarized {doc_id}", output=value, output_handle=handle
        )


class WriteMemoryAdapter(ToolAdapter):
    action = "WriteMemory"
    effect = "persist a labeled value into a declared scope"
    sandbox = "memory store"

    def invoke(self, proposal: ActionProposal, services: AdapterServices) -> AdapterResult:
        args = proposal.args_dict()
        key, ref, scope = args["key"], args["value"], args["scope"]
        assert isinstance(key, str) and isinstance(ref, RefValue)
        assert isinstance(scope, str)
        value = services.get_handle(ref.handle)
        rec = services.memory.write(key, value, scope, services.ctx)
        return AdapterResult(True, f"wrote {scope}/{key} seq={rec.written_at}")


class SendEmailAdapter(ToolAdapter):
    action = "SendEmail"
    effect = "queue an outbound message"
    sandbox = "outbox file"

    def invoke(self, proposal: ActionProposal, services: AdapterServices) -> AdapterResult:
        args = proposal.args_dict()
        to, subject, body = args["to"], args["subject"], args["body"]
        assert isinstance(to, str) and isinstance(subject, str)
        assert isinstance(body, RefValue)
        value = services.get_handle(body.handle)
        services.outbox_append(
            {
                "to": to,
                "subject": subject,
                "body": value.payload,
                "body_label": value.label.name,
                "principal": services.ctx.principal,
                "session": services.ctx.session,
            }
        )
        return AdapterResult(True, f"queued mail to {to}")


class DeclassifyAdapter(ToolAdapter):
    action = "Declassify"
    effect = "relabel one value downward under a named grant"
    sandbox = "session value store + audit sink"

    def invoke(self, proposal: ActionProposal, services: AdapterServices) -> AdapterResult:
        args = proposal.args_dict()
        src, dst = args["src"], args["dst"]
        assert isinstance(src, RefValue) and isinstance(dst, str)
        value = services.get_handle(src.handle)
        target = services.lattice.get(dst)
        new_handle, new_value, grant = services.declassify_value(
            value, target, src.handle
        )
        return AdapterResult(
            True,
            f"declassified {src.handle} under grant {grant.grant_id}",
            output=new_value,
            output_handle=new_handle,
        )


class ConfirmAdapter(ToolAdapter):
    action = "Confirm"
    effect = "register a user-approval token for this session"
    sandbox = "confirmation registry"

    def invoke(self, proposal: ActionProposal, services: AdapterServices) -> AdapterResult:
        token = proposal.args_dict()["token"]
        assert isinstance(token, str)
        services.apply_confirmation(token)
        return AdapterResult(True, "confirmation registered")


def default_adapters() -> list[ToolAdapter]:
    return [
        RetrieveAdapter(),
        ReadDocAdapter(),
        SummarizeAdapter(),
        WriteMemoryAdapter(),
        SendEmailAdapter(),
        DeclassifyAdapter(),
        ConfirmAdapter(),
    ]


def build_gate(
    policy: PolicySet,
    audit: Optional[AuditLog] = None,
    memory_path: Optional[Path] = None,
    outbox_path: Optional[Path] = None,
    timing_sink: Optional[Callable[[str, int], None]] = None,
) -> Gate:
    """A gate with the default vocabulary and the sandboxed adapters wired."""
    gate = Gate(
        vocab=FacVocabulary.default(),
        policy=policy,
        audit=audit if audit is not None else AuditLog(),
        memory=MemoryStore(policy.scopes, policy.lattice, memory_path),
        outbox_path=outbox_path,
        timing_sink=timing_sink,
    )
    for adapter in default_adapters():
        gate.register_adapter(adapter.action, adapter)
    gate.start_serving()
    return gate
