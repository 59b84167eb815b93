"""Security-label lattice and information-flow arithmetic.

The flow regime is a finite lattice of labels with a partial order that
defines permitted flows. Values carry a label plus a provenance chain of
channel-bound tags minted only inside the control plane; derived values are
labeled with the join of their sources, and labels only ever go down through
an explicitly granted, audited declassification.

Lattices are validated exhaustively at load time (antisymmetry, pairwise
least upper bounds, declared bottom/top) so that the runtime operations are
total, pure table lookups.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .errors import DeniedDeclassification, LatticeInvalid, UnknownLabel

FLOW_CHECK_RULE_ID = "flow-check"


class Channel(str, Enum):
    """Origin channel of an ingested artifact.

    Channels are asserted by the control plane at the ingestion boundary and
    never inferred from content. The first two are command-capable; the rest
    carry data only.
    """

    SYSTEM_POLICY = "system_policy"
    USER_INSTRUCTION = "user_instruction"
    RETRIEVED_DOCUMENT = "retrieved_document"
    TOOL_OUTPUT = "tool_output"

    @property
    def command_capable(self) -> bool:
        return self in (Channel.SYSTEM_POLICY, Channel.USER_INSTRUCTION)


@dataclass(frozen=True)
class Label:
    """An opaque security level; comparable only through its lattice."""

    name: str

    def __str__(self) -> str:
        return self.name


class LabelLattice:
    """Finite partial order of labels with total join.

    Construction validates the declared order and precomputes the
    reflexive-transitive closure and the pairwise join table; invalid
    declarations (antisymmetry violations, missing or ambiguous least upper
    bounds, bad bottom/top) are rejected here rather than at evaluation time.
    """

    def __init__(
        self,
        labels: Iterable[str],
        leq_edges: Iterable[tuple[str, str]],
        bottom: str,
        top: str,
    ) -> None:
        names = list(labels)
        if len(names) != len(set(names)):
            raise LatticeInvalid("duplicate label declaration")
        if not names:
            raise LatticeInvalid("a lattice needs at least one label")
        self._labels: dict[str, Label] = {n: Label(n) for n in names}
        for a, b in leq_edges:
            if a not in self._labels or b not in self._labels:
                raise LatticeInvalid(f"order edge references unknown label {a!r} or {b!r}")
        if bottom not in self._labels:
            raise LatticeInvalid(f"bottom {bottom!r} is not a declared label")
        if top not in self._labels:
            raise LatticeInvalid(f"top {top!r} is not a declared label")

        # Reflexive-transitive closure by iterated expansion (lattices are small).
        closure: set[tuple[str, str]] = {(n, n) for n in names}
        closure.update((a, b) for a, b in leq_edges)
        changed = True
        while changed:
            changed = False
            for a, b in list(closure):
                for c, d in list(closure):
                    if b == c and (a, d) not in closure:
                        closure.add((a, d))
                        changed = True
        for a in names:
            for b in names:
                if a != b and (a, b) in closure and (b, a) in closure:
                    raise LatticeInvalid(f"antisymmetry violated between {a!r} and {b!r}")
        self._closure = closure

        self.bottom = self._labels[bottom]
        self.top = self._labels[top]
        for n in names:
            if (bottom, n) not in closure:
                raise LatticeInvalid(f"bottom {bottom!r} does not flow to {n!r}")
            if (n, top) not in closure:
                raise LatticeInvalid(f"{n!r} does not flow to top {top!r}")

        # Pairwise join table; every pair must have a unique least upper bound.
        self._join: dict[tuple[str, str], Label] = {}
        for a in names:
            for b in names:
                ubs = [u for u in names if (a, u) in closure and (b, u) in closure]
                minimal = [
                    u for u in ubs
                    if not any(v != u and (v, u) in closure for v in ubs)
                ]
                if len(minimal) != 1:
                    raise LatticeInvalid(
                        f"labels {a!r} and {b!r} lack a unique least upper bound"
                    )
                self._join[(a, b)] = self._labels[minimal[0]]

    @classmethod
    def default(cls) -> "LabelLattice":
        """The shipped three-level chain."""
        return cls(
            labels=["UNTRUSTED", "INTERNAL", "CONFIDENTIAL"],
            leq_edges=[("UNTRUSTED", "INTERNAL"), ("INTERNAL", "CONFIDENTIAL")],
            bottom="UNTRUSTED",
            top="CONFIDENTIAL",
        )

    def members(self) -> list[Label]:
        return list(self._labels.values())

    def has(self, name: str) -> bool:
        return name in self._labels

    def get(self, name: str) -> Label:
        try:
            return self._labels[name]
        except KeyError:
            raise UnknownLabel(f"label {name!r} is not in the lattice") from None

    def _member(self, label: Label) -> str:
        if label.name not in self._labels:
            raise UnknownLabel(f"label {label.name!r} is not in the lattice")
        return label.name

    def leq(self, a: Label, b: Label) -> bool:
        """True iff ``a`` may flow to ``b``."""
        return (self._member(a), self._member(b)) in self._closure

    def join_pair(self, a: Label, b: Label) -> Label:
        return self._join[(self._member(a), self._member(b))]

    def join(self, labels: Iterable[Label]) -> Label:
        """Least upper bound of a finite set; the empty join is bottom."""
        out = self.bottom
        for lab in labels:
            out = self.join_pair(out, lab)
        return out


@dataclass
class Decision:
    """Outcome of a deterministic check, with the rules that fired.

    ``explanation`` carries labels, parameter names, and rule metadata only;
    payload bytes never appear here, so decisions stay content-blind and can
    be compared byte-for-byte via :meth:`to_event`.
    """

    outcome: str  # "allow" | "deny"
    fired_rules: list[str]
    explanation: dict

    @property
    def allowed(self) -> bool:
        return self.outcome == "allow"

    def to_event(self) -> dict:
        return {
            "outcome": self.outcome,
            "fired_rules": list(self.fired_rules),
            "explanation": self.explanation,
        }


def flow_check(lattice: LabelLattice, sources: Iterable[Label], sink: Label) -> Decision:
    """Allow iff the join of the source labels flows to the sink label."""
    joined = lattice.join(sources)
    if lattice.leq(joined, sink):
        return Decision("allow", [], {"join": joined.name, "sink": sink.name})
    return Decision(
        "deny",
        [FLOW_CHECK_RULE_ID],
        {"join": joined.name, "sink": sink.name},
    )


@dataclass(frozen=True)
class ProvenanceTag:
    """Channel-bound origin marker, mintable only by the control plane.

    ``mint_nonce`` is unguessable and checked on use, so content cannot
    fabricate a tag with a channel it never arrived on.
    """

    channel: Channel
    source_id: str
    mint_nonce: str

    def to_record(self) -> dict:
        return {
            "channel": self.channel.value,
            "source_id": self.source_id,
            "mint_nonce": self.mint_nonce,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "ProvenanceTag":
        return cls(Channel(rec["channel"]), rec["source_id"], rec["mint_nonce"])


class TagMinter:
    """Issues and verifies provenance tags.

    Verification checks the nonce against the issuance table, including the
    (channel, source_id) binding, so a stolen nonce cannot be replayed with
    an upgraded channel.
    """

    def __init__(self) -> None:
        self._issued: dict[str, tuple[Channel, str]] = {}

    def mint(self, channel: Channel, source_id: str) -> ProvenanceTag:
        nonce = secrets.token_hex(16)
        self._issued[nonce] = (channel, source_id)
        return ProvenanceTag(channel, source_id, nonce)

    def verify(self, tag: ProvenanceTag) -> bool:
        return self._issued.get(tag.mint_nonce) == (tag.channel, tag.source_id)


@dataclass(frozen=True)
class LabeledValue:
    """Opaque payload plus its label and append-only provenance chain."""

    payload: str
    label: Label
    provenance: tuple[ProvenanceTag, ...] = ()

    def with_tag(self, tag: ProvenanceTag) -> "LabeledValue":
        return LabeledValue(self.payload, self.label, self.provenance + (tag,))

    def to_record(self) -> dict:
        return {
            "payload": self.payload,
            "label": self.label.name,
            "provenance": [t.to_record() for t in self.provenance],
        }


@dataclass(frozen=True)
class DeclassificationGrant:
    """Named permission to move values against the lattice order.

    ``action_scope`` optionally restricts where the declassified value may be
    spent via the session-declassification predicate.
    """

    grant_id: str
    from_label: Label
    to_label: Label
    authority: str
    action_scope: Optional[str] = None


def propagate(lattice: LabelLattice, inputs: Sequence[LabeledValue]) -> Label:
    """Label for a value derived from ``inputs``: the join of their labels."""
    return lattice.join(v.label for v in inputs)


def declassify(
    value: LabeledValue,
    target: Label,
    grant: Optional[DeclassificationGrant],
    *,
    lattice: LabelLattice,
    minter: TagMinter,
    audit_append: Callable[[dict], object],
    principal: str = "",
    session: str = "",
    value_ref: str = "",
) -> LabeledValue:
    """Relabel ``value`` to ``target`` under ``grant``, audited before return.

    Fails closed: no grant, a grant that does not match (from, to), or an
    audit sink that cannot append all abort without producing a relabeled
    value. The returned copy carries a system-channel tag naming the grant.
    """
    lattice._member(target)
    lattice._member(value.label)
    if grant is None:
        raise DeniedDeclassification(
            f"no grant covers {value.label.name} -> {target.name}"
        )
    if grant.from_label != value.label or grant.to_label != target:
        raise DeniedDeclassification(
            f"grant {grant.grant_id!r} covers {grant.from_label.name} -> "
            f"{grant.to_label.name}, not {value.label.name} -> {target.name}"
        )
    tag = minter.mint(Channel.SYSTEM_POLICY, f"declassify:{grant.grant_id}")
    relabeled = LabeledValue(value.payload, target, value.provenance + (tag,))
    # The audit record must be durable before the relabeled value exists for
    # callers; AuditUnavailable/StorageFailure propagate and abort.
    audit_append(
        {
            "kind": "declassify",
            "grant": grant.grant_id,
            "from": value.label.name,
            "to": target.name,
            "authority": grant.authority,
            "principal": principal,
            "session": session,
            "value_ref": value_ref,
        }
    )
    return relabeled
