"""Policy documents and the deterministic authorizer.

A policy document is line-oriented text with five sections: ``[lattice]``,
``[scopes]``, ``[rules]``, ``[grants]``, ``[sinks]`` (plus ``[options]``).
Everything it references is validated at load time so authorization is a
total function over prebuilt tables.

Rule conditions are conjunctions of primitive predicates, each optionally
negated with a ``!`` prefix. The primitives see only the action name, the
labels resolved for its arguments, declared scope/label names, and the
session context -- never payload bytes. That keeps the authorizer
content-blind: two proposals that differ only in literal payload get the
same decision.

Evaluation semantics: if any deny rule matches, deny; else if any allow
rule matches, allow; else deny (default deny). Rule order never affects the
outcome.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .errors import (
    DuplicateRuleId,
    PolicySyntaxError,
    UnknownLabel,
    UnknownLabelReference,
    UnknownScope,
)
from .fac import ActionProposal, RefValue
from .ifc import DeclassificationGrant, Decision, Label, LabelLattice, ProvenanceTag

DEFAULT_DENY_RULE_ID = "default-deny"
ERROR_SENTINEL = "evaluation-error"

PREDICATES = {
    "action-is",
    "param-label-leq",
    "param-label-geq",
    "ctx-last-input-label-is",
    "scope-dominates",
    "has-confirm-token",
    "has-session-declassification",
}

_NO_ARG = {"has-confirm-token"}


@dataclass(frozen=True)
class DeclassificationEntry:
    """A declassification the session already performed."""

    grant_id: str
    value_handle: str
    action_scope: Optional[str] = None


@dataclass(frozen=True)
class Context:
    """Session facts the authorizer may consult.

    Built only by the gate from minted state; proposal content cannot put
    anything here. ``last_input_label`` is None until a data-channel
    artifact has been ingested in the session.
    """

    principal: str
    session: str
    last_input_label: Optional[Label]
    last_input_provenance: Optional[ProvenanceTag]
    pending_confirmations: frozenset[str]
    session_declassifications: tuple[DeclassificationEntry, ...]


@dataclass(frozen=True)
class Predicate:
    name: str
    arg: Optional[str]
    negated: bool = False

    def render(self) -> str:
        body = self.name if self.arg is None else f"{self.name}={self.arg}"
        return f"!{body}" if self.negated else body


@dataclass(frozen=True)
class PolicyRule:
    rule_id: str
    effect: str  # "allow" | "deny"
    predicates: tuple[Predicate, ...]


@dataclass(frozen=True)
class ScopeDecl:
    """A named memory scope with clearance and explicit membership."""

    name: str
    clearance: Label
    owner: str
    writers: frozenset[str]
    readers: frozenset[str]

    def may_write(self, principal: str) -> bool:
        return principal == self.owner or principal in self.writers

    def may_read(self, principal: str) -> bool:
        return principal == self.owner or principal in self.readers


@dataclass
class PolicySet:
    lattice: LabelLattice
    scopes: dict[str, ScopeDecl]
    rules: list[PolicyRule]
    grants: list[DeclassificationGrant]
    sinks: frozenset[Label]
    options: dict[str, str] = field(default_factory=dict)

    def rule_ids(self) -> list[str]:
        return [r.rule_id for r in self.rules]

    def find_grant(
        self, from_label: Label, to_label: Label, authority: str
    ) -> Optional[DeclassificationGrant]:
        for g in self.grants:
            if (
                g.from_label == from_label
                and g.to_label == to_label
                and g.authority in (authority, "*")
            ):
                return g
        return None

    @property
    def strict_response_sourcing(self) -> bool:
        return self.options.get("strict_response_sourcing", "off") == "on"

    def audit_label(self) -> Label:
        """Label under which audit metadata flows to response sinks."""
        name = self.options.get("audit_label", "")
        if name and self.lattice.has(name):
            return self.lattice.get(name)
        if self.lattice.has("INTERNAL"):
            return self.lattice.get("INTERNAL")
        return self.lattice.bottom


def _kv(tokens: list[str], line_no: int) -> dict[str, str]:
    out: dict[str, str] = {}
    for tok in tokens:
        if "=" not in tok:
            raise PolicySyntaxError(f"line {line_no}: expected key=value, got {tok!r}")
        key, _, value = tok.partition("=")
        if key in out:
            raise PolicySyntaxError(f"line {line_no}: duplicate key {key!r}")
        out[key] = value
    return out


def _members(raw: str) -> frozenset[str]:
    return frozenset(m for m in raw.split(",") if m)


def _parse_predicate(token: str, line_no: int) -> Predicate:
    negated = token.startswith("!")
    body = token[1:] if negated else token
    name, eq, arg = body.partition("=")
    if name not in PREDICATES:
        raise PolicySyntaxError(f"line {line_no}: unknown predicate {name!r}")
    if name in _NO_ARG:
        if eq:
            raise PolicySyntaxError(f"line {line_no}: {name} takes no argument")
        return Predicate(name, None, negated)
    if not eq or not arg:
        raise PolicySyntaxError(f"line {line_no}: {name} needs an argument")
    return Predicate(name, arg, negated)


def load_policy(text: str) -> PolicySet:
    """Parse and validate a policy document.

    All label, scope, and predicate references are resolved here; a document
    that survives loading cannot raise reference errors during evaluation.
    """
    sections: dict[str, list[tuple[int, list[str]]]] = {
        "lattice": [], "scopes": [], "rules": [], "grants": [], "sinks": [],
        "options": [],
    }
    current: Optional[str] = None
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1]
            if name not in sections:
                raise PolicySyntaxError(f"line {line_no}: unknown section {name!r}")
            current = name
            continue
        if current is None:
            raise PolicySyntaxError(f"line {line_no}: content before any section")
        sections[current].append((line_no, line.split()))

    # lattice
    labels: list[str] = []
    edges: list[tuple[str, str]] = []
    bottom = top = None
    for line_no, toks in sections["lattice"]:
        kind = toks[0]
        if kind == "label" and len(toks) == 2:
            labels.append(toks[1])
        elif kind == "leq" and len(toks) == 3:
            edges.append((toks[1], toks[2]))
        elif kind == "bottom" and len(toks) == 2:
            bottom = toks[1]
        elif kind == "top" and len(toks) == 2:
            top = toks[1]
        else:
            raise PolicySyntaxError(f"line {line_no}: bad lattice declaration")
    if not labels:
        lattice = LabelLattice.default()
    else:
        if bottom is None or top is None:
            raise PolicySyntaxError("lattice must declare bottom and top")
        lattice = LabelLattice(labels, edges, bottom, top)

    def label_ref(name: str, line_no: int) -> Label:
        if not lattice.has(name):
            raise UnknownLabelReference(f"line {line_no}: unknown label {name!r}")
        return lattice.get(name)

    # scopes
    scopes: dict[str, ScopeDecl] = {}
    for line_no, toks in sections["scopes"]:
        if toks[0] != "scope" or len(toks) < 3:
            raise PolicySyntaxError(f"line {line_no}: bad scope declaration")
        name = toks[1]
        if name in scopes:
            raise PolicySyntaxError(f"line {line_no}: duplicate scope {name!r}")
        kv = _kv(toks[2:], line_no)
        missing = {"clearance", "owner"} - kv.keys()
        if missing:
            raise PolicySyntaxError(f"line {line_no}: scope missing {sorted(missing)}")
        scopes[name] = ScopeDecl(
            name=name,
            clearance=label_ref(kv["clearance"], line_no),
            owner=kv["owner"],
            writers=_members(kv.get("writers", "")),
            readers=_members(kv.get("readers", "")),
        )

    # rules
    rules: list[PolicyRule] = []
    seen_rule_ids: set[str] = set()
    for line_no, toks in sections["rules"]:
        if toks[0] != "rule" or len(toks) < 3:
            raise PolicySyntaxError(f"line {line_no}: bad rule declaration")
        rule_id, effect = toks[1], toks[2]
        if rule_id in seen_rule_ids:
            raise DuplicateRuleId(f"line {line_no}: duplicate rule id {rule_id!r}")
        seen_rule_ids.add(rule_id)
        if effect not in ("allow", "deny"):
            raise PolicySyntaxError(f"line {line_no}: effect must be allow or deny")
        preds = tuple(_parse_predicate(tok, line_no) for tok in toks[3:])
        for p in preds:
            if p.name in ("param-label-leq", "param-label-geq"):
                _, _, lab = (p.arg or "").partition(":")
                if not lab:
                    raise PolicySyntaxError(
                        f"line {line_no}: {p.name} needs param:LABEL"
                    )
                label_ref(lab, line_no)
            elif p.name == "ctx-last-input-label-is":
                label_ref(p.arg or "", line_no)
            elif p.name == "scope-dominates":
                if ":" not in (p.arg or ""):
                    raise PolicySyntaxError(
                        f"line {line_no}: scope-dominates needs scopeParam:valueParam"
                    )
        rules.append(PolicyRule(rule_id, effect, preds))

    # grants
    grants: list[DeclassificationGrant] = []
    for line_no, toks in sections["grants"]:
        if toks[0] != "grant" or len(toks) < 3:
            raise PolicySyntaxError(f"line {line_no}: bad grant declaration")
        gid = toks[1]
        kv = _kv(toks[2:], line_no)
        missing = {"from", "to", "authority"} - kv.keys()
        if missing:
            raise PolicySyntaxError(f"line {line_no}: grant missing {sorted(missing)}")
        grants.append(
            DeclassificationGrant(
                grant_id=gid,
                from_label=label_ref(kv["from"], line_no),
                to_label=label_ref(kv["to"], line_no),
                authority=kv["authority"],
                action_scope=kv.get("scope"),
            )
        )

    # sinks
    sinks: set[Label] = set()
    for line_no, toks in sections["sinks"]:
        if toks[0] != "sink" or len(toks) != 2:
            raise PolicySyntaxError(f"line {line_no}: bad sink declaration")
        sinks.add(label_ref(toks[1], line_no))

    # options
    options: dict[str, str] = {}
    for line_no, toks in sections["options"]:
        if len(toks) != 2:
            raise PolicySyntaxError(f"line {line_no}: bad option")
        options[toks[0]] = toks[1]
    if options.get("strict_response_sourcing", "off") not in ("on", "off"):
        raise PolicySyntaxError("strict_response_sourcing must be on or off")
    if "audit_label" in options:
        label_ref(options["audit_label"], 0)

    return PolicySet(lattice, scopes, rules, grants, frozenset(sinks), options)


def _eval_predicate(
    pred: Predicate,
    proposal: ActionProposal,
    arg_labels: Mapping[str, Label],
    ctx: Context,
    pol: PolicySet,
) -> bool:
    lattice = pol.lattice
    args = proposal.args_dict()
    if pred.name == "action-is":
        value = proposal.action == pred.arg
    elif pred.name == "param-label-leq":
        param, _, lab = (pred.arg or "").partition(":")
        value = param in arg_labels and lattice.leq(
            arg_labels[param], lattice.get(lab)
        )
    elif pred.name == "param-label-geq":
        param, _, lab = (pred.arg or "").partition(":")
        value = param in arg_labels and lattice.leq(
            lattice.get(lab), arg_labels[param]
        )
    elif pred.name == "ctx-last-input-label-is":
        value = (
            ctx.last_input_label is not None
            and ctx.last_input_label == lattice.get(pred.arg or "")
        )
    elif pred.name == "scope-dominates":
        scope_param, _, value_param = (pred.arg or "").partition(":")
        if scope_param not in args or value_param not in arg_labels:
            value = False
        else:
            scope_name = args[scope_param]
            if not isinstance(scope_name, str):
                value = False
            else:
                scope = pol.scopes.get(scope_name)
                if scope is None:
                    raise UnknownScope(f"scope {scope_name!r} is not declared")
                value = lattice.leq(arg_labels[value_param], scope.clearance)
    elif pred.name == "has-confirm-token":
        value = len(ctx.pending_confirmations) > 0
    elif pred.name == "has-session-declassification":
        ref = args.get(pred.arg or "")
        if not isinstance(ref, RefValue):
            value = False
        else:
            value = any(
                e.value_handle == ref.handle
                and (e.action_scope is None or e.action_scope == proposal.action)
                for e in ctx.session_declassifications
            )
    else:  # pragma: no cover - load_policy rejects unknown predicates
        raise UnknownScope(f"unknown predicate {pred.name!r}")
    return not value if pred.negated else value


def _matches(
    rule: PolicyRule,
    proposal: ActionProposal,
    arg_labels: Mapping[str, Label],
    ctx: Context,
    pol: PolicySet,
) -> bool:
    return all(
        _eval_predicate(p, proposal, arg_labels, ctx, pol) for p in rule.predicates
    )


def authorize(
    proposal: ActionProposal,
    arg_labels: Mapping[str, Label],
    ctx: Context,
    pol: PolicySet,
) -> Decision:
    """Deterministic authorization: deny overrides allow overrides nothing.

    Reference errors (a label outside the lattice, an undeclared scope named
    by an argument) yield a deny citing the default-deny sentinel -- never an
    allow.
    """
    label_names = {param: lab.name for param, lab in arg_labels.items()}
    try:
        fired_deny = [
            r.rule_id
            for r in pol.rules
            if r.effect == "deny" and _matches(r, proposal, arg_labels, ctx, pol)
        ]
        if fired_deny:
            return Decision(
                "deny",
                sorted(fired_deny),
                {
                    "action": proposal.action,
                    "arg_labels": label_names,
                    "reason": "deny rule matched",
                },
            )
        fired_allow = [
            r.rule_id
            for r in pol.rules
            if r.effect == "allow" and _matches(r, proposal, arg_labels, ctx, pol)
        ]
        if fired_allow:
            return Decision(
                "allow",
                sorted(fired_allow),
                {"action": proposal.action, "arg_labels": label_names},
            )
        return Decision(
            "deny",
            [DEFAULT_DENY_RULE_ID],
            {
                "action": proposal.action,
                "arg_labels": label_names,
                "reason": "no allow rule matched",
            },
        )
    except (UnknownLabel, UnknownScope) as exc:
        return Decision(
            "deny",
            [DEFAULT_DENY_RULE_ID],
            {
                "action": proposal.action,
                "arg_labels": label_names,
                "reason": "evaluation error",
                "error": exc.code,
            },
        )


def confirmable(
    decision: Decision,
    proposal: ActionProposal,
    arg_labels: Mapping[str, Label],
    ctx: Context,
    pol: PolicySet,
) -> bool:
    """Would this denial flip to allow if a confirmation token were present?

    Used by the gate to decide between a plain denial and issuing a
    single-use confirmation token. Evaluated by rerunning the authorizer
    with a synthetic pending token; the authorizer itself stays pure.
    """
    if decision.allowed:
        return False
    with_token = Context(
        principal=ctx.principal,
        session=ctx.session,
        last_input_label=ctx.last_input_label,
        last_input_provenance=ctx.last_input_provenance,
        pending_confirmations=frozenset({"<hypothetical>"}),
        session_declassifications=ctx.session_declassifications,
    )
    return authorize(proposal, arg_labels, with_token, pol).allowed


def confirmation_was_load_bearing(
    proposal: ActionProposal,
    arg_labels: Mapping[str, Label],
    ctx: Context,
    pol: PolicySet,
) -> bool:
    """True when an allow outcome depended on a pending confirmation token."""
    if not ctx.pending_confirmations:
        return False
    without = Context(
        principal=ctx.principal,
        session=ctx.session,
        last_input_label=ctx.last_input_label,
        last_input_provenance=ctx.last_input_provenance,
        pending_confirmations=frozenset(),
        session_declassifications=ctx.session_declassifications,
    )
    return not authorize(proposal, arg_labels, without, pol).allowed
