"""Deterministic control plane for tool-using agents.

An untrusted planner may only *propose* actions drawn from a closed, typed
vocabulary; a deterministic policy engine decides; sandboxed adapters
execute under single-use capabilities; labels track where information came
from and where it may go; and every step lands in a hash-chained audit log.
"""

from importlib import resources

from .audit import AuditLog, AuditRecord, VerifyResult, audit_verify
from .errors import TrinityError
from .fac import (
    ActionProposal,
    ActionType,
    FacVocabulary,
    ParamKind,
    ParamSchema,
    RawProposal,
    RefValue,
    parse_proposal,
    serialize_proposal,
    validate_params,
)
from .gate import Gate, Outcome, ProposerSurface, ToolAdapter, build_gate
from .ifc import (
    Channel,
    DeclassificationGrant,
    Decision,
    Label,
    LabeledValue,
    LabelLattice,
    ProvenanceTag,
    TagMinter,
    declassify,
    flow_check,
    propagate,
)
from .memory import MemoryRecord, MemoryStore
from .policy import Context, PolicyRule, PolicySet, ScopeDecl, authorize, load_policy

__version__ = "0.1.0"


def default_policy_text() -> str:
    return (
        resources.files("trinitygate").joinpath("data/default.policy").read_text("utf-8")
    )


def load_default_policy() -> PolicySet:
    return load_policy(default_policy_text())


__all__ = [
    "ActionProposal",
    "ActionType",
    "AuditLog",
    "AuditRecord",
    "Channel",
    "Context",
    "Decision",
    "DeclassificationGrant",
    "FacVocabulary",
    "Gate",
    "Label",
    "LabelLattice",
    "LabeledValue",
    "MemoryRecord",
    "MemoryStore",
    "Outcome",
    "ParamKind",
    "ParamSchema",
    "PolicyRule",
    "PolicySet",
    "ProposerSurface",
    "ProvenanceTag",
    "RawProposal",
    "RefValue",
    "ScopeDecl",
    "TagMinter",
    "ToolAdapter",
    "TrinityError",
    "VerifyResult",
    "audit_verify",
    "authorize",
    "build_gate",
    "declassify",
    "default_policy_text",
    "flow_check",
    "load_default_policy",
    "load_policy",
    "parse_proposal",
    "propagate",
    "serialize_proposal",
    "validate_params",
]
