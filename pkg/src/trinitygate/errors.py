"""Error taxonomy for the control plane.

Every error carries a stable ``code`` (its class name) so outcomes can be
mirrored over the wire and matched in scenario expectations without parsing
human-oriented messages.
"""

from __future__ import annotations


class TrinityError(Exception):
    """Base class for all control-plane errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# --- lattice / information flow ---

class UnknownLabel(TrinityError):
    pass


class LatticeInvalid(TrinityError):
    pass


class DeniedDeclassification(TrinityError):
    pass


class AuditUnavailable(TrinityError):
    """The audit sink cannot accept appends; callers must fail closed."""


# --- proposal parsing (syntactic) ---

class ParseError(TrinityError):
    pass


class UnknownAction(ParseError):
    pass


class MalformedSyntax(ParseError):
    pass


class InputTooLarge(ParseError):
    pass


# --- proposal validation (type system) ---

class ProposalTypeError(TrinityError):
    pass


class MissingParam(ProposalTypeError):
    pass


class UnexpectedParam(ProposalTypeError):
    pass


class KindMismatch(ProposalTypeError):
    pass


class UnmintedHandle(ProposalTypeError):
    pass


# --- policy documents ---

class PolicyError(TrinityError):
    pass


class PolicySyntaxError(PolicyError):
    pass


class UnknownLabelReference(PolicyError):
    pass


class DuplicateRuleId(PolicyError):
    pass


class UnknownScope(TrinityError):
    """A runtime reference to a scope the policy does not declare."""


# --- gate ---

class RegistryFrozen(TrinityError):
    pass


class UnknownToken(TrinityError):
    pass


class WrongPrincipal(TrinityError):
    pass


class AlreadyUsed(TrinityError):
    pass


class CapabilityError(TrinityError):
    """Capability reuse or digest mismatch at the execution boundary."""


# --- memory ---

class ScopeUnknown(TrinityError):
    pass


class DominanceViolation(TrinityError):
    pass


class WriterNotPermitted(TrinityError):
    pass


class ReaderNotPermitted(TrinityError):
    pass


class KeyAbsent(TrinityError):
    pass


# --- audit ---

class StorageFailure(TrinityError):
    pass


# --- service ---

class UnknownOp(TrinityError):
    pass


class IdentityUnknown(TrinityError):
    pass


class FlowDenied(TrinityError):
    pass


# --- scenario harness ---

class ScenarioInvalid(TrinityError):
    pass


class HarnessFailure(TrinityError):
    pass


class DomainError(TrinityError):
    pass
