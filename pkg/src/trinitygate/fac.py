"""Finite action vocabulary and the strict proposal parser.

Proposals are the only thing an untrusted planner can say to the control
plane, and this parser is their only entry point. The grammar is closed and
exact:

    proposal := action "(" [arg ("," arg)*] ")"
    arg      := ident "=" value
    value    := string | "ref:" handle
    string   := '"' (char | escape)* '"'     escapes: \\" \\\\ \\n only
    handle   := [A-Za-z0-9_-]+
    ident    := [A-Za-z_][A-Za-z0-9_]*

ASCII spaces and tabs may separate tokens; anything else that deviates is
rejected. String literal contents are inert payload: they are never scanned
for nested proposals or role markers, and parsing never executes anything.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Protocol, Union

from .errors import (
    InputTooLarge,
    KindMismatch,
    MalformedSyntax,
    MissingParam,
    UnexpectedParam,
    UnknownAction,
    UnmintedHandle,
)

MAX_PROPOSAL_BYTES = 64 * 1024

_IDENT_START = set("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz_")
_IDENT_CONT = _IDENT_START | set("0123456789")
_HANDLE_CHARS = _IDENT_CONT | set("-")
_WS = {" ", "\t"}


class ParamKind(str, Enum):
    TEXT = "text"
    RESOURCE_REF = "resource_ref"
    LABEL_NAME = "label_name"
    SCOPE_NAME = "scope_name"
    PRINCIPAL = "principal"


@dataclass(frozen=True)
class ParamSchema:
    name: str
    kind: ParamKind
    required: bool = True


@dataclass(frozen=True)
class ActionType:
    name: str
    params: tuple[ParamSchema, ...]
    privileged: bool = True

    def param(self, name: str) -> Optional[ParamSchema]:
        for p in self.params:
            if p.name == name:
                return p
        return None


class FacVocabulary:
    """Closed, finite set of action types."""

    def __init__(self, actions: list[ActionType]) -> None:
        self._actions: dict[str, ActionType] = {}
        for a in actions:
            if a.name in self._actions:
                raise ValueError(f"duplicate action {a.name!r}")
            names = [p.name for p in a.params]
            if len(names) != len(set(names)):
                raise ValueError(f"duplicate parameter name in {a.name!r}")
            self._actions[a.name] = a

    def has(self, name: str) -> bool:
        return name in self._actions

    def get(self, name: str) -> ActionType:
        return self._actions[name]

    def names(self) -> list[str]:
        return list(self._actions)

    @classmethod
    def default(cls) -> "FacVocabulary":
        """The shipped research-assistant vocabulary.

        Six core actions plus Confirm, which carries the user-approval step
        as its own action so approvals are mediated like everything else.
        """
        t, r, lab, sc = (
            ParamKind.TEXT,
            ParamKind.RESOURCE_REF,
            ParamKind.LABEL_NAME,
            ParamKind.SCOPE_NAME,
        )
        return cls(
            [
                ActionType("Retrieve", (ParamSchema("query", t),)),
                ActionType("ReadDoc", (ParamSchema("doc_id", t),)),
                ActionType("Summarize", (ParamSchema("doc_id", t),)),
                ActionType(
                    "WriteMemory",
                    (
                        ParamSchema("key", t),
                        ParamSchema("value", r),
                        ParamSchema("scope", sc),
                    ),
                ),
                ActionType(
                    "SendEmail",
                    (
                        ParamSchema("to", t),
                        ParamSchema("subject", t),
                        ParamSchema("body", r),
                    ),
                ),
                ActionType(
                    "Declassify",
                    (ParamSchema("src", r), ParamSchema("dst", lab)),
                ),
                ActionType("Confirm", (ParamSchema("token", t),)),
            ]
        )


@dataclass(frozen=True)
class RefValue:
    """A reference to a control-plane-minted value handle."""

    handle: str


ArgValue = Union[str, RefValue]


@dataclass(frozen=True)
class RawProposal:
    """Parse result: action name plus arguments in source order."""

    action: str
    args: tuple[tuple[str, ArgValue], ...]

    def args_dict(self) -> dict[str, ArgValue]:
        return dict(self.args)


@dataclass(frozen=True)
class ActionProposal:
    """A validated, fully typed proposal bound to its proposer and session."""

    action: str
    args: tuple[tuple[str, ArgValue], ...]
    proposer: str
    session: str

    def args_dict(self) -> dict[str, ArgValue]:
        return dict(self.args)

    def canonical_text(self) -> str:
        return serialize_proposal(RawProposal(self.action, self.args))


class _Scanner:
    def __init__(self, text: str) -> None:
        self.text = text
        self.pos = 0

    def fail(self, why: str) -> MalformedSyntax:
        return MalformedSyntax(f"offset {self.pos}: {why}")

    def eof(self) -> bool:
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def skip_ws(self) -> None:
        while not self.eof() and self.text[self.pos] in _WS:
            self.pos += 1

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            raise self.fail(f"expected {ch!r}")
        self.pos += 1

    def ident(self) -> str:
        start = self.pos
        if self.peek() not in _IDENT_START:
            raise self.fail("expected identifier")
        self.pos += 1
        while self.peek() in _IDENT_CONT:
            self.pos += 1
        return self.text[start:self.pos]

    def string(self) -> str:
        self.expect('"')
        out: list[str] = []
        while True:
            if self.eof():
                raise self.fail("unterminated string literal")
            ch = self.text[self.pos]
            if ch == '"':
                self.pos += 1
                return "".join(out)
            if ch == "\\":
                esc = self.text[self.pos + 1] if self.pos + 1 < len(self.text) else ""
                if esc == '"':
                    out.append('"')
                elif esc == "\\":
                    out.append("\\")
                elif esc == "n":
                    out.append("\n")
                else:
                    raise self.fail(f"unsupported escape \\{esc}")
                self.pos += 2
                continue
            if ord(ch) < 0x20:
                raise self.fail("raw control character in string literal")
            out.append(ch)
            self.pos += 1

    def ref(self) -> RefValue:
        # caller consumed nothing; "ref:" prefix then handle chars
        if self.text[self.pos:self.pos + 4] != "ref:":
            raise self.fail("expected string literal or ref: handle")
        self.pos += 4
        start = self.pos
        while self.peek() in _HANDLE_CHARS:
            self.pos += 1
        if self.pos == start:
            raise self.fail("empty ref handle")
        return RefValue(self.text[start:self.pos])


def parse_proposal(
    text: str,
    vocab: FacVocabulary,
    max_bytes: int = MAX_PROPOSAL_BYTES,
) -> RawProposal:
    """Parse one proposal exactly; deterministic, total, side-effect free.

    Raises InputTooLarge past the byte cap, UnknownAction for names outside
    the vocabulary, and MalformedSyntax for everything else that deviates
    from the grammar (including duplicate parameter names).
    """
    if len(text.encode("utf-8")) > max_bytes:
        raise InputTooLarge(f"proposal exceeds {max_bytes} bytes")
    sc = _Scanner(text)
    sc.skip_ws()
    if sc.eof():
        raise MalformedSyntax("empty proposal")
    action = sc.ident()
    if not vocab.has(action):
        raise UnknownAction(f"action {action!r} is not in the vocabulary")
    sc.skip_ws()
    sc.expect("(")
    sc.skip_ws()
    args: list[tuple[str, ArgValue]] = []
    seen: set[str] = set()
    if sc.peek() != ")":
        while True:
            sc.skip_ws()
            name = sc.ident()
            if name in seen:
                raise sc.fail(f"duplicate parameter {name!r}")
            seen.add(name)
            sc.skip_ws()
            sc.expect("=")
            sc.skip_ws()
            value: ArgValue
            if sc.peek() == '"':
                value = sc.string()
            else:
                value = sc.ref()
            args.append((name, value))
            sc.skip_ws()
            if sc.peek() == ",":
                sc.pos += 1
                continue
            break
    sc.expect(")")
    sc.skip_ws()
    if not sc.eof():
        raise sc.fail("trailing input after proposal")
    return RawProposal(action, tuple(args))


def _quote(text: str) -> str:
    out = text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
    return f'"{out}"'


def serialize_proposal(raw: RawProposal) -> str:
    """Canonical text form; parse(serialize(p)) == p for every proposal."""
    parts = []
    for name, value in raw.args:
        rendered = f"ref:{value.handle}" if isinstance(value, RefValue) else _quote(value)
        parts.append(f"{name}={rendered}")
    return f"{raw.action}({', '.join(parts)})"


class ParamResolver(Protocol):
    """Existence checks the validator needs from the surrounding plane."""

    def has_handle(self, handle: str) -> bool: ...

    def has_label(self, name: str) -> bool: ...

    def has_scope(self, name: str) -> bool: ...


def validate_params(
    raw: RawProposal,
    vocab: FacVocabulary,
    resolver: ParamResolver,
    proposer: str,
    session: str,
) -> ActionProposal:
    """Check ``raw`` against its action's parameter schemas.

    Resource refs must name minted handles; label and scope names must be
    declared. Text parameters accept any literal: their bytes are payload,
    not structure.
    """
    action = vocab.get(raw.action)
    given = raw.args_dict()
    for name in given:
        if action.param(name) is None:
            raise UnexpectedParam(f"{raw.action} does not take {name!r}")
    for schema in action.params:
        if schema.required and schema.name not in given:
            raise MissingParam(f"{raw.action} requires {schema.name!r}")
    for schema in action.params:
        if schema.name not in given:
            continue
        value = given[schema.name]
        if schema.kind == ParamKind.RESOURCE_REF:
            if not isinstance(value, RefValue):
                raise KindMismatch(f"{schema.name!r} must be a ref: handle")
            if not resolver.has_handle(value.handle):
                raise UnmintedHandle(f"handle {value.handle!r} was never minted")
        elif isinstance(value, RefValue):
            raise KindMismatch(f"{schema.name!r} must be a string literal")
        elif schema.kind == ParamKind.LABEL_NAME:
            if not resolver.has_label(value):
                raise KindMismatch(f"{value!r} is not a declared label")
        elif schema.kind == ParamKind.SCOPE_NAME:
            if not resolver.has_scope(value):
                raise KindMismatch(f"{value!r} is not a declared scope")
        # TEXT and PRINCIPAL accept any literal.
    return ActionProposal(raw.action, raw.args, proposer, session)
