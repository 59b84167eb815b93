"""Labeled, scope-isolated persistent memory.

Writes land in a named scope only when the scope's clearance dominates the
value's label and the writer is an explicit member; reads return the stored
value with exactly the label and provenance it was written with. Storage is
an append-only file of canonical records (one per line, the same envelope
encoding as the audit log) with latest-write-wins reads.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

from .encoding import canonical_json
from .errors import (
    DominanceViolation,
    KeyAbsent,
    ReaderNotPermitted,
    ScopeUnknown,
    StorageFailure,
    WriterNotPermitted,
)
from .ifc import LabeledValue, LabelLattice, ProvenanceTag
from .policy import Context, ScopeDecl


@dataclass(frozen=True)
class MemoryRecord:
    key: str
    value: LabeledValue
    scope: str
    written_by: str
    written_at: int  # monotonic per-store sequence number

    def to_line(self) -> str:
        return canonical_json(
            {
                "key": self.key,
                "scope": self.scope,
                "seq": self.written_at,
                "value": self.value.to_record(),
                "written_by": self.written_by,
            }
        )


class MemoryStore:
    """Scope-keyed store; every access is permission- and label-checked.

    The scope table comes from the loaded policy. Records are immutable;
    a new write to the same key shadows the old one by sequence number.
    """

    def __init__(
        self,
        scopes: Mapping[str, ScopeDecl],
        lattice: LabelLattice,
        path: Optional[Path] = None,
    ) -> None:
        self._scopes = dict(scopes)
        self._lattice = lattice
        self._path = path
        self._lock = threading.Lock()
        self._seq = 0
        # (scope, key) -> latest record; full history only on disk
        self._latest: dict[tuple[str, str], MemoryRecord] = {}
        self._fh = None
        if path is not None:
            if path.exists():
                self._load(path)
            self._fh = open(path, "a", encoding="utf-8")

    def _load(self, path: Path) -> None:
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            value = LabeledValue(
                payload=obj["value"]["payload"],
                label=self._lattice.get(obj["value"]["label"]),
                provenance=tuple(
                    ProvenanceTag.from_record(t) for t in obj["value"]["provenance"]
                ),
            )
            rec = MemoryRecord(
                key=obj["key"],
                value=value,
                scope=obj["scope"],
                written_by=obj["written_by"],
                written_at=obj["seq"],
            )
            self._latest[(rec.scope, rec.key)] = rec
            self._seq = max(self._seq, rec.written_at + 1)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def scope(self, name: str) -> ScopeDecl:
        try:
            return self._scopes[name]
        except KeyError:
            raise ScopeUnknown(f"scope {name!r} is not declared") from None

    def write(
        self, key: str, value: LabeledValue, scope_name: str, ctx: Context
    ) -> MemoryRecord:
        """Persist iff the scope dominates the label and the writer may write."""
        scope = self.scope(scope_name)
        if not scope.may_write(ctx.principal):
            raise WriterNotPermitted(
                f"{ctx.principal!r} may not write scope {scope_name!r}"
            )
        if not self._lattice.leq(value.label, scope.clearance):
            raise DominanceViolation(
                f"label {value.label.name} does not flow to scope "
                f"{scope_name!r} clearance {scope.clearance.name}"
            )
        with self._lock:
            rec = MemoryRecord(key, value, scope_name, ctx.principal, self._seq)
            self._seq += 1
            if self._fh is not None:
                try:
                    self._fh.write(rec.to_line() + "\n")
                    self._fh.flush()
                except OSError as exc:
                    raise StorageFailure(f"memory write failed: {exc}") from exc
            self._latest[(scope_name, key)] = rec
            return rec

    def read(self, key: str, scope_name: str, ctx: Context) -> LabeledValue:
        """Latest value for ``key`` if the principal may read the scope."""
        scope = self.scope(scope_name)
        if not scope.may_read(ctx.principal):
            raise ReaderNotPermitted(
                f"{ctx.principal!r} may not read scope {scope_name!r}"
            )
        with self._lock:
            rec = self._latest.get((scope_name, key))
        if rec is None:
            raise KeyAbsent(f"no record for {key!r} in scope {scope_name!r}")
        return rec.value

    def search(self, query: str, ctx: Context) -> list[MemoryRecord]:
        """Substring search across scopes the principal may read.

        Scopes the principal cannot read are skipped structurally; their
        bytes never enter the result set.
        """
        with self._lock:
            records = list(self._latest.values())
        out = []
        for rec in records:
            scope = self._scopes.get(rec.scope)
            if scope is None or not scope.may_read(ctx.principal):
                continue
            if query in rec.key or query in rec.value.payload:
                out.append(rec)
        out.sort(key=lambda r: r.written_at)
        return out
