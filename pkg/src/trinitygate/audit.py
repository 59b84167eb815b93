"""Append-only, hash-chained audit log.

Every parse, decision, execution, declassification, and denial lands here.
Records are newline-delimited canonical JSON objects:

    {"event":{...},"hash":H,"prev_hash":P,"seq":N,"ts":T}

with H = SHA-256( raw(P) || canonical(event) || N as 8-byte big-endian ),
hex digests, seq contiguous from 0, and the genesis prev_hash equal to 32
zero bytes. The ``ts`` field is informational only and outside the
authenticated envelope; sequence order is authoritative. Event bodies are
restricted to canonical material and never contain payload bytes, so the
encoding is bit-stable and independently written verifiers can recompute
every digest.
"""

from __future__ import annotations

import hashlib
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Union

from .encoding import NotCanonical, canonical_bytes, canonical_json
from .errors import AuditUnavailable, StorageFailure

GENESIS_PREV_HASH = "0" * 64


def _utc_iso(ts: Optional[float] = None) -> str:
    t = time.time() if ts is None else ts
    frac = int((t % 1) * 1_000_000)
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(t)) + f".{frac:06d}Z"


def record_hash(prev_hash: str, event: dict, seq: int) -> str:
    preimage = bytes.fromhex(prev_hash) + canonical_bytes(event) + seq.to_bytes(8, "big")
    return hashlib.sha256(preimage).hexdigest()


@dataclass(frozen=True)
class AuditRecord:
    seq: int
    prev_hash: str
    event: dict
    hash: str
    ts: str

    def to_line(self) -> str:
        return canonical_json(
            {
                "event": self.event,
                "hash": self.hash,
                "prev_hash": self.prev_hash,
                "seq": self.seq,
                "ts": self.ts,
            }
        )


@dataclass(frozen=True)
class VerifyResult:
    ok: bool
    first_bad_seq: Optional[int] = None
    records: int = 0

    def render(self) -> str:
        if self.ok:
            return f"Ok({self.records} records)"
        return f"Tampered({self.first_bad_seq})"


class AuditLog:
    """Linearizable append sink with an optional file backing.

    Appends are durable before they return (written, flushed, and fsynced in
    file mode). ``disable()`` models a failed sink: every subsequent append
    raises AuditUnavailable so callers can prove they fail closed.
    """

    def __init__(self, path: Optional[Path] = None, fsync: bool = True) -> None:
        self._path = path
        self._fsync = fsync
        self._lock = threading.Lock()
        self._records: list[AuditRecord] = []
        self._disabled = False
        self._fh = None
        if path is not None:
            if path.exists():
                for rec in read_log(path):
                    self._records.append(rec)
            self._fh = open(path, "a", encoding="utf-8")

    @property
    def path(self) -> Optional[Path]:
        return self._path

    def disable(self) -> None:
        self._disabled = True

    def enable(self) -> None:
        self._disabled = False

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None
            self._disabled = True

    def append(self, event: dict) -> AuditRecord:
        with self._lock:
            if self._disabled:
                raise AuditUnavailable("audit sink is unavailable")
            try:
                canonical_json(event)
            except NotCanonical as exc:
                raise StorageFailure(f"event not canonical: {exc}") from exc
            seq = len(self._records)
            prev = self._records[-1].hash if self._records else GENESIS_PREV_HASH
            rec = AuditRecord(
                seq=seq,
                prev_hash=prev,
                event=event,
                hash=record_hash(prev, event, seq),
                ts=_utc_iso(),
            )
            if self._fh is not None:
                try:
                    self._fh.write(rec.to_line() + "\n")
                    self._fh.flush()
                    if self._fsync:
                        os.fsync(self._fh.fileno())
                except OSError as exc:
                    raise StorageFailure(f"audit write failed: {exc}") from exc
            self._records.append(rec)
            return rec

    def records(self) -> list[AuditRecord]:
        with self._lock:
            return list(self._records)

    def tail(self, n: int) -> list[AuditRecord]:
        with self._lock:
            return list(self._records[-max(n, 0):])

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def verify(self) -> VerifyResult:
        return verify_records(self.records())


def _parse_line(line: str) -> AuditRecord:
    import json

    obj = json.loads(line)
    return AuditRecord(
        seq=obj["seq"],
        prev_hash=obj["prev_hash"],
        event=obj["event"],
        hash=obj["hash"],
        ts=obj.get("ts", ""),
    )


def read_log(path: Path) -> list[AuditRecord]:
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise StorageFailure(f"cannot read audit log: {exc}") from exc
    return [_parse_line(line) for line in lines if line.strip()]


def verify_records(records: Iterable[AuditRecord]) -> VerifyResult:
    """Recompute the whole chain; report the first inconsistent index."""
    prev = GENESIS_PREV_HASH
    count = 0
    for i, rec in enumerate(records):
        count += 1
        if rec.seq != i or rec.prev_hash != prev:
            return VerifyResult(False, i)
        try:
            expected = record_hash(rec.prev_hash, rec.event, rec.seq)
        except (NotCanonical, ValueError):
            return VerifyResult(False, i)
        if expected != rec.hash:
            return VerifyResult(False, i)
        prev = rec.hash
    return VerifyResult(True, None, count)


def audit_verify(source: Union[Path, str, Iterable[AuditRecord]]) -> VerifyResult:
    """Verify a log file or an in-memory record sequence.

    A line that no longer parses counts as tampering at its index.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise StorageFailure(f"cannot read audit log: {exc}") from exc
        records: list[AuditRecord] = []
        for i, line in enumerate(lines):
            if not line.strip():
                continue
            try:
                records.append(_parse_line(line))
            except (ValueError, KeyError, TypeError):
                return VerifyResult(False, i)
        return verify_records(records)
    return verify_records(source)
