"""Hash chain construction and tamper detection."""

import hashlib
import json
import random

import pytest

from trinitygate import AuditLog, audit_verify
from trinitygate.audit import GENESIS_PREV_HASH, record_hash
from trinitygate.encoding import canonical_bytes
from trinitygate.errors import AuditUnavailable


def oracle_hash(prev_hex, event, seq):
    """Independent recomputation of the record digest."""
    pre = bytes.fromhex(prev_hex) + canonical_bytes(event) + seq.to_bytes(8, "big")
    return hashlib.sha256(pre).hexdigest()


def fill(log, n=10):
    for i in range(n):
        log.append({"kind": "test", "i": i})
    return log


class TestChain:
    def test_genesis_record(self):
        log = AuditLog()
        rec = log.append({"kind": "boot"})
        assert rec.seq == 0
        assert rec.prev_hash == "0" * 64
        assert rec.hash == oracle_hash("0" * 64, {"kind": "boot"}, 0)

    def test_second_record_links_to_first(self):
        log = AuditLog()
        first = log.append({"kind": "boot"})
        second = log.append({"kind": "next"})
        assert second.seq == 1
        assert second.prev_hash == first.hash

    def test_identical_events_get_distinct_hashes(self):
        log = AuditLog()
        a = log.append({"kind": "same"})
        b = log.append({"kind": "same"})
        # recomputed by hand: seq and prev differ, so digests differ
        assert a.hash == oracle_hash(GENESIS_PREV_HASH, {"kind": "same"}, 0)
        assert b.hash == oracle_hash(a.hash, {"kind": "same"}, 1)
        assert a.hash != b.hash

    def test_non_canonical_event_rejected(self):
        from trinitygate.errors import StorageFailure

        log = AuditLog()
        with pytest.raises(StorageFailure):
            log.append({"kind": "bad", "x": 0.5})

    def test_record_hash_helper_matches_oracle(self):
        event = {"kind": "x", "n": 3, "labels": ["A", "B"]}
        assert record_hash("ab" * 32, event, 7) == oracle_hash("ab" * 32, event, 7)


class TestVerify:
    def test_untampered_log_ok(self, tmp_path):
        path = tmp_path / "audit.log"
        log = fill(AuditLog(path), 100)
        log.close()
        result = audit_verify(path)
        assert result.ok
        assert result.records == 100

    def test_payload_byte_flip_detected_at_index(self, tmp_path):
        path = tmp_path / "audit.log"
        log = fill(AuditLog(path), 100)
        log.close()
        lines = path.read_text().splitlines()
        obj = json.loads(lines[42])
        obj["event"]["i"] = 9999
        lines[42] = json.dumps(obj, sort_keys=True, separators=(",", ":"))
        path.write_text("\n".join(lines) + "\n")
        result = audit_verify(path)
        assert not result.ok
        assert result.first_bad_seq == 42

    def test_deletion_with_reindex_detected(self, tmp_path):
        path = tmp_path / "audit.log"
        log = fill(AuditLog(path), 20)
        log.close()
        lines = path.read_text().splitlines()
        del lines[10]
        reindexed = []
        for i, line in enumerate(lines):
            obj = json.loads(line)
            obj["seq"] = i
            reindexed.append(json.dumps(obj, sort_keys=True, separators=(",", ":")))
        path.write_text("\n".join(reindexed) + "\n")
        result = audit_verify(path)
        assert not result.ok
        assert result.first_bad_seq == 10  # prev_hash no longer links

    def test_deletion_without_reindex_detected(self, tmp_path):
        path = tmp_path / "audit.log"
        log = fill(AuditLog(path), 20)
        log.close()
        lines = path.read_text().splitlines()
        del lines[10]
        path.write_text("\n".join(lines) + "\n")
        assert audit_verify(path).first_bad_seq == 10

    def test_reorder_detected(self, tmp_path):
        path = tmp_path / "audit.log"
        log = fill(AuditLog(path), 20)
        log.close()
        lines = path.read_text().splitlines()
        lines[5], lines[6] = lines[6], lines[5]
        path.write_text("\n".join(lines) + "\n")
        assert audit_verify(path).first_bad_seq == 5

    def test_unparseable_line_detected(self, tmp_path):
        path = tmp_path / "audit.log"
        log = fill(AuditLog(path), 5)
        log.close()
        lines = path.read_text().splitlines()
        lines[3] = lines[3][:10] + "\x00" + lines[3][11:]
        path.write_text("\n".join(lines) + "\n")
        assert audit_verify(path).first_bad_seq == 3

    def test_random_single_mutations_smoke(self, tmp_path):
        # the 10^3-trial version runs in the acceptance suite
        rng = random.Random(0)
        path = tmp_path / "audit.log"
        log = fill(AuditLog(path), 50)
        log.close()
        pristine = path.read_text()
        for _ in range(50):
            lines = pristine.splitlines()
            idx = rng.randrange(len(lines))
            obj = json.loads(lines[idx])
            field = rng.choice(["event", "seq", "prev_hash", "hash"])
            if field == "event":
                obj["event"]["i"] = obj["event"]["i"] + 1
            elif field == "seq":
                obj["seq"] += rng.choice([-1, 1])
            else:
                digest = list(obj[field])
                pos = rng.randrange(len(digest))
                digest[pos] = "0" if digest[pos] != "0" else "f"
                obj[field] = "".join(digest)
            lines[idx] = json.dumps(obj, sort_keys=True, separators=(",", ":"))
            path.write_text("\n".join(lines) + "\n")
            result = audit_verify(path)
            assert not result.ok
            assert result.first_bad_seq == idx
        path.write_text(pristine)
        assert audit_verify(path).ok


class TestSink:
    def test_disabled_sink_raises(self):
        log = AuditLog()
        log.disable()
        with pytest.raises(AuditUnavailable):
            log.append({"kind": "x"})

    def test_reopen_existing_log_continues_chain(self, tmp_path):
        path = tmp_path / "audit.log"
        log = fill(AuditLog(path), 3)
        log.close()
        log2 = AuditLog(path)
        rec = log2.append({"kind": "resumed"})
        log2.close()
        assert rec.seq == 3
        assert audit_verify(path).ok

    def test_tail(self):
        log = fill(AuditLog(), 10)
        assert [r.seq for r in log.tail(3)] == [7, 8, 9]
        assert len(log.tail(100)) == 10
