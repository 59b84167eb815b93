"""Taint propagation, provenance minting, and declassification."""

import random

import pytest

from trinitygate import (
    AuditLog,
    Channel,
    DeclassificationGrant,
    LabeledValue,
    LabelLattice,
    TagMinter,
    declassify,
    propagate,
)
from trinitygate.errors import AuditUnavailable, DeniedDeclassification, UnknownLabel


@pytest.fixture()
def minter():
    return TagMinter()


def value(chain, payload, label_name, minter, channel=Channel.TOOL_OUTPUT):
    return LabeledValue(
        payload, chain.get(label_name), (minter.mint(channel, "src"),)
    )


class TestPropagate:
    def test_join_of_inputs(self, chain, minter):
        inputs = [
            value(chain, "v", "INTERNAL", minter),
            value(chain, "w", "CONFIDENTIAL", minter),
        ]
        assert propagate(chain, inputs) == chain.get("CONFIDENTIAL")

    def test_empty_is_bottom(self, chain):
        assert propagate(chain, []) == chain.get("UNTRUSTED")

    def test_single_input(self, chain, minter):
        assert propagate(chain, [value(chain, "v", "UNTRUSTED", minter)]) == chain.get(
            "UNTRUSTED"
        )

    def test_monotone_taint_random(self, chain, minter):
        # no combination of inputs yields a label below any contributor
        rng = random.Random(7)
        names = ["UNTRUSTED", "INTERNAL", "CONFIDENTIAL"]
        for _ in range(500):
            inputs = [
                value(chain, "x", rng.choice(names), minter)
                for _ in range(rng.randint(1, 5))
            ]
            out = propagate(chain, inputs)
            for v in inputs:
                assert chain.leq(v.label, out)


class TestTagMinting:
    def test_minted_tag_verifies(self, minter):
        tag = minter.mint(Channel.RETRIEVED_DOCUMENT, "pdf:1")
        assert minter.verify(tag)

    def test_forged_nonce_rejected(self, minter):
        from trinitygate import ProvenanceTag

        forged = ProvenanceTag(Channel.SYSTEM_POLICY, "pdf:1", "0" * 32)
        assert not minter.verify(forged)

    def test_channel_swap_rejected(self, minter):
        from trinitygate import ProvenanceTag

        tag = minter.mint(Channel.RETRIEVED_DOCUMENT, "pdf:1")
        upgraded = ProvenanceTag(Channel.SYSTEM_POLICY, tag.source_id, tag.mint_nonce)
        assert not minter.verify(upgraded)

    def test_command_capability_is_channel_bound(self):
        assert Channel.SYSTEM_POLICY.command_capable
        assert Channel.USER_INSTRUCTION.command_capable
        assert not Channel.RETRIEVED_DOCUMENT.command_capable
        assert not Channel.TOOL_OUTPUT.command_capable


class TestDeclassify:
    def grant(self, chain, frm="CONFIDENTIAL", to="INTERNAL"):
        return DeclassificationGrant("g1", chain.get(frm), chain.get(to), "alice")

    def test_relabels_and_audits_first(self, chain, minter):
        audit = AuditLog()
        v = value(chain, "report", "CONFIDENTIAL", minter)
        out = declassify(
            v,
            chain.get("INTERNAL"),
            self.grant(chain),
            lattice=chain,
            minter=minter,
            audit_append=audit.append,
        )
        assert out.label == chain.get("INTERNAL")
        assert out.payload == "report"
        assert len(out.provenance) == len(v.provenance) + 1
        added = out.provenance[-1]
        assert added.channel == Channel.SYSTEM_POLICY
        assert "g1" in added.source_id
        events = [r.event for r in audit.records()]
        assert events[-1]["kind"] == "declassify"
        assert events[-1]["from"] == "CONFIDENTIAL"
        assert events[-1]["to"] == "INTERNAL"

    def test_same_label_relabel_still_audited(self, chain, minter):
        audit = AuditLog()
        v = value(chain, "note", "INTERNAL", minter)
        out = declassify(
            v,
            chain.get("INTERNAL"),
            self.grant(chain, "INTERNAL", "INTERNAL"),
            lattice=chain,
            minter=minter,
            audit_append=audit.append,
        )
        assert out.label == v.label
        assert out.payload == v.payload
        assert len(out.provenance) == len(v.provenance) + 1
        assert len(audit) == 1

    def test_no_grant_denied(self, chain, minter):
        v = value(chain, "secret", "CONFIDENTIAL", minter)
        with pytest.raises(DeniedDeclassification):
            declassify(
                v,
                chain.get("UNTRUSTED"),
                None,
                lattice=chain,
                minter=minter,
                audit_append=AuditLog().append,
            )

    def test_mismatched_grant_denied(self, chain, minter):
        v = value(chain, "secret", "CONFIDENTIAL", minter)
        with pytest.raises(DeniedDeclassification):
            declassify(
                v,
                chain.get("UNTRUSTED"),  # grant covers -> INTERNAL
                self.grant(chain),
                lattice=chain,
                minter=minter,
                audit_append=AuditLog().append,
            )

    def test_fails_closed_when_audit_unavailable(self, chain, minter):
        audit = AuditLog()
        audit.disable()
        v = value(chain, "secret", "CONFIDENTIAL", minter)
        with pytest.raises(AuditUnavailable):
            declassify(
                v,
                chain.get("INTERNAL"),
                self.grant(chain),
                lattice=chain,
                minter=minter,
                audit_append=audit.append,
            )

    def test_unknown_target_label(self, minter):
        chain = LabelLattice.default()
        other = LabelLattice(["X"], [], "X", "X")
        v = value(chain, "v", "CONFIDENTIAL", minter)
        with pytest.raises(UnknownLabel):
            declassify(
                v,
                other.get("X"),
                self.grant(chain),
                lattice=chain,
                minter=minter,
                audit_append=AuditLog().append,
            )
