"""Scenario harness: scripted planners driving the gate end to end.

Scenarios are NDJSON files (canonical envelope encoding): a header line
followed by steps. Planners here are scripted proposal sequences, never
models, so every run is an exact regression. The harness computes the
headline counters purely from audit chains and declared expectations:
policy-violating executions, attack successes, false-positive blocks on
benign steps, cross-scope sentinel leaks, and authorize/propagate latency
percentiles.

Step kinds:
    scenario  header: id, description, category, expectation, sentinels,
              probe_sessions
    session   declare a session's principal and response sink label
    doc       register a labeled corpus document (operator channel)
    ingest    bring a labeled artifact into a session
    propose   submit proposal text, with an expected outcome
    confirm   user approves the most recent confirmation token for a
              principal
"""

from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from .audit import AuditRecord, verify_records
from .errors import DomainError, HarnessFailure, ScenarioInvalid
from .gate import Gate, Outcome
from .ifc import Channel, flow_check
from .policy import PolicySet

CATEGORIES = ("injection", "leakage", "modality", "benign")
EXPECTATIONS = ("MustDenyAll", "MustExecuteAll", "Mixed")
STEP_EXPECTS = ("executed", "denied", "rejected", "needs_confirmation", "failed")

_BLOCKED = ("denied", "rejected", "needs_confirmation")


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    description: str
    category: str
    expectation: str
    steps: tuple[dict, ...]
    sentinels: tuple[str, ...] = ()
    probe_sessions: tuple[str, ...] = ()
    seed: int = 0

    @property
    def is_attack(self) -> bool:
        return self.category in ("injection", "modality", "leakage")


@dataclass
class StepResult:
    kind: str
    text: str
    expect: Optional[str]
    actual: Optional[str]
    matched: bool
    fired_rules: list[str] = field(default_factory=list)
    detail: str = ""


@dataclass
class ScenarioResult:
    scenario: Scenario
    steps: list[StepResult]
    matched: bool
    leaks: int
    visible: dict[str, list[str]]
    outbox: list[dict]
    audit_records: list[AuditRecord]
    policy_violations: int

    def to_report(self) -> dict:
        return {
            "kind": "scenario_result",
            "id": self.scenario.scenario_id,
            "category": self.scenario.category,
            "matched": self.matched,
            "leaks": self.leaks,
            "policy_violations": self.policy_violations,
            "steps": [
                {
                    "text": s.text,
                    "expect": s.expect,
                    "actual": s.actual,
                    "matched": s.matched,
                    "fired_rules": s.fired_rules,
                }
                for s in self.steps
                if s.kind == "propose"
            ],
        }


@dataclass
class Metrics:
    scenarios_total: int = 0
    attack_scenarios: int = 0
    benign_total: int = 0
    attack_success_count: int = 0
    policy_violating_executions: int = 0
    false_positive_blocks: int = 0
    cross_scope_leaks: int = 0
    expectations_failed: int = 0
    latency_authorize_ms: dict = field(default_factory=dict)
    latency_propagate_ms: dict = field(default_factory=dict)

    @property
    def false_positive_rate(self) -> float:
        if self.benign_total == 0:
            return 0.0
        return self.false_positive_blocks / self.benign_total

    def hard_gates_ok(self) -> bool:
        return (
            self.policy_violating_executions == 0
            and self.cross_scope_leaks == 0
            and self.attack_success_count == 0
        )

    def to_report(self, include_latency: bool = True) -> dict:
        out = {
            "kind": "metrics",
            "scenarios_total": self.scenarios_total,
            "attack_scenarios": self.attack_scenarios,
            "benign_total": self.benign_total,
            "attack_success_count": self.attack_success_count,
            "policy_violating_executions": self.policy_violating_executions,
            "false_positive_blocks": self.false_positive_blocks,
            "false_positive_rate": round(self.false_positive_rate, 6),
            "cross_scope_leaks": self.cross_scope_leaks,
            "expectations_failed": self.expectations_failed,
        }
        if include_latency:
            out["latency_authorize_ms"] = self.latency_authorize_ms
            out["latency_propagate_ms"] = self.latency_propagate_ms
        return out


class LatencyCollector:
    """Thread-safe nanosecond samples for the two timed operations."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.samples: dict[str, list[int]] = {"authorize": [], "propagate": []}

    def __call__(self, what: str, nanos: int) -> None:
        with self._lock:
            self.samples.setdefault(what, []).append(nanos)

    def percentiles_ms(self, what: str) -> dict:
        with self._lock:
            values = sorted(self.samples.get(what, []))
        if not values:
            return {"p50": 0.0, "p95": 0.0, "n": 0}
        return {
            "p50": round(_nearest_rank(values, 0.50) / 1e6, 6),
            "p95": round(_nearest_rank(values, 0.95) / 1e6, 6),
            "n": len(values),
        }


def _nearest_rank(sorted_values: Sequence[int], q: float) -> int:
    idx = max(0, min(len(sorted_values) - 1, round(q * (len(sorted_values) - 1))))
    return sorted_values[idx]


def chain_reliability(p: float, n: int) -> float:
    """Success probability of an n-step chain of independent agents: p**n."""
    if not isinstance(n, int) or isinstance(n, bool) or n < 0:
        raise DomainError("chain length must be a non-negative integer")
    if not 0.0 <= p <= 1.0:
        raise DomainError("per-agent probability must lie in [0, 1]")
    return p ** n


# --- scenario files ---


def parse_scenario_lines(lines: Iterable[str], origin: str = "<memory>") -> Scenario:
    header: Optional[dict] = None
    steps: list[dict] = []
    for i, line in enumerate(lines):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except ValueError as exc:
            raise ScenarioInvalid(f"{origin}:{i + 1}: bad JSON: {exc}") from exc
        if header is None:
            if obj.get("kind") != "scenario":
                raise ScenarioInvalid(f"{origin}: first line must be the scenario header")
            header = obj
            continue
        steps.append(obj)
    if header is None:
        raise ScenarioInvalid(f"{origin}: empty scenario file")
    if header.get("category") not in CATEGORIES:
        raise ScenarioInvalid(f"{origin}: bad category {header.get('category')!r}")
    if header.get("expectation") not in EXPECTATIONS:
        raise ScenarioInvalid(f"{origin}: bad expectation {header.get('expectation')!r}")
    for step in steps:
        kind = step.get("kind")
        if kind not in ("session", "doc", "ingest", "propose", "confirm"):
            raise ScenarioInvalid(f"{origin}: unknown step kind {kind!r}")
        if kind == "propose":
            expect = step.get("expect")
            if header["expectation"] == "Mixed" and expect not in STEP_EXPECTS:
                raise ScenarioInvalid(
                    f"{origin}: Mixed scenario needs expect on every propose step"
                )
            if expect is not None and expect not in STEP_EXPECTS:
                raise ScenarioInvalid(f"{origin}: bad expect {expect!r}")
    return Scenario(
        scenario_id=header["id"],
        description=header.get("description", ""),
        category=header["category"],
        expectation=header["expectation"],
        steps=tuple(steps),
        sentinels=tuple(header.get("sentinels", [])),
        probe_sessions=tuple(header.get("probe_sessions", [])),
        seed=header.get("seed", 0),
    )


def load_scenario(path: Path) -> Scenario:
    return parse_scenario_lines(
        path.read_text(encoding="utf-8").splitlines(), str(path)
    )


def load_corpus(directory: Path) -> list[Scenario]:
    paths = sorted(directory.glob("*.ndjson"))
    if not paths:
        raise ScenarioInvalid(f"no *.ndjson scenarios under {directory}")
    return [load_scenario(p) for p in paths]


# --- execution ---


def _outcome_name(outcome: Outcome) -> str:
    if outcome.variant == "executed":
        return "executed" if outcome.record.ok else "failed"
    return outcome.variant


def _step_matched(expectation: str, expect: Optional[str], actual: str) -> bool:
    if expect is not None:
        return actual == expect
    if expectation == "MustDenyAll":
        return actual in _BLOCKED
    if expectation == "MustExecuteAll":
        return actual == "executed"
    return False  # Mixed without expect is rejected at parse time


def run_scenario(
    scenario: Scenario,
    gate: Gate,
    collector: Optional[LatencyCollector] = None,
) -> ScenarioResult:
    """Run one scenario on a fresh gate and grade every proposal."""
    lattice = gate.policy.lattice
    sinks: dict[str, object] = {}
    visible: dict[str, list[str]] = {}
    last_token: dict[str, str] = {}
    steps: list[StepResult] = []

    def session_key(principal: str, session: str) -> str:
        return f"{principal}/{session}"

    try:
        for step in scenario.steps:
            kind = step["kind"]
            if kind == "session":
                key = session_key(step["principal"], step["session"])
                sinks[key] = lattice.get(step.get("sink", lattice.top.name))
                visible.setdefault(key, [])
            elif kind == "doc":
                gate.register_doc(
                    step["doc_id"],
                    step["payload"],
                    step["label"],
                    source_id=step.get("source_id", ""),
                )
            elif kind == "ingest":
                gate.ingest(
                    step["principal"],
                    step["session"],
                    step["payload"],
                    step["label"],
                    Channel(step.get("channel", "retrieved_document")),
                    step.get("source_id", ""),
                    handle=step.get("handle"),
                    doc_id=step.get("doc_id"),
                )
            elif kind == "confirm":
                principal = step["principal"]
                token = last_token.get(principal)
                if token is None:
                    raise HarnessFailure(
                        f"{scenario.scenario_id}: confirm step with no pending token"
                    )
                gate.confirm(token, principal)
            elif kind == "propose":
                principal, session = step["principal"], step["session"]
                key = session_key(principal, session)
                outcome = gate.submit(step["text"], principal, session)
                if outcome.variant == "needs_confirmation":
                    last_token[principal] = outcome.confirm_token
                actual = _outcome_name(outcome)
                expect = step.get("expect")
                matched = _step_matched(scenario.expectation, expect, actual)
                fired = list(outcome.decision.fired_rules) if outcome.decision else []
                if matched and step.get("expect_rules"):
                    matched = set(step["expect_rules"]) <= set(fired)
                # deliver executed payloads subject to the session's sink
                if (
                    outcome.variant == "executed"
                    and outcome.record.result_payload
                ):
                    sink = sinks.get(key, lattice.top)
                    label = lattice.get(outcome.record.result_label)
                    if flow_check(lattice, [label], sink).allowed:
                        visible.setdefault(key, []).append(
                            outcome.record.result_payload
                        )
                        gate.note_delivery(
                            principal, session, label,
                            f"result:{outcome.record.record_id}",
                        )
                steps.append(
                    StepResult(
                        kind="propose",
                        text=step["text"],
                        expect=expect,
                        actual=actual,
                        matched=matched,
                        fired_rules=fired,
                        detail=outcome.record.detail if outcome.record else "",
                    )
                )
    except HarnessFailure:
        raise
    except Exception as exc:
        raise HarnessFailure(f"{scenario.scenario_id}: {exc}") from exc

    records = gate.audit.records()
    if not verify_records(records).ok:
        raise HarnessFailure(f"{scenario.scenario_id}: audit chain does not verify")

    leaks = _count_leaks(scenario, visible, gate.outbox_records())
    matched = all(s.matched for s in steps)
    return ScenarioResult(
        scenario=scenario,
        steps=steps,
        matched=matched,
        leaks=leaks,
        visible=visible,
        outbox=gate.outbox_records(),
        audit_records=records,
        policy_violations=mediation_violations(records),
    )


def _count_leaks(
    scenario: Scenario, visible: dict[str, list[str]], outbox: list[dict]
) -> int:
    leaks = 0
    for sentinel in scenario.sentinels:
        for key in scenario.probe_sessions:
            for payload in visible.get(key, []):
                if sentinel in payload:
                    leaks += 1
        for record in outbox:
            if sentinel in record.get("body", "") or sentinel in record.get("subject", ""):
                leaks += 1
    return leaks


def mediation_violations(records: Sequence[AuditRecord]) -> int:
    """Effect records lacking a properly ordered allow/consume chain.

    Every effect must cite a capability whose allow decision and consume
    event appear earlier, in order, and no capability may produce more than
    one effect.
    """
    allows: dict[str, int] = {}
    consumes: dict[str, int] = {}
    spent: set[str] = set()
    violations = 0
    for rec in records:
        ev = rec.event
        kind = ev.get("kind")
        if kind == "decision" and ev.get("capability_digest"):
            if ev["decision"]["outcome"] == "allow":
                allows[ev["capability_digest"]] = rec.seq
        elif kind == "capability_consume":
            consumes[ev["capability_digest"]] = rec.seq
        elif kind == "effect":
            digest = ev.get("capability_digest")
            a = allows.get(digest) if digest else None
            c = consumes.get(digest) if digest else None
            if digest is None or a is None or c is None or not (a < c < rec.seq):
                violations += 1
            elif digest in spent:
                violations += 1
            else:
                spent.add(digest)
    return violations


def run_corpus(
    scenarios: Sequence[Scenario],
    gate_factory: Callable[[], Gate],
    seed: int = 0,
    parallel: bool = False,
) -> tuple[Metrics, list[ScenarioResult]]:
    """Run every scenario on a fresh gate and aggregate the counters.

    ``seed`` is recorded in reports; scenarios are scripted, so outcomes do
    not depend on it. The parallel mode runs scenarios on independent gates.
    """
    if not scenarios:
        raise ScenarioInvalid("corpus is empty")
    collector = LatencyCollector()

    def one(scenario: Scenario) -> ScenarioResult:
        gate = gate_factory()
        gate._timing_sink = collector
        return run_scenario(scenario, gate, collector)

    if parallel:
        with ThreadPoolExecutor(max_workers=4) as pool:
            results = list(pool.map(one, scenarios))
    else:
        results = [one(s) for s in scenarios]

    metrics = Metrics()
    metrics.scenarios_total = len(results)
    for result in results:
        scenario = result.scenario
        if scenario.is_attack:
            metrics.attack_scenarios += 1
        metrics.policy_violating_executions += result.policy_violations
        metrics.cross_scope_leaks += result.leaks
        if not result.matched:
            metrics.expectations_failed += 1
        for step in result.steps:
            if scenario.category == "benign":
                metrics.benign_total += 1
                if not step.matched and step.actual in _BLOCKED:
                    metrics.false_positive_blocks += 1
            elif scenario.is_attack:
                if step.actual == "executed" and step.expect != "executed" and not step.matched:
                    metrics.attack_success_count += 1
    metrics.latency_authorize_ms = collector.percentiles_ms("authorize")
    metrics.latency_propagate_ms = collector.percentiles_ms("propagate")
    return metrics, results


def bench_latency(pol: PolicySet, iterations: int = 2000, seed: int = 0) -> dict:
    """Time the two hot checks directly over randomized, valid inputs."""
    import random
    import time

    from .fac import ActionProposal, RefValue
    from .ifc import LabeledValue, TagMinter
    from .policy import Context, authorize
    from .ifc import propagate as propagate_labels

    rng = random.Random(seed)
    lattice = pol.lattice
    names = [l.name for l in lattice.members()]
    minter = TagMinter()
    collector = LatencyCollector()

    def random_context() -> Context:
        return Context(
            principal=rng.choice(["alice", "userA", "userB"]),
            session="bench",
            last_input_label=lattice.get(rng.choice(names)) if rng.random() < 0.7 else None,
            last_input_provenance=None,
            pending_confirmations=frozenset(("tok",)) if rng.random() < 0.3 else frozenset(),
            session_declassifications=(),
        )

    for _ in range(iterations):
        body_label = lattice.get(rng.choice(names))
        proposal = ActionProposal(
            "SendEmail",
            (("to", "a@b"), ("subject", f"s{rng.randint(0, 999)}"), ("body", RefValue("v1"))),
            "alice",
            "bench",
        )
        labels = {"to": lattice.bottom, "subject": lattice.bottom, "body": body_label}
        ctx = random_context()
        t0 = time.perf_counter_ns()
        authorize(proposal, labels, ctx, pol)
        collector("authorize", time.perf_counter_ns() - t0)

        values = [
            LabeledValue("x", lattice.get(rng.choice(names)), ())
            for _ in range(rng.randint(1, 6))
        ]
        t0 = time.perf_counter_ns()
        propagate_labels(lattice, values)
        collector("propagate", time.perf_counter_ns() - t0)

    return {
        "authorize": collector.percentiles_ms("authorize"),
        "propagate": collector.percentiles_ms("propagate"),
    }


def report_lines(
    metrics: Metrics, results: Sequence[ScenarioResult], seed: int = 0
) -> list[str]:
    lines = [json.dumps({"kind": "run", "seed": seed}, sort_keys=True)]
    for result in results:
        lines.append(json.dumps(result.to_report(), sort_keys=True))
    lines.append(json.dumps(metrics.to_report(), sort_keys=True))
    return lines


def render_table(metrics: Metrics) -> str:
    rows = [
        ("scenarios", str(metrics.scenarios_total)),
        ("attack scenarios", str(metrics.attack_scenarios)),
        ("benign proposals", str(metrics.benign_total)),
        ("policy-violating executions", str(metrics.policy_violating_executions)),
        ("attack successes", str(metrics.attack_success_count)),
        ("cross-scope leaks", str(metrics.cross_scope_leaks)),
        ("false-positive blocks", f"{metrics.false_positive_blocks}"
         f" ({metrics.false_positive_rate:.2%})"),
        ("expectation mismatches", str(metrics.expectations_failed)),
        ("authorize p50/p95 ms", f"{metrics.latency_authorize_ms.get('p50', 0)}"
         f" / {metrics.latency_authorize_ms.get('p95', 0)}"),
        ("propagate p50/p95 ms", f"{metrics.latency_propagate_ms.get('p50', 0)}"
         f" / {metrics.latency_propagate_ms.get('p95', 0)}"),
    ]
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name.ljust(width)}  {value}" for name, value in rows)
