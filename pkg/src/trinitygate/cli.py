"""Operator command line.

Verbs: policy-check, serve, run-corpus, run-scenario, audit-verify, bench.
Exit codes: 0 success, 1 operational failure, 2 usage error. Reports and
machine output go to stdout or the --report file; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path
from typing import Optional

from . import default_policy_text
from .audit import AuditLog, audit_verify
from .errors import TrinityError
from .gate import build_gate
from .ifc import Channel
from .policy import PolicySet, load_policy
from .service import (
    BIND_ENV_VAR,
    GateServer,
    GateService,
    parse_service_config,
    resolve_bind,
)
from .sim import (
    bench_latency,
    load_corpus,
    load_scenario,
    render_table,
    report_lines,
    run_corpus,
    run_scenario,
)

AUTHORIZE_BUDGET_MS = 50.0
PROPAGATE_BUDGET_MS = 25.0
HEADROOM = 100.0


def _load_policy_arg(path: Optional[str]) -> PolicySet:
    text = Path(path).read_text(encoding="utf-8") if path else default_policy_text()
    return load_policy(text)


def _default_corpus_dir() -> Path:
    return Path(str(resources.files("trinitygate").joinpath("data/corpus/v1")))


def cmd_policy_check(args: argparse.Namespace) -> int:
    try:
        pol = _load_policy_arg(args.policy)
    except TrinityError as exc:
        print(f"policy error: {exc.code}: {exc}", file=sys.stderr)
        return 1
    print(f"labels: {', '.join(l.name for l in pol.lattice.members())}")
    print(f"bottom: {pol.lattice.bottom.name}  top: {pol.lattice.top.name}")
    print(f"scopes: {', '.join(sorted(pol.scopes)) or '(none)'}")
    for rule in pol.rules:
        preds = " ".join(p.render() for p in rule.predicates)
        print(f"rule {rule.rule_id}: {rule.effect} [{preds}]")
    for grant in pol.grants:
        scope = f" scope={grant.action_scope}" if grant.action_scope else ""
        print(
            f"grant {grant.grant_id}: {grant.from_label.name} -> "
            f"{grant.to_label.name} authority={grant.authority}{scope}"
        )
    print(f"sinks: {', '.join(sorted(s.name for s in pol.sinks)) or '(none)'}")
    print(f"{len(pol.rules)} rules ok")
    return 0


def cmd_audit_verify(args: argparse.Namespace) -> int:
    try:
        result = audit_verify(Path(args.log))
    except TrinityError as exc:
        print(f"audit error: {exc}", file=sys.stderr)
        return 1
    print(result.render())
    return 0 if result.ok else 1


def cmd_run_scenario(args: argparse.Namespace) -> int:
    pol = _load_policy_arg(args.policy)
    scenario = load_scenario(Path(args.scenario))
    gate = build_gate(pol)
    result = run_scenario(scenario, gate)
    for step in result.steps:
        mark = "ok " if step.matched else "MISMATCH"
        print(f"[{mark}] {step.text[:70]} -> {step.actual} {step.fired_rules}")
    print(
        f"scenario {scenario.scenario_id}: matched={result.matched} "
        f"leaks={result.leaks} violations={result.policy_violations}"
    )
    return 0 if result.matched and result.leaks == 0 and result.policy_violations == 0 else 1


def cmd_run_corpus(args: argparse.Namespace) -> int:
    pol = _load_policy_arg(args.policy)
    corpus_dir = Path(args.corpus) if args.corpus else _default_corpus_dir()
    try:
        scenarios = load_corpus(corpus_dir)
        metrics, results = run_corpus(
            scenarios, lambda: build_gate(pol), seed=args.seed, parallel=args.parallel
        )
    except TrinityError as exc:
        print(f"corpus error: {exc.code}: {exc}", file=sys.stderr)
        return 1
    if args.report:
        Path(args.report).write_text(
            "\n".join(report_lines(metrics, results, args.seed)) + "\n",
            encoding="utf-8",
        )
        print(f"report written to {args.report}", file=sys.stderr)
    print(render_table(metrics))
    if metrics.expectations_failed:
        print(
            f"warning: {metrics.expectations_failed} scenario expectation(s) failed",
            file=sys.stderr,
        )
    return 0 if metrics.hard_gates_ok() else 1


def cmd_bench(args: argparse.Namespace) -> int:
    pol = _load_policy_arg(args.policy)
    result = bench_latency(pol, iterations=args.iterations, seed=args.seed)
    ok = True
    for what, budget in (("authorize", AUTHORIZE_BUDGET_MS), ("propagate", PROPAGATE_BUDGET_MS)):
        p50, p95 = result[what]["p50"], result[what]["p95"]
        headroom = budget / p50 if p50 > 0 else float("inf")
        within = p50 < budget and headroom >= HEADROOM
        ok = ok and within
        print(
            f"{what}: p50={p50}ms p95={p95}ms budget={budget}ms "
            f"headroom={headroom:.0f}x {'ok' if within else 'OVER BUDGET'}"
        )
    if args.report:
        Path(args.report).write_text(json.dumps(result, sort_keys=True) + "\n")
    return 0 if ok else 1


def cmd_serve(args: argparse.Namespace) -> int:
    pol = _load_policy_arg(args.policy)
    config_text = Path(args.config).read_text(encoding="utf-8")
    try:
        config = parse_service_config(config_text, pol)
    except TrinityError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    state_dir = Path(args.state_dir) if args.state_dir else None
    if state_dir:
        state_dir.mkdir(parents=True, exist_ok=True)
    gate = build_gate(
        pol,
        audit=AuditLog(state_dir / "audit.log") if state_dir else None,
        memory_path=state_dir / "memory.log" if state_dir else None,
        outbox_path=state_dir / "outbox.ndjson" if state_dir else None,
    )
    for setup in args.setup or []:
        _apply_setup(gate, Path(setup))
    bind = resolve_bind(args.bind, config.bind)
    server = GateServer(GateService(gate, config), bind)
    print(json.dumps({"kind": "ready", "bind": server.bound_address}), flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return 0


def _apply_setup(gate, path: Path) -> None:
    """Apply a scenario file's ingestion context (no proposals)."""
    scenario = load_scenario(path)
    for step in scenario.steps:
        if step["kind"] == "doc":
            gate.register_doc(
                step["doc_id"], step["payload"], step["label"],
                source_id=step.get("source_id", ""),
            )
        elif step["kind"] == "ingest":
            gate.ingest(
                step["principal"], step["session"], step["payload"], step["label"],
                Channel(step.get("channel", "retrieved_document")),
                step.get("source_id", ""),
                handle=step.get("handle"), doc_id=step.get("doc_id"),
            )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trinity-gate",
        description="Deterministic control plane: validate policies, serve the "
        "gate, replay scenarios, verify audit chains, run benches.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("policy-check", help="validate a policy document")
    p.add_argument("policy", nargs="?", help="policy path (default: shipped policy)")
    p.set_defaults(fn=cmd_policy_check)

    p = sub.add_parser("audit-verify", help="verify an audit log's hash chain")
    p.add_argument("log")
    p.set_defaults(fn=cmd_audit_verify)

    p = sub.add_parser("run-scenario", help="replay one scenario file")
    p.add_argument("scenario")
    p.add_argument("--policy")
    p.set_defaults(fn=cmd_run_scenario)

    p = sub.add_parser("run-corpus", help="run a scenario corpus and report metrics")
    p.add_argument("--corpus", help="scenario directory (default: shipped corpus)")
    p.add_argument("--policy")
    p.add_argument("--report", help="write an NDJSON report here")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallel", action="store_true")
    p.set_defaults(fn=cmd_run_corpus)

    p = sub.add_parser("bench", help="latency percentiles for the hot checks")
    p.add_argument("--policy")
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("serve", help="serve the gate over TCP")
    p.add_argument("--config", required=True, help="service config path")
    p.add_argument("--policy")
    p.add_argument("--bind", help=f"HOST:PORT (overridden by ${BIND_ENV_VAR})")
    p.add_argument(
        "--setup", action="append",
        help="scenario file whose ingestion steps seed the gate (repeatable)",
    )
    p.add_argument("--state-dir", help="directory for audit/memory/outbox files")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except TrinityError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
