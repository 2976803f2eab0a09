"""Command-line front end.

Subcommands: ``check`` (full compliance run), ``validate`` (rule and
process file validation only), ``traces`` (trace count / listing), and
``explain`` (derivation state at one step of one trace).

Exit codes: 0 verdict Green, 1 Orange, 2 Red, 3 input or validation
error, 4 enumeration limit exceeded.  The JSON report is byte-identical
across runs on identical inputs, regardless of ``--jobs``.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

from .bpmn import AnnotationMap, ProcessGraph, parse_annotations, parse_bpmn
from .ddl import RuleSet
from .engine import (
    AggregateVerdict,
    ComplianceReport,
    TraceResult,
    TraceVerdict,
    aggregate,
    check_trace,
    explain,
)
from .errors import NormCheckError
from .rulefile import Diagnostic, load_ruleset
from .traces import (
    EnumerationConfig,
    ExplosionLimit,
    Trace,
    count_traces,
    enumerate_traces,
)

EXIT_GREEN = 0
EXIT_ORANGE = 1
EXIT_RED = 2
EXIT_INPUT_ERROR = 3
EXIT_LIMIT = 4

_VERDICT_EXIT = {
    AggregateVerdict.GREEN: EXIT_GREEN,
    AggregateVerdict.ORANGE: EXIT_ORANGE,
    AggregateVerdict.RED: EXIT_RED,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # input problems map to exit 3, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT_ERROR)


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_INPUT_ERROR


def _print_diagnostics(diagnostics: Sequence[Diagnostic]):
    for diag in diagnostics:
        print(str(diag), file=sys.stderr)


def _read(path: str) -> str:
    with open(path, "r", encoding="utf-8") as handle:
        return handle.read()


def _load_inputs(args) -> tuple[RuleSet, ProcessGraph, AnnotationMap]:
    ruleset, diagnostics = load_ruleset(args.rules)
    _print_diagnostics(diagnostics)
    if ruleset is None:
        raise NormCheckError("rule files failed validation")
    graph = parse_bpmn(_read(args.bpmn))
    if args.annotations:
        annotations = parse_annotations(_read(args.annotations), graph, ruleset.vocabulary)
    else:
        annotations = AnnotationMap(graph.process_id, {})
    return ruleset, graph, annotations


def _enumeration_config(args) -> EnumerationConfig:
    return EnumerationConfig(
        max_loop=args.max_loop,
        max_interleavings=args.max_interleavings,
        max_traces=args.max_traces,
    )


def report_to_dict(report: ComplianceReport) -> dict:
    """Stable-order dictionary form of a report (the JSON schema)."""

    def trace_dict(result: TraceResult) -> dict:
        return {
            "steps": list(result.trace.steps),
            "originPath": {
                "choices": list(result.trace.origin.choices),
                "loops": {edge: count for edge, count in result.trace.origin.loops},
            },
            "verdict": result.verdict.value,
            "violations": [
                {
                    "rule": v.instance.source_rule,
                    "task": report.violation_task(result, v),
                    "compensated": v.compensated,
                }
                for v in result.violations
            ],
            "warnings": [
                {"code": w.code, "message": w.message, "step": w.step}
                for w in result.warnings
            ],
        }

    return {
        "verdict": report.aggregate_verdict.value,
        "process": report.process_id,
        "ruleFiles": list(report.rule_files),
        "traces": [trace_dict(r) for r in report.trace_results],
        "explanations": [
            {
                "rule": e.rule,
                "controlObjective": e.control_objective,
                "task": e.task,
                "originPaths": list(e.origins),
            }
            for e in report.explanations
        ],
        "config": dict(report.config),
    }


def render_text(report: ComplianceReport) -> str:
    lines = [
        f"process: {report.process_id}",
        f"rules: {', '.join(report.rule_files)}",
        f"traces checked: {len(report.trace_results)}",
        f"verdict: {report.aggregate_verdict.value.upper()}",
    ]
    for index, result in enumerate(report.trace_results):
        if result.verdict is TraceVerdict.COMPLIANT and not result.warnings:
            continue
        lines.append(
            f"trace {index} [{result.trace.origin.describe()}]: {result.verdict.value}"
        )
        for violation in result.violations:
            state = "compensated" if violation.compensated else "uncompensated"
            lines.append(
                f"  violation: {violation.instance.element} "
                f"(rule {violation.instance.source_rule}) at task "
                f"{report.violation_task(result, violation)!r} [{state}]"
            )
        for warning in result.warnings:
            where = f" (step {warning.step})" if warning.step is not None else ""
            lines.append(f"  warning: {warning.code}: {warning.message}{where}")
    if report.explanations:
        lines.append("explanations:")
        for entry in report.explanations:
            lines.append(f"  rule {entry.rule} at task {entry.task!r}")
            if entry.control_objective:
                lines.append(f"    control objective: {entry.control_objective}")
            for origin in entry.origins:
                lines.append(f"    trace: {origin}")
    return "\n".join(lines) + "\n"


def run_check(args) -> int:
    try:
        ruleset, graph, annotations = _load_inputs(args)
        cfg = _enumeration_config(args)
        traces = enumerate_traces(graph, cfg)
    except ExplosionLimit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except NormCheckError as exc:
        return _fail(str(exc))

    def check_one(trace: Trace) -> TraceResult:
        return check_trace(trace, annotations, ruleset)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(check_one, traces))
    else:
        results = [check_one(t) for t in traces]

    report = aggregate(
        results,
        ruleset=ruleset,
        task_names={t: graph.task_name(t) for t in graph.task_ids()},
        process_id=graph.process_id,
        rule_files=args.rules,
        config={
            "bpmn": args.bpmn,
            "annotations": args.annotations or "",
            "maxLoop": args.max_loop,
            "maxInterleavings": args.max_interleavings,
            "maxTraces": args.max_traces,
            "jobs": args.jobs,
            "format": args.format,
        },
    )
    if args.format == "json":
        print(json.dumps(report_to_dict(report), indent=2))
    else:
        print(render_text(report), end="")
    return _VERDICT_EXIT[report.aggregate_verdict]


def run_validate(args) -> int:
    status = 0
    try:
        ruleset, diagnostics = load_ruleset(args.rules)
    except NormCheckError as exc:
        return _fail(str(exc))
    _print_diagnostics(diagnostics)
    if ruleset is None:
        status = EXIT_INPUT_ERROR
    graph = None
    if args.bpmn:
        try:
            graph = parse_bpmn(_read(args.bpmn))
        except NormCheckError as exc:
            print(f"error: {exc}", file=sys.stderr)
            status = EXIT_INPUT_ERROR
    if args.annotations:
        if graph is None or ruleset is None:
            print(
                "error: --annotations requires a valid --bpmn and rule files",
                file=sys.stderr,
            )
            status = EXIT_INPUT_ERROR
        else:
            try:
                parse_annotations(_read(args.annotations), graph, ruleset.vocabulary)
            except NormCheckError as exc:
                print(f"error: {exc}", file=sys.stderr)
                status = EXIT_INPUT_ERROR
    if status == 0:
        print("ok")
    return status


def run_traces(args) -> int:
    try:
        graph = parse_bpmn(_read(args.bpmn))
        cfg = _enumeration_config(args)
        if args.list:
            traces = enumerate_traces(graph, cfg)
            print(len(traces))
            for trace in traces:
                names = " -> ".join(graph.task_name(t) for t in trace.steps)
                print(f"  [{trace.origin.describe()}] {names or '(no tasks)'}")
        else:
            print(count_traces(graph, cfg))
    except ExplosionLimit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except NormCheckError as exc:
        return _fail(str(exc))
    return 0


def run_explain(args) -> int:
    try:
        ruleset, graph, annotations = _load_inputs(args)
        cfg = _enumeration_config(args)
        traces = enumerate_traces(graph, cfg)
        if not 0 <= args.trace < len(traces):
            return _fail(f"trace index {args.trace} out of range (0..{len(traces) - 1})")
        trace = traces[args.trace]
        log = explain(trace, annotations, ruleset, args.step)
    except ExplosionLimit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except NormCheckError as exc:
        return _fail(str(exc))
    print(f"trace {args.trace}: " + " -> ".join(graph.task_name(t) for t in trace.steps))
    print(log.render(graph.task_name))
    return 0


def _add_bounds(parser: argparse.ArgumentParser):
    parser.add_argument("--max-loop", type=int, default=2, metavar="N")
    parser.add_argument("--max-interleavings", type=int, default=1000, metavar="N")
    parser.add_argument("--max-traces", type=int, default=10000, metavar="N")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="normcheck", description="Check BPMN processes against norm rules.")
    sub = parser.add_subparsers(dest="command", required=True)

    check = sub.add_parser("check", help="check a process against rule files")
    check.add_argument("--bpmn", required=True)
    check.add_argument("--rules", action="append", required=True, metavar="FILE")
    check.add_argument("--annotations", default=None)
    check.add_argument("--format", choices=("text", "json"), default="text")
    check.add_argument("--jobs", type=int, default=1)
    _add_bounds(check)
    check.set_defaults(func=run_check)

    validate = sub.add_parser("validate", help="validate rule and process files")
    validate.add_argument("--rules", action="append", required=True, metavar="FILE")
    validate.add_argument("--bpmn", default=None)
    validate.add_argument("--annotations", default=None)
    validate.set_defaults(func=run_validate)

    traces = sub.add_parser("traces", help="count or list execution traces")
    traces.add_argument("--bpmn", required=True)
    traces.add_argument("--list", action="store_true")
    _add_bounds(traces)
    traces.set_defaults(func=run_traces)

    explain_cmd = sub.add_parser("explain", help="show derivation state at one step")
    explain_cmd.add_argument("--bpmn", required=True)
    explain_cmd.add_argument("--rules", action="append", required=True, metavar="FILE")
    explain_cmd.add_argument("--annotations", default=None)
    explain_cmd.add_argument("--trace", type=int, required=True)
    explain_cmd.add_argument("--step", type=int, required=True)
    _add_bounds(explain_cmd)
    explain_cmd.set_defaults(func=run_explain)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for attr in ("max_loop", "max_interleavings", "max_traces", "jobs"):
        if hasattr(args, attr) and getattr(args, attr) < 1:
            return _fail(f"--{attr.replace('_', '-')} must be >= 1")
    paths = [getattr(args, "bpmn", None), getattr(args, "annotations", None)]
    paths.extend(getattr(args, "rules", None) or [])
    for path in paths:
        if not path:
            continue
        try:
            with open(path, "r", encoding="utf-8"):
                pass
        except OSError as exc:
            return _fail(str(exc))
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
