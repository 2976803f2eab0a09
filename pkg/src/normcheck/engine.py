"""Obligation lifecycle execution over traces and verdict aggregation.

At every task step the asserted literals update a persistent fact set
(asserting a literal retracts its complement), the deontic conclusions
are re-derived, and obligation instances are tracked:

* An obligation-mode conclusion with no open instance opens one.
  Achievement obligations are immediately fulfilled when their content
  already holds (preemptive modes also honor facts from earlier steps).
* An instance whose conclusion drops out of the derived effects closes:
  a maintenance or fulfilled instance is terminated as overridden, an
  unfulfilled achievement instance is violated, and perdurant modes stay
  watched for late fulfillment.
* A maintenance instance is violated when its complement is asserted
  while the instance is in force; a pre-existing state of the
  complement does not count as a breach, the prohibited act has to
  happen under the obligation.
* Violations activate the next element of the rule's compensation
  chain, which stays in force until fulfilled, violated, or trace end.
* At trace end, still-unfulfilled achievement instances are violated.

A trace is non-compliant iff a violation remains uncompensated.
Warnings make an otherwise compliant trace "compliant with warnings":
compensated violations, unresolved rule conflicts (ambiguity), and
maintenance obligations with positive content that reach the end of the
trace without their content ever holding.  Aggregation over all traces
yields Green (every trace cleanly compliant), Red (some trace
non-compliant), or Orange (anything in between).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

from .bpmn import AnnotationMap
from .ddl import (
    AMBIGUOUS,
    ConclusionSet,
    DeonticElement,
    Literal,
    RuleSet,
    derive,
)
from .errors import NormCheckError
from .traces import Trace


class EmptyResults(NormCheckError):
    """Aggregation needs at least one trace result."""


class IndexOutOfRange(NormCheckError):
    """A step or trace selector is out of bounds."""


class InstanceStatus(Enum):
    IN_FORCE = "InForce"
    FULFILLED = "Fulfilled"
    FULFILLED_LATE = "FulfilledLate"
    VIOLATED = "Violated"
    COMPENSATED = "Compensated"
    TERMINATED_OVERRIDDEN = "TerminatedOverridden"


@dataclass
class ObligationInstance:
    """One activation of an obligation, tracked across a trace.

    ``chain_index`` is 1 for instances opened by derived conclusions and
    grows along the compensation chain.  ``violation_at`` is the step
    index of the breach, or None when the violation happened at trace
    end.
    """

    source_rule: str
    chain_index: int
    element: DeonticElement
    entered_at: int
    status: InstanceStatus = InstanceStatus.IN_FORCE
    violation_at: int | None = None
    fulfilled_at: int | None = None

    @property
    def violated(self) -> bool:
        return self.status in (
            InstanceStatus.VIOLATED,
            InstanceStatus.FULFILLED_LATE,
            InstanceStatus.COMPENSATED,
        )


class TraceVerdict(Enum):
    COMPLIANT = "Compliant"
    COMPLIANT_WITH_WARNINGS = "CompliantWithWarnings"
    NON_COMPLIANT = "NonCompliant"


class AggregateVerdict(Enum):
    GREEN = "Green"
    ORANGE = "Orange"
    RED = "Red"


@dataclass(frozen=True)
class WarningRecord:
    code: str
    message: str
    step: int | None = None


@dataclass(frozen=True)
class Violation:
    instance: ObligationInstance
    compensated: bool


@dataclass(frozen=True)
class TraceResult:
    trace: Trace
    instances: tuple[ObligationInstance, ...]
    violations: tuple[Violation, ...]
    warnings: tuple[WarningRecord, ...]
    verdict: TraceVerdict


@dataclass(frozen=True)
class StateSnapshot:
    position: int
    facts: frozenset[Literal]
    active: tuple[ObligationInstance, ...]
    conclusions: ConclusionSet


@dataclass(frozen=True)
class ProofLog:
    """Printable derivation state at one step of one trace."""

    task: str
    snapshot: StateSnapshot

    def render(self, task_name: Callable[[str], str] = lambda t: t) -> str:
        snap = self.snapshot
        lines = [f"step {snap.position}: {task_name(self.task)}"]
        facts = ", ".join(str(l) for l in sorted(snap.facts)) or "(none)"
        lines.append(f"  facts: {facts}")
        lines.append("  in effect:")
        if not snap.conclusions.effects:
            lines.append("    (none)")
        for element in sorted(snap.conclusions.effects, key=DeonticElement.sort_key):
            proof = snap.conclusions.proofs[element]
            lines.append(f"    {element}  (rule {proof.firing_rule})")
            for attack in proof.attackers:
                detail = f" by {attack.defeater}" if attack.defeater else ""
                lines.append(f"      attacker {attack.rule}: {attack.outcome}{detail}")
        if snap.conclusions.blocked:
            lines.append("  blocked:")
            for entry in snap.conclusions.blocked:
                if entry.superior:
                    reason = f"defeated-by-superiority({entry.superior} > {entry.inferior})"
                else:
                    reason = entry.reason
                lines.append(f"    {entry.element}  {reason}")
        lines.append("  obligations:")
        if not snap.active:
            lines.append("    (none)")
        for inst in snap.active:
            lines.append(
                f"    {inst.element} from {inst.source_rule}#{inst.chain_index}"
                f" since step {inst.entered_at}: {inst.status.value}"
            )
        return "\n".join(lines)


@dataclass(frozen=True)
class Explanation:
    rule: str
    control_objective: str
    task: str
    origins: tuple[str, ...] = ()


@dataclass(frozen=True)
class ComplianceReport:
    process_id: str
    rule_files: tuple[str, ...]
    config: Mapping[str, object]
    trace_results: tuple[TraceResult, ...]
    aggregate_verdict: AggregateVerdict
    explanations: tuple[Explanation, ...]
    task_names: Mapping[str, str]

    def violation_task(self, result: TraceResult, violation: Violation) -> str:
        """Task display name where a violation happened."""
        at = violation.instance.violation_at
        if at is None:
            return "(trace end)"
        step_id = result.trace.steps[at]
        return self.task_names.get(step_id, step_id)


@dataclass
class _Tracked:
    """Checker-internal bookkeeping around one instance."""

    instance: ObligationInstance
    open: bool = True  # backing conclusion (or compensation duty) still live
    watched: bool = False  # perdurant, violated, awaiting late fulfillment
    ever_satisfied: bool = False  # maintenance: content held at some step
    compensation: "_Tracked | None" = None  # successor spawned by our violation


class _Checker:
    def __init__(self, trace: Trace, annotations: AnnotationMap, ruleset: RuleSet):
        self.trace = trace
        self.annotations = annotations
        self.ruleset = ruleset
        self.rules_by_label = {r.label: r for r in ruleset.rules}
        self.facts: dict[str, Literal] = {}
        self.ever_held: set[Literal] = set()
        self.tracked: list[_Tracked] = []
        self.warnings: list[WarningRecord] = []
        self.ambiguous_seen: set[DeonticElement] = set()
        self.conclusions = ConclusionSet(frozenset())

    # -- step machinery -------------------------------------------------

    def current_facts(self) -> frozenset[Literal]:
        return frozenset(self.facts.values())

    def step(self, index: int):
        task = self.trace.steps[index]
        asserted = self.annotations.effective(task)
        for lit in asserted:
            self.facts[lit.atom] = lit
        facts = self.current_facts()
        self.ever_held |= facts
        asserted_set = set(asserted)

        self.conclusions = derive(facts, self.ruleset)
        effects = self.conclusions.effects
        for entry in self.conclusions.blocked:
            if entry.reason == AMBIGUOUS and entry.element not in self.ambiguous_seen:
                self.ambiguous_seen.add(entry.element)
                self.warnings.append(
                    WarningRecord(
                        "ambiguous-conclusion",
                        f"conflict over {entry.element} is not resolved by any superiority",
                        index,
                    )
                )

        # Open instances for newly derived obligations.
        open_elements = {
            t.instance.element for t in self.tracked if t.open and t.instance.chain_index == 1
        }
        for element in sorted(effects, key=DeonticElement.sort_key):
            if not element.modality.is_obligation or element in open_elements:
                continue
            rule_label = self.conclusions.proofs[element].firing_rule
            self._open_instance(rule_label, 1, element, index, facts)

        # Close instances whose conclusion is gone (defeated or antecedent
        # withdrawn).  Compensation instances have no backing conclusion
        # and are exempt.
        for t in list(self.tracked):
            if not t.open or t.instance.chain_index > 1:
                continue
            if t.instance.element in effects:
                continue
            t.open = False
            inst = t.instance
            if inst.status is InstanceStatus.IN_FORCE:
                if inst.element.modality.is_maintenance:
                    inst.status = InstanceStatus.TERMINATED_OVERRIDDEN
                else:
                    self._violate(t, index, facts)

        # Maintenance breach: the complement is asserted while in force.
        # A compensation entering force at this very step is monitored
        # from the next step on.
        for t in list(self.tracked):
            inst = t.instance
            if not t.open or inst.status is not InstanceStatus.IN_FORCE:
                continue
            if not inst.element.modality.is_maintenance:
                continue
            if inst.chain_index > 1 and inst.entered_at == index:
                continue
            if inst.element.content.complement() in asserted_set:
                self._violate(t, index, facts)

        # Fulfillment checks.
        for t in self.tracked:
            inst = t.instance
            if t.watched and inst.element.content in facts:
                inst.status = InstanceStatus.FULFILLED_LATE
                inst.fulfilled_at = index
                t.watched = False
                continue
            if not t.open or inst.status is not InstanceStatus.IN_FORCE:
                continue
            if inst.element.content in facts:
                if inst.element.modality.is_maintenance:
                    t.ever_satisfied = True
                else:
                    inst.status = InstanceStatus.FULFILLED
                    inst.fulfilled_at = index

    def _open_instance(
        self,
        rule_label: str,
        chain_index: int,
        element: DeonticElement,
        index: int | None,
        facts: frozenset[Literal],
    ) -> _Tracked:
        entered = index if index is not None else len(self.trace.steps)
        inst = ObligationInstance(rule_label, chain_index, element, entered)
        t = _Tracked(inst)
        self.tracked.append(t)
        if element.modality.is_achievement:
            held_now = element.content in facts
            held_before = element.content in self.ever_held
            if held_now or (element.modality.is_preemptive and held_before):
                inst.status = InstanceStatus.FULFILLED
                inst.fulfilled_at = index
        elif element.modality.is_maintenance and element.content in facts:
            t.ever_satisfied = True
        return t

    def _violate(self, t: _Tracked, index: int | None, facts: frozenset[Literal]):
        inst = t.instance
        inst.status = InstanceStatus.VIOLATED
        inst.violation_at = index
        if inst.element.modality.is_perdurant and index is not None:
            t.watched = True
        rule = self.rules_by_label.get(inst.source_rule)
        if rule is not None and inst.chain_index < len(rule.consequent):
            element = rule.consequent[inst.chain_index]
            comp = self._open_instance(
                inst.source_rule, inst.chain_index + 1, element, index, facts
            )
            t.compensation = comp
            if index is None:
                self._settle_at_end(comp, facts)

    def _settle_at_end(self, t: _Tracked, facts: frozenset[Literal]):
        """End-of-trace evaluation for an instance spawned at the end."""
        inst = t.instance
        if inst.status is not InstanceStatus.IN_FORCE:
            return
        if inst.element.modality.is_maintenance:
            if inst.element.content in facts:
                t.ever_satisfied = True
            return  # never breached; stays in force to the end
        self._violate(t, None, facts)

    # -- finalization ----------------------------------------------------

    def finalize(self) -> TraceResult:
        facts = self.current_facts()
        for t in list(self.tracked):
            inst = t.instance
            if inst.status is InstanceStatus.IN_FORCE and inst.element.modality.is_achievement:
                self._violate(t, None, facts)

        self._resolve_compensation()

        for t in self.tracked:
            inst = t.instance
            if (
                t.open
                and inst.status is InstanceStatus.IN_FORCE
                and inst.element.modality.is_maintenance
                and not inst.element.content.negated
                and not t.ever_satisfied
            ):
                self.warnings.append(
                    WarningRecord(
                        "maintenance-never-satisfied",
                        f"{inst.element} (rule {inst.source_rule}) was in force but "
                        "its content never held",
                        inst.entered_at if inst.entered_at < len(self.trace.steps) else None,
                    )
                )

        violations = []
        for t in self.tracked:
            inst = t.instance
            if inst.violated:
                compensated = inst.status is InstanceStatus.COMPENSATED
                violations.append(Violation(inst, compensated))
                if compensated:
                    self.warnings.append(
                        WarningRecord(
                            "compensated-violation",
                            f"violation of {inst.element} (rule {inst.source_rule}) "
                            "was compensated",
                            inst.violation_at,
                        )
                    )

        if any(not v.compensated for v in violations):
            verdict = TraceVerdict.NON_COMPLIANT
        elif self.warnings:
            verdict = TraceVerdict.COMPLIANT_WITH_WARNINGS
        else:
            verdict = TraceVerdict.COMPLIANT
        return TraceResult(
            self.trace,
            tuple(t.instance for t in self.tracked),
            tuple(violations),
            tuple(self.warnings),
            verdict,
        )

    def _resolve_compensation(self):
        """Mark violated instances compensated when their spawned chain
        successor discharged without an outstanding violation of its own."""

        def discharged(t: _Tracked) -> bool:
            inst = t.instance
            if inst.status in (InstanceStatus.FULFILLED, InstanceStatus.TERMINATED_OVERRIDDEN):
                return True
            if inst.status is InstanceStatus.IN_FORCE:
                return inst.element.modality.is_maintenance
            return False

        def compensated(t: _Tracked) -> bool:
            successor = t.compensation
            if successor is None:
                return False
            if discharged(successor):
                return True
            return successor.instance.violated and compensated(successor)

        for t in self.tracked:
            if t.instance.violated and compensated(t):
                t.instance.status = InstanceStatus.COMPENSATED

    def snapshot(self, position: int) -> StateSnapshot:
        active = tuple(
            t.instance
            for t in self.tracked
            if t.open or t.watched or t.instance.status is InstanceStatus.IN_FORCE
        )
        return StateSnapshot(position, self.current_facts(), active, self.conclusions)


def check_trace(trace: Trace, annotations: AnnotationMap, ruleset: RuleSet) -> TraceResult:
    """Run the obligation lifecycle over one trace."""
    checker = _Checker(trace, annotations, ruleset)
    for index in range(len(trace.steps)):
        checker.step(index)
    return checker.finalize()


def explain(
    trace: Trace, annotations: AnnotationMap, ruleset: RuleSet, step: int
) -> ProofLog:
    """Derivation state after a given step, with full proof records."""
    if not 0 <= step < len(trace.steps):
        raise IndexOutOfRange(f"step {step} out of range for a {len(trace.steps)}-step trace")
    checker = _Checker(trace, annotations, ruleset)
    for index in range(step + 1):
        checker.step(index)
    return ProofLog(trace.steps[step], checker.snapshot(step))


def aggregate(
    results: Sequence[TraceResult],
    *,
    ruleset: RuleSet,
    task_names: Mapping[str, str] | None = None,
    process_id: str = "",
    rule_files: Iterable[str] = (),
    config: Mapping[str, object] | None = None,
) -> ComplianceReport:
    """Combine per-trace results into the overall report and verdict.

    Red iff some trace is non-compliant, Green iff every trace is
    compliant with zero warnings, Orange otherwise.  Explanations list
    one entry per distinct (rule, task) violation, carrying the rule's
    control objective and the origin paths of the affected traces.
    """
    results = list(results)
    if not results:
        raise EmptyResults("no trace results to aggregate")

    if any(r.verdict is TraceVerdict.NON_COMPLIANT for r in results):
        verdict = AggregateVerdict.RED
    elif all(r.verdict is TraceVerdict.COMPLIANT for r in results) and not any(
        r.warnings for r in results
    ):
        verdict = AggregateVerdict.GREEN
    else:
        verdict = AggregateVerdict.ORANGE

    names = task_names or {}
    rules = {r.label: r for r in ruleset.rules}
    seen: dict[tuple[str, str], list[str]] = {}
    for result in results:
        for violation in result.violations:
            inst = violation.instance
            if inst.violation_at is None:
                task = "(trace end)"
            else:
                step_id = result.trace.steps[inst.violation_at]
                task = names.get(step_id, step_id)
            origins = seen.setdefault((inst.source_rule, task), [])
            origin = result.trace.origin.describe()
            if origin not in origins:
                origins.append(origin)

    explanations = tuple(
        Explanation(
            rule,
            rules[rule].control_objective if rule in rules else "",
            task,
            tuple(origins),
        )
        for (rule, task), origins in seen.items()
    )
    return ComplianceReport(
        process_id=process_id,
        rule_files=tuple(rule_files),
        config=dict(config or {}),
        trace_results=tuple(results),
        aggregate_verdict=verdict,
        explanations=explanations,
        task_names=dict(names),
    )
