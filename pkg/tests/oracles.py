"""Independent reference implementations used to cross-check the engine.

Nothing here shares code paths with the checked modules beyond the
primitive data types (and `derive` inside the lifecycle oracle, which is
itself checked against `derive_oracle`):

* ``derive_oracle`` decides each candidate conclusion by enumerating
  defender subsets instead of the direct for-all/exists test.
* The trace expression algebra (`TaskE`/`Seq`/`Xor`/`And`/`Loop`)
  generates expected trace sets compositionally (products, unions,
  order-preserving merges, bounded unrolling) and compiles the same
  expression to a ProcessGraph for the enumerator.
* ``check_trace_oracle`` recomputes the whole state history from
  scratch and evaluates obligation windows as intervals rather than by
  stepping events.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field

from normcheck.bpmn import AnnotationMap, Node, NodeKind, ProcessGraph
from normcheck.ddl import (
    AMBIGUOUS,
    DEFEATED_BY_SUPERIORITY,
    DeonticElement,
    Literal,
    Modality,
    Rule,
    RuleSet,
    conflicts,
    derive,
)
from normcheck.traces import Trace

# ---------------------------------------------------------------------------
# Brute-force derivation


def derive_oracle(facts, ruleset: RuleSet):
    """(effects set, {blocked element: reason}) via defender-subset search."""
    fact_set = set(facts)
    applicable = [r for r in ruleset.rules if all(a in fact_set for a in r.antecedent)]
    superior = set(ruleset.superiorities)

    def covers(team, attackers) -> bool:
        return all(
            any(
                conflicts(t.head, s.head) and (t.label, s.label) in superior
                for t in team
            )
            for s in attackers
        )

    effects = set()
    blocked = {}
    for candidate in {r.head for r in applicable}:
        attackers = [s for s in applicable if conflicts(s.head, candidate)]
        wins = False
        for size in range(len(applicable) + 1):
            for team in itertools.combinations(applicable, size):
                if covers(team, attackers):
                    wins = True
                    break
            if wins:
                break
        if wins:
            effects.add(candidate)
            continue
        undefeated = [
            s
            for s in attackers
            if not any(
                conflicts(t.head, s.head) and (t.label, s.label) in superior
                for t in applicable
            )
        ]
        supporters = [r for r in applicable if r.head == candidate]
        reason = AMBIGUOUS
        if any(
            (s.label, r.label) in superior for s in undefeated for r in supporters
        ):
            reason = DEFEATED_BY_SUPERIORITY
        blocked[candidate] = reason
    return effects, blocked


def random_ruleset(rng: random.Random, max_rules=8, max_atoms=5) -> RuleSet:
    atoms = [chr(ord("a") + i) for i in range(rng.randint(1, max_atoms))]
    modalities = list(Modality)
    rules = []
    for index in range(rng.randint(0, max_rules)):
        antecedent = tuple(
            Literal(rng.choice(atoms), rng.random() < 0.5)
            for _ in range(rng.randint(0, 2))
        )
        length = rng.randint(1, 3)
        chain = []
        for position in range(length):
            pool = modalities if length == 1 else [m for m in modalities if m is not Modality.P]
            chain.append(
                DeonticElement(rng.choice(pool), Literal(rng.choice(atoms), rng.random() < 0.5))
            )
        rules.append(Rule(f"r{index}", f"objective {index}", antecedent, tuple(chain)))
    labels = [r.label for r in rules]
    order = labels[:]
    rng.shuffle(order)  # superiority respects a random topological order
    pairs = []
    for i in range(len(order)):
        for j in range(i + 1, len(order)):
            if rng.random() < 0.25:
                pairs.append((order[i], order[j]))
    return RuleSet({a: "" for a in atoms}, tuple(rules), tuple(pairs))


def random_facts(rng: random.Random, ruleset: RuleSet) -> frozenset[Literal]:
    facts = []
    for atom in ruleset.vocabulary:
        roll = rng.random()
        if roll < 0.35:
            facts.append(Literal(atom))
        elif roll < 0.5:
            facts.append(Literal(atom, True))
    return frozenset(facts)


# ---------------------------------------------------------------------------
# Trace expression algebra


@dataclass(frozen=True)
class TaskE:
    name: str


@dataclass(frozen=True)
class Seq:
    parts: tuple = ()


@dataclass(frozen=True)
class Xor:
    branches: tuple = ()


@dataclass(frozen=True)
class And:
    branches: tuple = ()


@dataclass(frozen=True)
class Loop:
    body: object = None  # runs 1..max_loop times (exit tested after the body)


def interleavings(sequences):
    sequences = [s for s in sequences if s]
    if not sequences:
        return [()]
    merged = []
    for index, seq in enumerate(sequences):
        rest = sequences[:index] + [seq[1:]] + sequences[index + 1:]
        for tail in interleavings(rest):
            merged.append((seq[0],) + tail)
    return merged


def expected_traces(expr, max_loop: int) -> list[tuple[str, ...]]:
    """Task sequences the enumerator must produce, as a multiset."""
    if isinstance(expr, TaskE):
        return [(expr.name,)]
    if isinstance(expr, Seq):
        combos = [()]
        for part in expr.parts:
            combos = [
                prefix + tail
                for prefix in combos
                for tail in expected_traces(part, max_loop)
            ]
        return combos
    if isinstance(expr, Xor):
        out = []
        for branch in expr.branches:
            out.extend(expected_traces(branch, max_loop))
        return out
    if isinstance(expr, And):
        per_branch = [expected_traces(b, max_loop) for b in expr.branches]
        out = []
        for combo in itertools.product(*per_branch):
            out.extend(interleavings(list(combo)))
        return out
    if isinstance(expr, Loop):
        body = expected_traces(expr.body, max_loop)
        out = []
        for count in range(1, max_loop + 1):
            for combo in itertools.product(body, repeat=count):
                out.append(tuple(itertools.chain.from_iterable(combo)))
        return out
    raise TypeError(expr)


class _Builder:
    def __init__(self):
        self.nodes: dict[str, Node] = {}
        self.edges: list[tuple[str, str]] = []
        self.counter = itertools.count()

    def gateway(self, kind: NodeKind) -> str:
        node_id = f"g{next(self.counter)}"
        self.nodes[node_id] = Node(kind)
        return node_id

    def task(self, name: str) -> str:
        self.nodes[name] = Node(NodeKind.TASK, name)
        return name

    def edge(self, source: str, target: str):
        self.edges.append((source, target))

    def emit(self, expr) -> tuple[str, str] | None:
        """(entry node, exit node) of the compiled fragment; None if empty."""
        if isinstance(expr, TaskE):
            node = self.task(expr.name)
            return node, node
        if isinstance(expr, Seq):
            fragments = [f for f in (self.emit(p) for p in expr.parts) if f]
            if not fragments:
                return None
            for (_, left), (right, _) in zip(fragments, fragments[1:]):
                self.edge(left, right)
            return fragments[0][0], fragments[-1][1]
        if isinstance(expr, Xor):
            split = self.gateway(NodeKind.XOR_SPLIT)
            join = self.gateway(NodeKind.XOR_JOIN)
            for branch in expr.branches:
                fragment = self.emit(branch)
                if fragment is None:
                    self.edge(split, join)
                else:
                    self.edge(split, fragment[0])
                    self.edge(fragment[1], join)
            return split, join
        if isinstance(expr, And):
            fork = self.gateway(NodeKind.AND_SPLIT)
            join = self.gateway(NodeKind.AND_JOIN)
            for branch in expr.branches:
                fragment = self.emit(branch)
                if fragment is None:
                    self.edge(fork, join)
                else:
                    self.edge(fork, fragment[0])
                    self.edge(fragment[1], join)
            return fork, join
        if isinstance(expr, Loop):
            entry = self.gateway(NodeKind.XOR_JOIN)
            exit_ = self.gateway(NodeKind.XOR_SPLIT)
            fragment = self.emit(expr.body)
            assert fragment is not None, "loop body must not be empty"
            self.edge(entry, fragment[0])
            self.edge(fragment[1], exit_)
            self.edge(exit_, entry)  # back edge
            return entry, exit_
        raise TypeError(expr)


def compile_expr(expr, process_id: str = "generated") -> ProcessGraph:
    builder = _Builder()
    builder.nodes["start"] = Node(NodeKind.START)
    builder.nodes["end"] = Node(NodeKind.END)
    fragment = builder.emit(expr)
    if fragment is None:
        builder.edge("start", "end")
    else:
        builder.edge("start", fragment[0])
        builder.edge(fragment[1], "end")
    return ProcessGraph(process_id, builder.nodes, tuple(builder.edges))


def replay(graph: ProcessGraph, trace: Trace, max_loop: int) -> bool:
    """Check a trace is a legal walk: force the recorded steps and choices."""
    from collections import Counter

    marking = Counter()
    used = Counter()
    start_edge = (graph.start_id, graph.outgoing(graph.start_id)[0])
    marking[start_edge] = 1
    used[start_edge] = 1
    steps = list(trace.steps)
    choices = list(trace.origin.choices)

    def in_edges(node):
        return sorted((f, node) for f in graph.incoming(node))

    for _ in range(10000):
        fired = False
        for node_id in sorted(graph.nodes):
            kind = graph.nodes[node_id].kind
            ins = [e for e in in_edges(node_id) if marking[e] > 0]
            if not ins or kind is NodeKind.TASK:
                continue
            if kind is NodeKind.END:
                marking[ins[0]] -= 1
                return not steps and not choices and not +marking
            if kind is NodeKind.AND_JOIN and any(
                marking[e] == 0 for e in in_edges(node_id)
            ):
                continue
            if kind is NodeKind.AND_JOIN:
                for e in in_edges(node_id):
                    marking[e] -= 1
                targets = [(node_id, t) for t in graph.outgoing(node_id)]
            elif kind is NodeKind.AND_SPLIT:
                marking[ins[0]] -= 1
                targets = [(node_id, t) for t in graph.outgoing(node_id)]
            elif kind is NodeKind.XOR_SPLIT:
                if not choices:
                    return False
                choice = choices.pop(0)
                source, _, target = choice.partition("->")
                if source != node_id or target not in graph.outgoing(node_id):
                    return False
                marking[ins[0]] -= 1
                targets = [(node_id, target)]
            else:  # XOR_JOIN, START
                marking[ins[0]] -= 1
                targets = [(node_id, graph.outgoing(node_id)[0])]
            for edge in targets:
                marking[edge] += 1
                used[edge] += 1
                if used[edge] > max_loop:
                    return False
            fired = True
            break
        if fired:
            continue
        if not steps:
            return False
        task = steps.pop(0)
        ins = [e for e in in_edges(task) if marking[e] > 0]
        if graph.nodes.get(task, Node(NodeKind.END)).kind is not NodeKind.TASK or not ins:
            return False
        marking[ins[0]] -= 1
        edge = (task, graph.outgoing(task)[0])
        marking[edge] += 1
        used[edge] += 1
        if used[edge] > max_loop:
            return False
    return False


# ---------------------------------------------------------------------------
# From-scratch obligation lifecycle (interval evaluation)


@dataclass
class _OracleInstance:
    rule: str
    chain_index: int
    element: DeonticElement
    entered_at: int
    status: str = "InForce"
    violation_at: int | None = None
    ever_satisfied: bool = False
    compensation: "_OracleInstance | None" = None

    @property
    def violated(self) -> bool:
        return self.status in ("Violated", "FulfilledLate", "Compensated")


def check_trace_oracle(trace: Trace, annotations: AnnotationMap, ruleset: RuleSet):
    """Recompute verdict, violations, and warning codes for one trace.

    Returns (verdict string, {(rule, chain, element str, violation step,
    compensated)}, sorted warning code list).
    """
    steps = trace.steps
    count = len(steps)
    facts_history: list[frozenset[Literal]] = []
    asserted_history: list[set[Literal]] = []
    state: dict[str, Literal] = {}
    for task in steps:
        effective: dict[str, Literal] = {}
        for lit in annotations.by_task.get(task, ()):
            effective[lit.atom] = lit
        for lit in effective.values():
            state[lit.atom] = lit
        asserted_history.append(set(effective.values()))
        facts_history.append(frozenset(state.values()))
    held_up_to: list[set[Literal]] = []
    everything: set[Literal] = set()
    for facts in facts_history:
        everything |= facts
        held_up_to.append(set(everything))

    conclusions = [derive(facts, ruleset) for facts in facts_history]
    final_facts = facts_history[-1] if count else frozenset()
    rules = {r.label: r for r in ruleset.rules}
    instances: list[_OracleInstance] = []
    warning_codes: list[str] = []

    seen_ambiguous: set[DeonticElement] = set()
    for concl in conclusions:
        for entry in concl.blocked:
            if entry.reason == AMBIGUOUS and entry.element not in seen_ambiguous:
                seen_ambiguous.add(entry.element)
                warning_codes.append("ambiguous-conclusion")

    def held_at(content: Literal, index: int) -> bool:
        return content in facts_history[index]

    def fulfilled_step(element: DeonticElement, start: int, stop: int) -> int | None:
        """First step in [start, stop] fulfilling an achievement duty."""
        if element.modality.is_preemptive and element.content in held_up_to[start]:
            return start
        for index in range(start, stop + 1):
            if held_at(element.content, index):
                return index
        return None

    def spawn_compensation(parent: _OracleInstance):
        rule = rules.get(parent.rule)
        if rule is None or parent.chain_index >= len(rule.consequent):
            return
        element = rule.consequent[parent.chain_index]
        child = _OracleInstance(parent.rule, parent.chain_index + 1, element, -1)
        parent.compensation = child
        instances.append(child)
        at = parent.violation_at
        if at is None:  # violated at trace end
            child.entered_at = count
            if element.modality.is_maintenance:
                child.ever_satisfied = count > 0 and element.content in final_facts
            else:
                ever = count > 0 and element.content in held_up_to[count - 1]
                now = count > 0 and element.content in final_facts
                if now or (element.modality.is_preemptive and ever):
                    child.status = "Fulfilled"
                else:
                    child.status = "Violated"
                    spawn_compensation(child)
            return
        child.entered_at = at
        if element.modality.is_maintenance:
            breach = next(
                (
                    i
                    for i in range(at + 1, count)
                    if element.content.complement() in asserted_history[i]
                ),
                None,
            )
            child.ever_satisfied = any(held_at(element.content, i) for i in range(at, count))
            if breach is not None:
                child.status = "Violated"
                child.violation_at = breach
                spawn_compensation(child)
            return
        done = fulfilled_step(element, at, count - 1)
        if done is not None:
            child.status = "Fulfilled"
        else:
            child.status = "Violated"
            child.violation_at = None
            spawn_compensation(child)

    # Chain-head instances: one per maximal run of each derived obligation.
    elements = []
    for concl in conclusions:
        for element in concl.effects:
            if element.modality.is_obligation and element not in elements:
                elements.append(element)
    for element in elements:
        in_effect = [element in c.effects for c in conclusions]
        index = 0
        while index < count:
            if not in_effect[index]:
                index += 1
                continue
            start = index
            while index < count and in_effect[index]:
                index += 1
            stop = index - 1  # inclusive
            firing = conclusions[start].proofs[element].firing_rule
            inst = _OracleInstance(firing, 1, element, start)
            instances.append(inst)
            if element.modality.is_maintenance:
                inst.ever_satisfied = any(
                    held_at(element.content, i) for i in range(start, stop + 1)
                )
                breach = next(
                    (
                        i
                        for i in range(start, stop + 1)
                        if element.content.complement() in asserted_history[i]
                    ),
                    None,
                )
                if breach is not None:
                    inst.status = "Violated"
                    inst.violation_at = breach
                    spawn_compensation(inst)
                elif stop < count - 1:
                    inst.status = "TerminatedOverridden"
            else:
                done = fulfilled_step(element, start, stop)
                if done is not None:
                    inst.status = "Fulfilled"
                elif stop < count - 1:
                    inst.status = "Violated"
                    inst.violation_at = stop + 1
                    if element.modality.is_perdurant and any(
                        held_at(element.content, i) for i in range(stop + 1, count)
                    ):
                        inst.status = "FulfilledLate"
                    spawn_compensation(inst)
                else:
                    inst.status = "Violated"
                    inst.violation_at = None
                    spawn_compensation(inst)

    def discharged(inst: _OracleInstance) -> bool:
        if inst.status in ("Fulfilled", "TerminatedOverridden"):
            return True
        return inst.status == "InForce" and inst.element.modality.is_maintenance

    def compensated(inst: _OracleInstance) -> bool:
        child = inst.compensation
        if child is None:
            return False
        return discharged(child) or (child.violated and compensated(child))

    for inst in instances:
        if inst.violated and compensated(inst):
            inst.status = "Compensated"

    violations = set()
    for inst in instances:
        if inst.violated:
            is_compensated = inst.status == "Compensated"
            violations.add(
                (inst.rule, inst.chain_index, str(inst.element), inst.violation_at, is_compensated)
            )
            if is_compensated:
                warning_codes.append("compensated-violation")

    for inst in instances:
        if (
            inst.status == "InForce"
            and inst.element.modality.is_maintenance
            and not inst.element.content.negated
            and not inst.ever_satisfied
        ):
            # Chain heads are in force at the end only if their run
            # reached the last step; compensations always stay open.
            warning_codes.append("maintenance-never-satisfied")

    if any(not comp for (*_, comp) in violations):
        verdict = "NonCompliant"
    elif warning_codes:
        verdict = "CompliantWithWarnings"
    else:
        verdict = "Compliant"
    return verdict, violations, sorted(warning_codes)


def random_trace_inputs(rng: random.Random, ruleset: RuleSet):
    """A synthetic trace plus annotations over the ruleset vocabulary."""
    length = rng.randint(0, 6)
    steps = tuple(f"t{i}" for i in range(length))
    atoms = list(ruleset.vocabulary)
    by_task = {}
    for task in steps:
        entries = tuple(
            Literal(rng.choice(atoms), rng.random() < 0.5)
            for _ in range(rng.randint(0, 2))
        )
        if entries:
            by_task[task] = entries
    return Trace(steps), AnnotationMap("synthetic", by_task)
