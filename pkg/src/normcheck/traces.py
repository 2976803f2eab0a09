"""Exhaustive enumeration of process execution traces.

A trace is one fully resolved run of the process: every exclusive
gateway choice is fixed, every cycle is unrolled up to a bound, and
parallel branches are expanded into every order-preserving interleaving
of their task sequences.  Ordering across parallel branches matters to
compliance (an assertion in one branch can invalidate work in another),
so no canonical order is picked.

Enumeration plays a token game on the sequence-flow edges: tasks and
joins consume tokens, splits and tasks emit them.  Non-task nodes fire
eagerly in a canonical order (they are invisible in the trace and
commute with everything else), so distinct results differ either in a
gateway choice or in the order of task firings, never in bookkeeping.
Loops are bounded by capping how often any single edge may be traversed
within one trace; a loop body therefore runs at most ``max_loop`` times.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator

from .bpmn import NodeKind, ProcessGraph
from .errors import NormCheckError


class UnstructuredParallelism(NormCheckError):
    """A parallel split has no matching join covering all its branches."""


class ExplosionLimit(NormCheckError):
    """Enumeration exceeded a configured bound."""

    def __init__(self, kind: str, count: int, bound: int):
        super().__init__(f"{kind} bound exceeded: reached {count}, limit {bound}")
        self.kind = kind
        self.count = count
        self.bound = bound


@dataclass(frozen=True)
class EnumerationConfig:
    max_loop: int = 2
    max_interleavings: int = 1000
    max_traces: int = 10000

    def __post_init__(self):
        for name in ("max_loop", "max_interleavings", "max_traces"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class OriginPath:
    """Which way a trace went: XOR choices in firing order, plus the
    traversal count of every edge used more than once (loop unrolling)."""

    choices: tuple[str, ...] = ()
    loops: tuple[tuple[str, int], ...] = ()

    def describe(self) -> str:
        parts = []
        if self.choices:
            parts.append("choices: " + ", ".join(self.choices))
        if self.loops:
            parts.append("loops: " + ", ".join(f"{e} x{n}" for e, n in self.loops))
        return "; ".join(parts) if parts else "(single path)"


@dataclass(frozen=True)
class Trace:
    steps: tuple[str, ...]
    origin: OriginPath = field(default_factory=OriginPath)

    def sort_key(self) -> tuple:
        return (self.origin.choices, self.origin.loops, self.steps)


def _edge_name(edge: tuple[str, str]) -> str:
    return f"{edge[0]}->{edge[1]}"


def _post_dominators(graph: ProcessGraph) -> dict[str, set[str]]:
    """Fixpoint post-dominator sets over the graph plus a virtual exit."""
    exit_node = object()
    succ: dict[object, list[object]] = {n: [] for n in graph.nodes}
    for f, t in graph.edges:
        succ[f].append(t)
    for end in graph.end_ids:
        succ[end].append(exit_node)
    succ[exit_node] = []

    all_nodes = set(succ)
    pdom: dict[object, set[object]] = {n: set(all_nodes) for n in succ}
    pdom[exit_node] = {exit_node}
    changed = True
    while changed:
        changed = False
        for node in succ:
            if node is exit_node:
                continue
            new = {node} | set.intersection(*(pdom[s] for s in succ[node]))
            if new != pdom[node]:
                pdom[node] = new
                changed = True
    return {n: {d for d in doms if d is not exit_node} for n, doms in pdom.items() if n is not exit_node}


def check_structured_parallelism(graph: ProcessGraph):
    """Every AND split must have a unique AND join post-dominating all
    of its branches; raises UnstructuredParallelism otherwise."""
    pdom = _post_dominators(graph)
    for node_id, node in graph.nodes.items():
        if node.kind is not NodeKind.AND_SPLIT:
            continue
        branches = graph.outgoing(node_id)
        common = set.intersection(*(pdom[b] for b in branches)) - {node_id}
        if not common:
            raise UnstructuredParallelism(f"parallel split {node_id!r} has no common join")
        # The nearest common post-dominator has the largest dominator set.
        nearest = max(common, key=lambda c: (len(pdom[c]), c))
        if graph.nodes[nearest].kind is not NodeKind.AND_JOIN:
            raise UnstructuredParallelism(
                f"parallel split {node_id!r} rejoins at {nearest!r}, "
                "which is not a parallel join"
            )


class _Walker:
    """Depth-first token game over one graph under one config."""

    def __init__(self, graph: ProcessGraph, cfg: EnumerationConfig):
        self.graph = graph
        self.cfg = cfg
        self.out_edges = {n: sorted((n, t) for t in graph.outgoing(n)) for n in graph.nodes}
        self.in_edges = {n: sorted((f, n) for f in graph.incoming(n)) for n in graph.nodes}
        self.produced = 0
        self.branch_points = 0

    def run(self) -> Iterator[Trace]:
        start = self.graph.start_id
        marking: Counter = Counter({self.out_edges[start][0]: 1})
        yield from self._explore(marking, Counter(self.out_edges[start][:1]), [], [])

    def _emit(self, marking: Counter, used: Counter, edge: tuple[str, str]) -> bool:
        if used[edge] >= self.cfg.max_loop:
            return False
        marking[edge] += 1
        used[edge] += 1
        return True

    def _finish(self, steps: list[str], choices: list[str], used: Counter) -> Trace:
        self.produced += 1
        if self.produced > self.cfg.max_traces:
            raise ExplosionLimit("trace", self.produced, self.cfg.max_traces)
        loops = tuple(
            sorted((_edge_name(e), n) for e, n in used.items() if n > 1)
        )
        return Trace(tuple(steps), OriginPath(tuple(choices), loops))

    def _explore(
        self,
        marking: Counter,
        used: Counter,
        steps: list[str],
        choices: list[str],
    ) -> Iterator[Trace]:
        kinds = self.graph.nodes
        # Fire the first enabled non-task node, if any (canonical order).
        for node_id in sorted(n for n in kinds if kinds[n].kind is not NodeKind.TASK):
            kind = kinds[node_id].kind
            ins = [e for e in self.in_edges[node_id] if marking[e] > 0]
            if not ins:
                continue
            if kind is NodeKind.END:
                next_marking = marking.copy()
                next_marking[ins[0]] -= 1
                if +next_marking:
                    raise UnstructuredParallelism(
                        f"end event {node_id!r} reached while other branches are active"
                    )
                yield self._finish(steps, choices, used)
                return
            if kind is NodeKind.AND_JOIN:
                if any(marking[e] == 0 for e in self.in_edges[node_id]):
                    continue  # waits for all branches
                next_marking = marking.copy()
                for e in self.in_edges[node_id]:
                    next_marking[e] -= 1
                next_used = used.copy()
                if not self._emit(next_marking, next_used, self.out_edges[node_id][0]):
                    return
                yield from self._explore(+next_marking, next_used, steps, choices)
                return
            if kind in (NodeKind.XOR_JOIN, NodeKind.START):
                next_marking = marking.copy()
                next_marking[ins[0]] -= 1
                next_used = used.copy()
                if not self._emit(next_marking, next_used, self.out_edges[node_id][0]):
                    return
                yield from self._explore(+next_marking, next_used, steps, choices)
                return
            if kind is NodeKind.AND_SPLIT:
                next_marking = marking.copy()
                next_marking[ins[0]] -= 1
                next_used = used.copy()
                for edge in self.out_edges[node_id]:
                    if not self._emit(next_marking, next_used, edge):
                        return
                yield from self._explore(+next_marking, next_used, steps, choices)
                return
            if kind is NodeKind.XOR_SPLIT:
                for edge in self.out_edges[node_id]:
                    next_marking = marking.copy()
                    next_marking[ins[0]] -= 1
                    next_used = used.copy()
                    if not self._emit(next_marking, next_used, edge):
                        continue
                    yield from self._explore(
                        +next_marking, next_used, steps, choices + [_edge_name(edge)]
                    )
                return

        # Only tasks remain; branching here realizes the interleavings.
        enabled = sorted(
            n
            for n in kinds
            if kinds[n].kind is NodeKind.TASK and any(marking[e] > 0 for e in self.in_edges[n])
        )
        if not enabled:
            active = {e for e, c in marking.items() if c > 0}
            raise UnstructuredParallelism(
                "deadlock: no node enabled while tokens remain on "
                + ", ".join(sorted(_edge_name(e) for e in active))
            )
        if len(enabled) > 1:
            self.branch_points += len(enabled) - 1
            if self.branch_points > self.cfg.max_interleavings:
                raise ExplosionLimit(
                    "interleaving", self.branch_points, self.cfg.max_interleavings
                )
        for task in enabled:
            in_edge = next(e for e in self.in_edges[task] if marking[e] > 0)
            next_marking = marking.copy()
            next_marking[in_edge] -= 1
            next_used = used.copy()
            if not self._emit(next_marking, next_used, self.out_edges[task][0]):
                continue
            yield from self._explore(+next_marking, next_used, steps + [task], choices)


def enumerate_traces(graph: ProcessGraph, cfg: EnumerationConfig | None = None) -> list[Trace]:
    """All traces of the graph, ordered lexicographically by origin path.

    Raises UnstructuredParallelism for unmatched parallel splits and
    ExplosionLimit when a bound is exceeded.
    """
    cfg = cfg or EnumerationConfig()
    check_structured_parallelism(graph)
    walker = _Walker(graph, cfg)
    return sorted(walker.run(), key=Trace.sort_key)


def count_traces(graph: ProcessGraph, cfg: EnumerationConfig | None = None) -> int:
    """Number of traces, walking the same state space without storing them."""
    cfg = cfg or EnumerationConfig()
    check_structured_parallelism(graph)
    walker = _Walker(graph, cfg)
    return sum(1 for _ in walker.run())
