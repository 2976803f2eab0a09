"""BPMN 2.0 subset parser and task annotation loader.

Recognized process elements (matched by local name): startEvent,
endEvent, task/userTask/serviceTask, exclusiveGateway, parallelGateway,
and sequenceFlow.  Anything else raises UnsupportedElement; silently
dropping elements that may carry control-flow semantics is worse than a
hard error for a compliance tool.

Task annotations live in a sidecar JSON file::

    {"process": "HaH", "tasks": {"t_nurse_form": ["GiveConsent", "Proc"]}}

Each entry is an ordered list of literal strings (optional ``-`` prefix
for negation); within one task's list a later entry for the same atom
overrides earlier ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping
import xml.etree.ElementTree as ET

from .ddl import Literal, UnknownAtom
from .errors import NormCheckError, XmlSyntaxError


class UnsupportedElement(NormCheckError):
    """The BPMN file uses an element outside the supported subset."""


class StructureError(NormCheckError):
    """The process graph violates a structural invariant."""


class AnnotationSyntaxError(NormCheckError):
    """The annotation file is not valid annotation JSON."""


class UnknownTask(NormCheckError):
    """An annotation names a task id absent from the process."""


class ProcessIdMismatch(NormCheckError):
    """The annotation file targets a different process id."""


class NodeKind(Enum):
    START = "start"
    END = "end"
    TASK = "task"
    XOR_SPLIT = "xor-split"
    XOR_JOIN = "xor-join"
    AND_SPLIT = "and-split"
    AND_JOIN = "and-join"


@dataclass(frozen=True)
class Node:
    kind: NodeKind
    name: str = ""


@dataclass(frozen=True)
class ProcessGraph:
    process_id: str
    nodes: Mapping[str, Node]
    edges: tuple[tuple[str, str], ...]

    def outgoing(self, node_id: str) -> list[str]:
        return [t for f, t in self.edges if f == node_id]

    def incoming(self, node_id: str) -> list[str]:
        return [f for f, t in self.edges if t == node_id]

    @property
    def start_id(self) -> str:
        return next(i for i, n in self.nodes.items() if n.kind is NodeKind.START)

    @property
    def end_ids(self) -> list[str]:
        return [i for i, n in self.nodes.items() if n.kind is NodeKind.END]

    def task_name(self, node_id: str) -> str:
        node = self.nodes.get(node_id)
        return node.name if node and node.name else node_id

    def task_ids(self) -> list[str]:
        return [i for i, n in self.nodes.items() if n.kind is NodeKind.TASK]


_TASK_TAGS = {"task", "userTask", "serviceTask"}
_GATEWAY_TAGS = {"exclusiveGateway": "xor", "parallelGateway": "and"}


def _local_name(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def parse_bpmn(xml_text: str) -> ProcessGraph:
    """Parse BPMN XML into a validated process graph.

    Gateway split/join roles are inferred from in/out degree.  The
    graph must have exactly one start event, at least one end event,
    tasks with degree 1/1, gateways that are pure splits (1 in, >=2
    out) or pure joins (>=2 in, 1 out), and no unreachable nodes.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise XmlSyntaxError(f"malformed XML: {exc}") from exc

    processes = [root] if _local_name(root.tag) == "process" else []
    if not processes:
        for child in root:
            name = _local_name(child.tag)
            if name == "process":
                processes.append(child)
            else:
                raise UnsupportedElement(name)
    if len(processes) != 1:
        raise StructureError(f"expected exactly one <process>, found {len(processes)}")
    process = processes[0]
    process_id = process.get("id", "process")

    raw: dict[str, tuple[str, str]] = {}  # id -> (tag kind, name)
    flows: list[tuple[str, str]] = []
    for elem in process:
        name = _local_name(elem.tag)
        if name == "sequenceFlow":
            source, target = elem.get("sourceRef"), elem.get("targetRef")
            if not source or not target:
                raise StructureError("sequenceFlow missing sourceRef/targetRef")
            flows.append((source, target))
            continue
        if name not in _TASK_TAGS and name not in _GATEWAY_TAGS and name not in (
            "startEvent",
            "endEvent",
        ):
            raise UnsupportedElement(name)
        node_id = elem.get("id")
        if not node_id:
            raise StructureError(f"<{name}> without an id")
        if node_id in raw:
            raise StructureError(f"duplicate node id {node_id!r}")
        raw[node_id] = (name, elem.get("name", ""))

    indeg = {i: 0 for i in raw}
    outdeg = {i: 0 for i in raw}
    for source, target in flows:
        for ref in (source, target):
            if ref not in raw:
                raise StructureError(f"sequenceFlow references unknown node {ref!r}")
        outdeg[source] += 1
        indeg[target] += 1

    nodes: dict[str, Node] = {}
    for node_id, (tag, label) in raw.items():
        n_in, n_out = indeg[node_id], outdeg[node_id]
        if tag == "startEvent":
            if n_in != 0 or n_out != 1:
                raise StructureError(f"start event {node_id!r} must have 0 in / 1 out")
            nodes[node_id] = Node(NodeKind.START, label)
        elif tag == "endEvent":
            if n_in < 1 or n_out != 0:
                raise StructureError(f"end event {node_id!r} must have >=1 in / 0 out")
            nodes[node_id] = Node(NodeKind.END, label)
        elif tag in _TASK_TAGS:
            if n_in != 1 or n_out != 1:
                raise StructureError(f"task {node_id!r} must have exactly 1 in / 1 out")
            nodes[node_id] = Node(NodeKind.TASK, label or node_id)
        else:
            family = _GATEWAY_TAGS[tag]
            if n_in == 1 and n_out >= 2:
                kind = NodeKind.XOR_SPLIT if family == "xor" else NodeKind.AND_SPLIT
            elif n_in >= 2 and n_out == 1:
                kind = NodeKind.XOR_JOIN if family == "xor" else NodeKind.AND_JOIN
            else:
                raise StructureError(
                    f"gateway {node_id!r} has {n_in} in / {n_out} out; "
                    "must be a pure split or a pure join"
                )
            nodes[node_id] = Node(kind, label)

    starts = [i for i, n in nodes.items() if n.kind is NodeKind.START]
    ends = [i for i, n in nodes.items() if n.kind is NodeKind.END]
    if len(starts) != 1:
        raise StructureError(f"expected exactly one start event, found {len(starts)}")
    if not ends:
        raise StructureError("process has no end event")

    graph = ProcessGraph(process_id, nodes, tuple(flows))
    _check_reachability(graph, starts[0], ends)
    return graph


def _check_reachability(graph: ProcessGraph, start: str, ends: list[str]):
    forward: dict[str, list[str]] = {}
    backward: dict[str, list[str]] = {}
    for f, t in graph.edges:
        forward.setdefault(f, []).append(t)
        backward.setdefault(t, []).append(f)

    def closure(seeds: Iterable[str], adjacency: dict[str, list[str]]) -> set[str]:
        seen = set(seeds)
        frontier = list(seeds)
        while frontier:
            for nxt in adjacency.get(frontier.pop(), []):
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        return seen

    from_start = closure([start], forward)
    unreachable = sorted(set(graph.nodes) - from_start)
    if unreachable:
        raise StructureError(f"nodes unreachable from start: {', '.join(unreachable)}")
    to_end = closure(ends, backward)
    stuck = sorted(set(graph.nodes) - to_end)
    if stuck:
        raise StructureError(f"nodes that reach no end event: {', '.join(stuck)}")


@dataclass(frozen=True)
class AnnotationMap:
    """Ordered literal assertions per task id."""

    process_id: str
    by_task: Mapping[str, tuple[Literal, ...]] = field(default_factory=dict)

    def effective(self, task_id: str) -> list[Literal]:
        """Assertions for a task with later same-atom entries winning."""
        result: dict[str, Literal] = {}
        for lit in self.by_task.get(task_id, ()):
            result[lit.atom] = lit
        return list(result.values())


def parse_annotations(
    text: str, graph: ProcessGraph, vocabulary: Mapping[str, str]
) -> AnnotationMap:
    """Load and cross-check an annotation file against graph and vocabulary."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise AnnotationSyntaxError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise AnnotationSyntaxError("top level must be an object")
    extra = set(data) - {"process", "tasks"}
    if extra:
        raise AnnotationSyntaxError(f"unexpected keys: {', '.join(sorted(extra))}")
    process_id = data.get("process")
    tasks = data.get("tasks")
    if not isinstance(process_id, str) or not isinstance(tasks, dict):
        raise AnnotationSyntaxError("'process' must be a string and 'tasks' an object")
    if process_id != graph.process_id:
        raise ProcessIdMismatch(
            f"annotations are for {process_id!r}, process is {graph.process_id!r}"
        )

    by_task: dict[str, tuple[Literal, ...]] = {}
    task_ids = set(graph.task_ids())
    for task_id, entries in tasks.items():
        if task_id not in task_ids:
            raise UnknownTask(f"annotation names unknown task {task_id!r}")
        if not isinstance(entries, list) or not all(isinstance(e, str) for e in entries):
            raise AnnotationSyntaxError(f"task {task_id!r}: entries must be strings")
        literals = []
        for entry in entries:
            try:
                lit = Literal.parse(entry)
            except ValueError as exc:
                raise AnnotationSyntaxError(f"task {task_id!r}: {exc}") from exc
            if lit.atom not in vocabulary:
                raise UnknownAtom(f"task {task_id!r} asserts undeclared atom {lit.atom!r}")
            literals.append(lit)
        by_task[task_id] = tuple(literals)
    return AnnotationMap(process_id, by_task)
