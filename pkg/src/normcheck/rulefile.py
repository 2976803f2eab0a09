"""Parsing and validation of norm rule XML files.

A rule file declares a vocabulary of atoms, labeled defeasible rules,
and superiority pairs.  The root element name is arbitrary; recognized
elements (matched by local name, namespace-agnostic) are::

    <Vocabulary>
      <Term atom="Proc" description="..."/>
    </Vocabulary>
    <Rule ruleLabel="Art.6.0" xsi:type="DflRuleType">
      <ControlObjective>...</ControlObjective>
      <FormalRepresentation>=>[OM]-Proc</FormalRepresentation>
    </Rule>
    <SuperiorityRelation superiorRuleLabel="Art.6.1a" inferiorRuleLabel="Art.6.0"/>

Formula grammar for <FormalRepresentation> text (whitespace between
tokens is ignored)::

    formula    := [antecedent] "=>" chain
    antecedent := literal ("," literal)*
    chain      := element ("(x)" element)*
    element    := "[" modality "]" literal
    literal    := ["-"] ATOM
    modality   := "OM" | "OAPP" | "OAPNP" | "OANPP" | "OANPNP" | "P"

``(x)`` separates compensation-chain elements.  Atom matching is case
sensitive.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Iterable

from .ddl import (
    ATOM_PATTERN,
    DeonticElement,
    Literal,
    Modality,
    Rule,
    RuleSet,
    conflicts,
)
from .errors import NormCheckError, XmlSyntaxError

RECOGNIZED_ELEMENTS = {
    "Vocabulary",
    "Term",
    "Rule",
    "ControlObjective",
    "FormalRepresentation",
    "SuperiorityRelation",
}

DEFEASIBLE_RULE_TYPE = "DflRuleType"


class MissingAttribute(NormCheckError):
    """A required attribute or child element is absent."""


class FormulaSyntaxError(NormCheckError):
    """A formula does not match the grammar; carries the offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    message: str
    location: str = ""

    def __str__(self) -> str:
        where = f" [{self.location}]" if self.location else ""
        return f"{self.severity}: {self.code}: {self.message}{where}"


@dataclass
class RuleDocument:
    """Raw parse of one or more rule files, prior to validation."""

    source_path: str = ""
    vocabulary: list[tuple[str, str]] = field(default_factory=list)
    rule_entries: list[tuple[str, str, str]] = field(default_factory=list)
    superiority_entries: list[tuple[str, str]] = field(default_factory=list)
    parse_warnings: list[Diagnostic] = field(default_factory=list)


def _local_name(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _attr(elem: ET.Element, name: str) -> str | None:
    """Attribute lookup by local name, tolerating namespace prefixes."""
    if name in elem.attrib:
        return elem.attrib[name]
    for key, value in elem.attrib.items():
        if _local_name(key) == name:
            return value
    return None


def parse_ruleset(xml_text: str, source_path: str = "") -> RuleDocument:
    """Extract vocabulary terms, rules, and superiority pairs from XML.

    Unknown elements are skipped and reported as warning diagnostics on
    the returned document; so are rules whose xsi:type is not
    ``DflRuleType``.  Raises XmlSyntaxError for malformed XML and
    MissingAttribute when a required attribute or child is absent.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise XmlSyntaxError(f"malformed XML: {exc}") from exc

    doc = RuleDocument(source_path=source_path)
    for elem in root.iter():
        name = _local_name(elem.tag)
        if elem is root or name in ("Vocabulary",):
            continue
        if name == "Term":
            atom = _attr(elem, "atom")
            if atom is None:
                raise MissingAttribute("<Term> requires an 'atom' attribute")
            doc.vocabulary.append((atom, _attr(elem, "description") or ""))
        elif name == "Rule":
            label = _attr(elem, "ruleLabel")
            if label is None:
                raise MissingAttribute("<Rule> requires a 'ruleLabel' attribute")
            rule_type = _attr(elem, "type")
            if rule_type is not None and rule_type != DEFEASIBLE_RULE_TYPE:
                doc.parse_warnings.append(
                    Diagnostic(
                        "warning",
                        "unsupported-rule-type",
                        f"rule {label!r} has type {rule_type!r}; skipped",
                        f"Rule[@ruleLabel={label!r}]",
                    )
                )
                continue
            objective = ""
            formula = None
            for child in elem:
                child_name = _local_name(child.tag)
                if child_name == "ControlObjective":
                    objective = (child.text or "").strip()
                elif child_name == "FormalRepresentation":
                    formula = (child.text or "").strip()
            if formula is None:
                raise MissingAttribute(
                    f"<Rule ruleLabel={label!r}> has no <FormalRepresentation> child"
                )
            doc.rule_entries.append((label, objective, formula))
        elif name == "SuperiorityRelation":
            sup = _attr(elem, "superiorRuleLabel")
            inf = _attr(elem, "inferiorRuleLabel")
            if sup is None or inf is None:
                raise MissingAttribute(
                    "<SuperiorityRelation> requires superiorRuleLabel and inferiorRuleLabel"
                )
            doc.superiority_entries.append((sup, inf))
        elif name in ("ControlObjective", "FormalRepresentation"):
            continue  # handled inside their <Rule>
        else:
            doc.parse_warnings.append(
                Diagnostic("warning", "unknown-element", f"ignored element <{name}>", name)
            )
    return doc


def merge_documents(docs: Iterable[RuleDocument]) -> RuleDocument:
    """Concatenate several parsed rule files into one document.

    Byte-identical vocabulary entries are deduplicated; everything else
    is kept and left to validation (where duplicate labels or
    conflicting term descriptions become errors).
    """
    merged = RuleDocument(source_path="+".join(d.source_path for d in docs if d.source_path))
    seen_terms: set[tuple[str, str]] = set()
    for doc in docs:
        for term in doc.vocabulary:
            if term not in seen_terms:
                seen_terms.add(term)
                merged.vocabulary.append(term)
        merged.rule_entries.extend(doc.rule_entries)
        merged.superiority_entries.extend(doc.superiority_entries)
        merged.parse_warnings.extend(doc.parse_warnings)
    return merged


_MODALITIES = {m.value for m in Modality}


class _Tokens:
    """Cursor over a formula string; skips whitespace between tokens."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self, literal: str) -> bool:
        self.skip_ws()
        return self.text.startswith(literal, self.pos)

    def take(self, literal: str):
        if not self.peek(literal):
            raise FormulaSyntaxError(f"expected {literal!r}", self.pos)
        self.pos += len(literal)

    def take_word(self, what: str) -> str:
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and (
            self.text[self.pos].isalnum() or self.text[self.pos] == "_"
        ):
            self.pos += 1
        if self.pos == start:
            raise FormulaSyntaxError(f"expected {what}", start)
        return self.text[start:self.pos]

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)


def parse_formula(text: str) -> tuple[list[Literal], list[DeonticElement]]:
    """Parse a formula into its antecedent literals and consequent chain."""
    tokens = _Tokens(text)

    def literal() -> Literal:
        negated = False
        if tokens.peek("-"):
            tokens.take("-")
            negated = True
        start = tokens.pos
        atom = tokens.take_word("an atom")
        if not ATOM_PATTERN.match(atom):
            raise FormulaSyntaxError(f"bad atom {atom!r}", start)
        return Literal(atom, negated)

    antecedent: list[Literal] = []
    if not tokens.peek("=>"):
        antecedent.append(literal())
        while tokens.peek(","):
            tokens.take(",")
            antecedent.append(literal())
    tokens.take("=>")

    def element() -> DeonticElement:
        tokens.take("[")
        start = tokens.pos
        word = tokens.take_word("a modality")
        if word not in _MODALITIES:
            raise FormulaSyntaxError(f"unknown modality {word!r}", start)
        tokens.take("]")
        return DeonticElement(Modality(word), literal())

    chain = [element()]
    while tokens.peek("(x)"):
        tokens.take("(x)")
        chain.append(element())
    if not tokens.at_end():
        raise FormulaSyntaxError("trailing input after formula", tokens.pos)
    return antecedent, chain


def serialize_formula(antecedent: Iterable[Literal], chain: Iterable[DeonticElement]) -> str:
    left = ",".join(str(l) for l in antecedent)
    right = "(x)".join(str(e) for e in chain)
    return f"{left}=>{right}"


def _superiority_cycle(pairs: list[tuple[str, str]]) -> list[str] | None:
    """A cycle in the superior->inferior graph, or None if acyclic."""
    graph: dict[str, list[str]] = {}
    for sup, inf in pairs:
        graph.setdefault(sup, []).append(inf)
    WHITE, GREY, BLACK = 0, 1, 2
    color = {label: WHITE for label in graph}
    stack: list[str] = []

    def visit(node: str) -> list[str] | None:
        color[node] = GREY
        stack.append(node)
        for nxt in graph.get(node, []):
            if color.get(nxt, WHITE) == GREY:
                return stack[stack.index(nxt):] + [nxt]
            if color.get(nxt, WHITE) == WHITE:
                found = visit(nxt)
                if found:
                    return found
        stack.pop()
        color[node] = BLACK
        return None

    for label in list(graph):
        if color[label] == WHITE:
            found = visit(label)
            if found:
                return found
    return None


def validate_ruleset(doc: RuleDocument) -> tuple[RuleSet | None, list[Diagnostic]]:
    """Check a parsed document and build a RuleSet if it is error free.

    Errors: duplicate rule labels, duplicate vocabulary atoms, formula
    syntax errors, atoms missing from the vocabulary, superiority pairs
    naming unknown rules or the same rule twice, superiority cycles, a
    permission inside a multi-element chain.  Warnings: unused
    vocabulary atoms, superiority between rules whose heads cannot
    conflict, plus any parse warnings carried on the document.
    """
    diagnostics: list[Diagnostic] = list(doc.parse_warnings)

    def error(code: str, message: str, location: str = ""):
        diagnostics.append(Diagnostic("error", code, message, location))

    def warning(code: str, message: str, location: str = ""):
        diagnostics.append(Diagnostic("warning", code, message, location))

    vocabulary: dict[str, str] = {}
    for atom, description in doc.vocabulary:
        if not ATOM_PATTERN.match(atom):
            error("bad-atom", f"vocabulary atom {atom!r} is not an identifier", atom)
        elif atom in vocabulary:
            error("duplicate-atom", f"vocabulary atom {atom!r} declared twice", atom)
        else:
            vocabulary[atom] = description

    rules: list[Rule] = []
    labels: set[str] = set()
    used_atoms: set[str] = set()
    for label, objective, formula_text in doc.rule_entries:
        location = f"Rule[@ruleLabel={label!r}]"
        if label in labels:
            error("duplicate-label", f"duplicate rule label {label!r}", location)
            continue
        labels.add(label)
        try:
            antecedent, chain = parse_formula(formula_text)
        except FormulaSyntaxError as exc:
            error("formula-syntax", f"rule {label!r}: {exc}", location)
            continue
        if len(chain) > 1 and any(e.modality is Modality.P for e in chain):
            error(
                "permission-in-chain",
                f"rule {label!r} puts a permission inside a compensation chain",
                location,
            )
            continue
        atoms = {l.atom for l in antecedent} | {e.content.atom for e in chain}
        missing = sorted(a for a in atoms if a not in vocabulary)
        if missing:
            for atom in missing:
                error("unknown-atom", f"rule {label!r} uses undeclared atom {atom!r}", location)
            continue
        used_atoms |= atoms
        rules.append(Rule(label, objective, tuple(antecedent), tuple(chain)))

    valid_pairs: list[tuple[str, str]] = []
    for sup, inf in doc.superiority_entries:
        location = f"SuperiorityRelation[{sup!r}>{inf!r}]"
        if sup == inf:
            error("superiority-self", f"rule {sup!r} declared superior to itself", location)
            continue
        unknown = [l for l in (sup, inf) if l not in labels]
        if unknown:
            for l in unknown:
                error("unknown-rule", f"superiority names unknown rule {l!r}", location)
            continue
        valid_pairs.append((sup, inf))

    cycle = _superiority_cycle(valid_pairs)
    if cycle:
        error("superiority-cycle", "superiority cycle: " + " > ".join(cycle))

    by_label = {r.label: r for r in rules}
    for sup, inf in valid_pairs:
        if sup in by_label and inf in by_label:
            if not conflicts(by_label[sup].head, by_label[inf].head):
                warning(
                    "irrelevant-superiority",
                    f"heads of {sup!r} and {inf!r} cannot conflict",
                    f"SuperiorityRelation[{sup!r}>{inf!r}]",
                )
    for atom in vocabulary:
        if atom not in used_atoms:
            warning("unused-atom", f"vocabulary atom {atom!r} is never used by a rule", atom)

    if any(d.severity == "error" for d in diagnostics):
        return None, diagnostics
    return RuleSet(vocabulary, tuple(rules), tuple(valid_pairs)), diagnostics


def load_ruleset(paths: Iterable[str]) -> tuple[RuleSet | None, list[Diagnostic]]:
    """Parse and merge one rule file per path, then validate."""
    docs = []
    for path in paths:
        with open(path, "r", encoding="utf-8") as handle:
            docs.append(parse_ruleset(handle.read(), source_path=str(path)))
    return validate_ruleset(merge_documents(docs))


def serialize_ruleset(doc: RuleDocument) -> str:
    """Render a document back to rule XML (canonical element order)."""
    root = ET.Element("RuleSet")
    if doc.vocabulary:
        vocab = ET.SubElement(root, "Vocabulary")
        for atom, description in doc.vocabulary:
            ET.SubElement(vocab, "Term", atom=atom, description=description)
    for label, objective, formula in doc.rule_entries:
        rule = ET.SubElement(
            root,
            "Rule",
            {
                "ruleLabel": label,
                "{http://www.w3.org/2001/XMLSchema-instance}type": DEFEASIBLE_RULE_TYPE,
            },
        )
        ET.SubElement(rule, "ControlObjective").text = objective
        ET.SubElement(rule, "FormalRepresentation").text = formula
    for sup, inf in doc.superiority_entries:
        ET.SubElement(
            root, "SuperiorityRelation", superiorRuleLabel=sup, inferiorRuleLabel=inf
        )
    ET.indent(root)
    return ET.tostring(root, encoding="unicode", xml_declaration=False)
