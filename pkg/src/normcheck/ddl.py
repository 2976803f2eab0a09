"""Propositional defeasible deontic inference.

Norms are labeled defeasible rules: a conjunction of factual literals
entails a chain of deontic elements, where an element pairs one of six
modalities with a literal.  Five modalities are obligation modes:

    OM      maintenance (must hold at every state while in force)
    OAPP    achievement, preemptive, perdurant
    OAPNP   achievement, preemptive, non-perdurant
    OANPP   achievement, non-preemptive, perdurant
    OANPNP  achievement, non-preemptive, non-perdurant

and ``P`` is positive permission.  Elements after the first in a rule's
consequent chain are compensations: they enter force only when the
preceding element is violated, so :func:`derive` considers only chain
heads.

Conflicts between conclusions (an obligation against the complement, or
an obligation against a permission of the complement) are resolved by an
explicit, acyclic superiority relation between rules.  The proof
condition is team defeat with ambiguity blocking: a candidate conclusion
wins only if every applicable attacking rule is itself defeated by some
applicable rule superior to it; when a conflict cannot be resolved,
neither side is concluded.  Only defeasible rules exist here: no strict
rules, no defeaters, and rule antecedents are evaluated against the
asserted fact set only (a literal that was never asserted is neither
true nor false).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .errors import NormCheckError

ATOM_PATTERN = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class ContradictoryFacts(NormCheckError):
    """A fact set contains both a literal and its complement."""


class UnknownAtom(NormCheckError):
    """An atom is not declared in the ruleset vocabulary."""


@dataclass(frozen=True, order=True)
class Literal:
    """A possibly negated propositional atom."""

    atom: str
    negated: bool = False

    def __post_init__(self):
        if not ATOM_PATTERN.match(self.atom):
            raise ValueError(f"invalid atom {self.atom!r}")

    def complement(self) -> "Literal":
        return Literal(self.atom, not self.negated)

    @classmethod
    def parse(cls, text: str) -> "Literal":
        """Parse ``Atom`` or ``-Atom``; raises ValueError on bad input."""
        text = text.strip()
        if text.startswith("-"):
            return cls(text[1:], True)
        return cls(text)

    def __str__(self) -> str:
        return ("-" if self.negated else "") + self.atom


def complement(literal: Literal) -> Literal:
    """The same atom with negation flipped."""
    return literal.complement()


class Modality(Enum):
    OM = "OM"
    OAPP = "OAPP"
    OAPNP = "OAPNP"
    OANPP = "OANPP"
    OANPNP = "OANPNP"
    P = "P"

    @property
    def is_obligation(self) -> bool:
        return self is not Modality.P

    @property
    def is_maintenance(self) -> bool:
        return self is Modality.OM

    @property
    def is_achievement(self) -> bool:
        return self in (Modality.OAPP, Modality.OAPNP, Modality.OANPP, Modality.OANPNP)

    @property
    def is_preemptive(self) -> bool:
        return self in (Modality.OAPP, Modality.OAPNP)

    @property
    def is_perdurant(self) -> bool:
        return self in (Modality.OAPP, Modality.OANPP)


@dataclass(frozen=True)
class DeonticElement:
    """A modality applied to a literal, e.g. ``[OM]-Proc``."""

    modality: Modality
    content: Literal

    def __str__(self) -> str:
        return f"[{self.modality.value}]{self.content}"

    def sort_key(self) -> tuple:
        return (self.content.atom, self.content.negated, self.modality.value)


def conflicts(a: DeonticElement, b: DeonticElement) -> bool:
    """Whether two deontic elements cannot hold together.

    True when both are obligation modes over complementary contents, or
    when one obliges a literal whose complement the other permits.  Two
    permissions never conflict, nor do elements over the same literal.
    """
    if a.content != b.content.complement():
        return False
    if a.modality.is_obligation and b.modality.is_obligation:
        return True
    return a.modality.is_obligation != b.modality.is_obligation


@dataclass(frozen=True)
class Rule:
    """A labeled defeasible rule with a compensation chain consequent."""

    label: str
    control_objective: str
    antecedent: tuple[Literal, ...]
    consequent: tuple[DeonticElement, ...]

    def __post_init__(self):
        if not self.consequent:
            raise ValueError(f"rule {self.label!r} has an empty consequent")
        if len(self.consequent) > 1 and any(
            e.modality is Modality.P for e in self.consequent
        ):
            # Permissions cannot be violated, so they can neither be
            # compensated nor serve as compensation.
            raise ValueError(
                f"rule {self.label!r} has a permission inside a compensation chain"
            )

    @property
    def head(self) -> DeonticElement:
        return self.consequent[0]


@dataclass(frozen=True)
class RuleSet:
    """Vocabulary, rules, and superiority pairs, as loaded from rule files."""

    vocabulary: Mapping[str, str]
    rules: tuple[Rule, ...] = ()
    superiorities: tuple[tuple[str, str], ...] = ()

    def rule(self, label: str) -> Rule:
        for r in self.rules:
            if r.label == label:
                return r
        raise KeyError(label)


# Attack outcomes recorded in proof records.
DEFEATED_BY_SUPERIORITY = "defeated-by-superiority"
NOT_APPLICABLE = "not-applicable"
BLOCKED_US = "blocked-us"

# Blocking reasons.
AMBIGUOUS = "ambiguous"


@dataclass(frozen=True)
class Attack:
    """One potential attacker of a conclusion and how it was resolved.

    ``defeater`` names the superior rule when outcome is
    ``defeated-by-superiority``; the (defeater, rule) pair is then a
    superiority pair of the ruleset.
    """

    rule: str
    outcome: str
    defeater: str | None = None


@dataclass(frozen=True)
class ProofRecord:
    conclusion: DeonticElement
    firing_rule: str
    attackers: tuple[Attack, ...] = ()


@dataclass(frozen=True)
class BlockedConclusion:
    """A supported conclusion kept out of the effects set.

    ``reason`` is ``defeated-by-superiority`` (with the winning pair
    recorded as superior/inferior) or ``ambiguous`` when no superiority
    resolves the conflict.
    """

    element: DeonticElement
    reason: str
    superior: str | None = None
    inferior: str | None = None


@dataclass(frozen=True)
class ConclusionSet:
    """Outcome of a derivation: effects in force, blocked conclusions, proofs."""

    effects: frozenset[DeonticElement]
    blocked: tuple[BlockedConclusion, ...] = ()
    proofs: Mapping[DeonticElement, ProofRecord] = field(default_factory=dict)

    def __post_init__(self):
        for a in self.effects:
            for b in self.effects:
                if conflicts(a, b):
                    raise NormCheckError(
                        f"internal consistency breach: {a} and {b} both in effect"
                    )

    def blocked_for(self, element: DeonticElement) -> BlockedConclusion | None:
        for entry in self.blocked:
            if entry.element == element:
                return entry
        return None


def derive(facts: Iterable[Literal], ruleset: RuleSet) -> ConclusionSet:
    """Derive the deontic conclusions in effect for a fact set.

    A rule is applicable when every antecedent literal is in ``facts``
    (an empty antecedent is always applicable); its candidate conclusion
    is the head of its consequent chain.  A candidate enters the effects
    iff every applicable rule whose head conflicts with it is defeated
    by some applicable rule superior to it (team defeat: any supporter
    may defeat any attacker).  Losing candidates are recorded as blocked,
    either defeated by a cited superiority pair or ambiguous.
    """
    fact_set = frozenset(facts)
    for lit in fact_set:
        if lit.complement() in fact_set:
            raise ContradictoryFacts(f"facts contain both {lit} and {lit.complement()}")
        if lit.atom not in ruleset.vocabulary:
            raise UnknownAtom(f"fact atom {lit.atom!r} not in vocabulary")

    applicable = [r for r in ruleset.rules if all(a in fact_set for a in r.antecedent)]
    applicable_set = {r.label for r in applicable}
    superior = set(ruleset.superiorities)

    def defeated(attacker: Rule) -> str | None:
        """Label of an applicable rule that beats the attacker, if any."""
        for t in applicable:
            if conflicts(t.head, attacker.head) and (t.label, attacker.label) in superior:
                return t.label
        return None

    supporters: dict[DeonticElement, list[Rule]] = {}
    for r in applicable:
        supporters.setdefault(r.head, []).append(r)

    effects: list[DeonticElement] = []
    blocked: list[BlockedConclusion] = []
    proofs: dict[DeonticElement, ProofRecord] = {}

    for head, team in supporters.items():
        attacks: list[Attack] = []
        undefeated: list[Rule] = []
        for s in ruleset.rules:
            if not conflicts(s.head, head):
                continue
            if s.label not in applicable_set:
                attacks.append(Attack(s.label, NOT_APPLICABLE))
                continue
            beaten_by = defeated(s)
            if beaten_by is None:
                undefeated.append(s)
                attacks.append(Attack(s.label, BLOCKED_US))
            else:
                attacks.append(Attack(s.label, DEFEATED_BY_SUPERIORITY, beaten_by))

        record = ProofRecord(head, team[0].label, tuple(attacks))
        proofs[head] = record
        if not undefeated:
            effects.append(head)
            continue

        reason, sup_label, inf_label = AMBIGUOUS, None, None
        for s in undefeated:
            for r in team:
                if (s.label, r.label) in superior:
                    reason = DEFEATED_BY_SUPERIORITY
                    sup_label, inf_label = s.label, r.label
                    break
            if sup_label is not None:
                break
        blocked.append(BlockedConclusion(head, reason, sup_label, inf_label))

    return ConclusionSet(frozenset(effects), tuple(blocked), proofs)
