"""normcheck: check BPMN process models against defeasible deontic norm rules."""

from .ddl import (
    ConclusionSet,
    ContradictoryFacts,
    DeonticElement,
    Literal,
    Modality,
    Rule,
    RuleSet,
    UnknownAtom,
    complement,
    conflicts,
    derive,
)
from .bpmn import AnnotationMap, NodeKind, ProcessGraph, parse_annotations, parse_bpmn
from .engine import (
    AggregateVerdict,
    ComplianceReport,
    InstanceStatus,
    ObligationInstance,
    TraceResult,
    TraceVerdict,
    aggregate,
    check_trace,
    explain,
)
from .errors import NormCheckError, XmlSyntaxError
from .rulefile import (
    Diagnostic,
    RuleDocument,
    load_ruleset,
    parse_formula,
    parse_ruleset,
    serialize_formula,
    serialize_ruleset,
    validate_ruleset,
)
from .traces import (
    EnumerationConfig,
    ExplosionLimit,
    Trace,
    UnstructuredParallelism,
    count_traces,
    enumerate_traces,
)

__version__ = "0.1.0"
