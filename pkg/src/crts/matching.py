"""Match patient records against recommendation populations.

Each population block becomes a three-valued leaf: missing information is
UNKNOWN rather than FALSE unless the record (or the config) declares itself
closed-world. Lab results are the exception; an absent measurement is never
taken as evidence, so it stays UNKNOWN either way.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal

from crts import errors as E
from crts.graph import ExprGraph, build_expr_graph, normalize_to_dnf
from crts.logic import TruthValue, all_of, any_of, eval_graph
from crts.model import (
    ConceptBlock,
    Demographics,
    DictionaryRef,
    Disorder,
    ExprType,
    Intervention,
    LabCriterion,
    NumericRange,
    NumericValue,
    Operator,
    Recommendation,
    TimePeriod,
    validate,
)


@dataclass(frozen=True)
class PatientFact:
    """A condition or intervention in a patient's history.

    ``negated`` records an explicit absence ("no sustained VT on Holter").
    """

    cui: str | None
    name: str | None
    status: TimePeriod = TimePeriod.CURRENT
    negated: bool = False


@dataclass(frozen=True)
class LabObservation:
    key: str
    value: Decimal
    unit: str | None = None
    observed_at: str | None = None


@dataclass(frozen=True)
class PatientRecord:
    age: Decimal | None = None
    gender: str | None = None
    ethnicity: str | None = None
    country: str | None = None
    conditions: tuple[PatientFact, ...] = ()
    interventions: tuple[PatientFact, ...] = ()
    labs: tuple[LabObservation, ...] = ()
    closed_world: bool = False


@dataclass(frozen=True)
class MatchConfig:
    closed_world_override: bool | None = None
    unit_strict: bool = True


@dataclass(frozen=True)
class TraceEntry:
    block_id: str
    value: TruthValue
    reason: str


@dataclass(frozen=True)
class SuggestedIntervention:
    intervention: Intervention
    compared_to: tuple[str, ...] = ()


@dataclass(frozen=True)
class MatchResult:
    doc_id: str
    verdict: TruthValue
    trace: tuple[TraceEntry, ...]
    suggestion_summary: tuple[SuggestedIntervention, ...]
    suggestion_text: str = ""

    @property
    def label(self) -> str:
        return self.verdict.label


_UNIT_ALIASES = {"percent": "%"}


def normalize_unit(unit: str) -> str:
    u = unit.strip()
    return _UNIT_ALIASES.get(u.lower(), u).casefold()


def _fold(text: str | None) -> str:
    return (text or "").strip().casefold()


def satisfies(op: Operator, bound: NumericValue, x: Decimal) -> bool:
    """Does the observed value *x* satisfy ``x <op> bound``?"""
    if op is Operator.IN_RANGE:
        if not isinstance(bound, NumericRange):
            return False
        return bound.low <= x <= bound.high
    if isinstance(bound, NumericRange):
        return False
    return {
        Operator.LT: x < bound,
        Operator.LE: x <= bound,
        Operator.GT: x > bound,
        Operator.GE: x >= bound,
        Operator.EQ: x == bound,
        Operator.NE: x != bound,
    }[op]


def compare_lab(criterion: LabCriterion, obs: LabObservation, cfg: MatchConfig = MatchConfig()) -> TruthValue:
    """Check one observation against a lab criterion with a matching key."""
    if criterion.unit is not None and obs.unit is not None and cfg.unit_strict:
        if normalize_unit(criterion.unit) != normalize_unit(obs.unit):
            return TruthValue.UNKNOWN
    return TruthValue.of(satisfies(criterion.operator, criterion.value, obs.value))


def _concept_matches(block_name: str, concept: DictionaryRef | None, fact: PatientFact) -> bool:
    if concept is not None and fact.cui:
        return _fold(concept.dict_id) == _fold(fact.cui)
    return bool(_fold(fact.name)) and _fold(fact.name) == _fold(block_name)


def _status_ok(wanted: TimePeriod, status: TimePeriod) -> bool:
    return wanted is TimePeriod.UNSPECIFIED or wanted is status


def _history(block: Disorder | Intervention, facts: tuple[PatientFact, ...], closed: bool) -> tuple[TruthValue, str]:
    hits = [
        f
        for f in facts
        if _concept_matches(block.name, block.concept, f) and _status_ok(block.time_period, f.status)
    ]
    what = f"{block.name} ({block.time_period.value})"
    if any(not f.negated for f in hits):
        return TruthValue.TRUE, f"record has {what}"
    if hits:
        return TruthValue.FALSE, f"record states {what} is absent"
    if closed:
        return TruthValue.FALSE, f"{what} not in closed-world record"
    return TruthValue.UNKNOWN, f"{what} not recorded"


def _demographics(block: Demographics, patient: PatientRecord) -> tuple[TruthValue, str]:
    parts: list[TruthValue] = []
    notes: list[str] = []
    if block.age is not None:
        if patient.age is None:
            parts.append(TruthValue.UNKNOWN)
            notes.append("age unknown")
        else:
            parts.append(TruthValue.of(satisfies(block.age.operator, block.age.value, patient.age)))
            notes.append(f"age {patient.age} {block.age.operator.value} {block.age.value}")
    for attr in ("gender", "ethnicity", "country"):
        wanted = getattr(block, attr)
        if wanted is None:
            continue
        have = getattr(patient, attr)
        if have is None:
            parts.append(TruthValue.UNKNOWN)
            notes.append(f"{attr} unknown")
        else:
            parts.append(TruthValue.of(_fold(have) == _fold(wanted)))
            notes.append(f"{attr} {have!r} vs {wanted!r}")
    return all_of(parts), "; ".join(notes)


def _lab(block: LabCriterion, patient: PatientRecord, cfg: MatchConfig) -> tuple[TruthValue, str]:
    observations = [o for o in patient.labs if _fold(o.key) == _fold(block.key)]
    if not observations:
        return TruthValue.UNKNOWN, f"no {block.key} measurement"
    value = any_of(compare_lab(block, o, cfg) for o in observations)
    shown = ", ".join(f"{o.value}{' ' + o.unit if o.unit else ''}" for o in observations)
    unit = f" {block.unit}" if block.unit else ""
    return value, f"{block.key} {shown} vs {block.operator.value} {block.value}{unit}"


def _criterion(block: ConceptBlock, patient: PatientRecord, cfg: MatchConfig) -> tuple[TruthValue, str]:
    closed = patient.closed_world if cfg.closed_world_override is None else cfg.closed_world_override
    if isinstance(block, Disorder):
        value, reason = _history(block, patient.conditions, closed)
        if block.negation:
            return ~value, f"negated: {reason}"
        return value, reason
    if isinstance(block, Intervention):
        return _history(block, patient.interventions, closed)
    if isinstance(block, Demographics):
        return _demographics(block, patient)
    if isinstance(block, LabCriterion):
        return _lab(block, patient, cfg)
    raise TypeError(f"{type(block).__name__} is not a population criterion")


def eval_criterion(block: ConceptBlock, patient: PatientRecord, cfg: MatchConfig = MatchConfig()) -> TruthValue:
    return _criterion(block, patient, cfg)[0]


def _comparisons(graph: ExprGraph) -> dict[str, set[str]]:
    """Map each suggestion leaf to the leaves it is compared against."""

    def leaves_under(ident: str) -> set[str]:
        node = graph.node_map.get(ident)
        if node is None:
            return {ident}
        return set().union(*(leaves_under(i) for i in node.inputs))

    out: dict[str, set[str]] = {}
    for node in graph.nodes:
        if node.expr_type is ExprType.COMPARED_TO and len(node.inputs) == 2:
            left, right = (leaves_under(i) for i in node.inputs)
            for a in left:
                out.setdefault(a, set()).update(right)
            for b in right:
                out.setdefault(b, set()).update(left)
    return out


def match_recommendation(
    rec: Recommendation,
    patient: PatientRecord,
    cfg: MatchConfig = MatchConfig(),
    *,
    dnf: bool = False,
) -> MatchResult:
    """Decide whether *rec* applies to *patient*.

    Only the population is evaluated. The suggestion is reported when the
    verdict is TRUE or UNKNOWN; the outcome is never consulted. With
    ``dnf=True`` the population graph is normalized first, which must not
    change the verdict.
    """
    report = validate(rec)
    if not report.ok:
        raise E.CrtsError(E.INVALID_DOCUMENT, f"{rec.doc_id}: {report.errors[0]}")
    graph = build_expr_graph(rec.population)
    if dnf:
        graph = normalize_to_dnf(graph)
    trace = []
    for block in rec.population.blocks():
        value, reason = _criterion(block, patient, cfg)
        trace.append(TraceEntry(block.id, value, reason))
    verdict = eval_graph(graph, {t.block_id: t.value for t in trace})

    summary: tuple[SuggestedIntervention, ...] = ()
    text = ""
    if verdict is not TruthValue.FALSE:
        sgraph = build_expr_graph(rec.suggestion)
        compared = _comparisons(sgraph)
        summary = tuple(
            SuggestedIntervention(i, tuple(sorted(compared.get(i.id, ())))) for i in rec.suggestion.interventions
        )
        if sgraph.root is not None:
            text = sgraph.render({i.id: i.name for i in rec.suggestion.interventions})
    return MatchResult(rec.doc_id, verdict, tuple(trace), summary, text)
