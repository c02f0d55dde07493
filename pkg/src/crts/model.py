"""Domain model for clinical recommendations and document validation.

A recommendation is split into three sections. Population holds the
criteria a patient must meet, Suggestion holds the advised interventions and
Outcome holds what following the advice is expected to achieve. Every block in
a document carries an id; expressions combine ids with AND / OR (and, in
Suggestion only, COMPARED_TO) and publish their result under a fresh id.

All types are frozen dataclasses holding tuples, so documents compare
structurally and can be shared freely. Construction never validates: use
:func:`validate` to get a :class:`ValidationReport`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from typing import Iterator, Union

from crts import errors as E


class TimePeriod(Enum):
    CURRENT = "current"
    PAST = "past"
    UNSPECIFIED = "unspecified"


class Operator(Enum):
    """Comparison operators; ``value`` is the canonical wire token."""

    LT = "<"
    LE = "<="
    GT = ">"
    GE = ">="
    EQ = "="
    NE = "!="
    IN_RANGE = "in"

    @classmethod
    def from_token(cls, token: str) -> Operator:
        try:
            return _OPERATOR_TOKENS[token.strip()]
        except KeyError:
            raise E.CrtsError(E.VALUE_PARSE, f"unknown operator token {token!r}") from None


_OPERATOR_TOKENS = {op.value: op for op in Operator}
_OPERATOR_TOKENS.update({"≤": Operator.LE, "≥": Operator.GE, "≠": Operator.NE})


class ExprType(Enum):
    AND = "AND"
    OR = "OR"
    COMPARED_TO = "COMPARED_TO"


@dataclass(frozen=True)
class NumericRange:
    """Inclusive interval ``low..high``."""

    low: Decimal
    high: Decimal

    def __str__(self) -> str:
        return f"{self.low}..{self.high}"


NumericValue = Union[Decimal, NumericRange]


@dataclass(frozen=True)
class NumericConstraint:
    operator: Operator
    value: NumericValue


@dataclass(frozen=True)
class DictionaryRef:
    dictionary: str
    dict_id: str


@dataclass(frozen=True)
class Demographics:
    id: str
    age: NumericConstraint | None = None
    gender: str | None = None
    ethnicity: str | None = None
    country: str | None = None


@dataclass(frozen=True)
class Disorder:
    id: str
    name: str
    concept: DictionaryRef | None = None
    time_period: TimePeriod = TimePeriod.UNSPECIFIED
    negation: bool = False


@dataclass(frozen=True)
class Intervention:
    id: str
    name: str
    intervention_type: str | None = None
    concept: DictionaryRef | None = None
    time_period: TimePeriod = TimePeriod.UNSPECIFIED
    modifier_text: str | None = None
    grade: str | None = None


@dataclass(frozen=True)
class LabCriterion:
    id: str
    key: str
    value: NumericValue
    operator: Operator
    unit: str | None = None
    temporal: str | None = None


@dataclass(frozen=True)
class GeneralOutcome:
    id: str
    outcome_text: str


ConceptBlock = Union[Demographics, Disorder, Intervention, LabCriterion, GeneralOutcome]


@dataclass(frozen=True)
class ExprNode:
    expr_type: ExprType
    inputs: tuple[str, ...]
    output: str


@dataclass(frozen=True)
class Population:
    demographics: tuple[Demographics, ...] = ()
    disorders: tuple[Disorder, ...] = ()
    interventions: tuple[Intervention, ...] = ()
    lab_criteria: tuple[LabCriterion, ...] = ()
    exprs: tuple[ExprNode, ...] = ()

    def blocks(self) -> tuple[ConceptBlock, ...]:
        return (*self.demographics, *self.disorders, *self.interventions, *self.lab_criteria)


@dataclass(frozen=True)
class Suggestion:
    interventions: tuple[Intervention, ...] = ()
    exprs: tuple[ExprNode, ...] = ()

    def blocks(self) -> tuple[ConceptBlock, ...]:
        return self.interventions


@dataclass(frozen=True)
class Outcome:
    general: tuple[GeneralOutcome, ...] = ()
    lab_criteria: tuple[LabCriterion, ...] = ()

    def blocks(self) -> tuple[ConceptBlock, ...]:
        return (*self.general, *self.lab_criteria)


@dataclass(frozen=True)
class Source:
    """Provenance: where the recommendation came from and what it cites."""

    origin: str | None = None
    citations: tuple[str, ...] = ()


@dataclass(frozen=True)
class Recommendation:
    doc_id: str
    population: Population = field(default_factory=Population)
    suggestion: Suggestion = field(default_factory=Suggestion)
    outcome: Outcome = field(default_factory=Outcome)
    source_text: str | None = None
    source: Source | None = None

    def blocks(self) -> Iterator[ConceptBlock]:
        yield from self.population.blocks()
        yield from self.suggestion.blocks()
        yield from self.outcome.blocks()


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Issue:
    code: str
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.code} {self.path}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple[Issue, ...] = ()
    warnings: tuple[Issue, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.errors

    def codes(self) -> set[str]:
        return {issue.code for issue in self.errors}


_TOKEN_RE = re.compile(r"\S+")
_CUI_RE = re.compile(r"C\d{7}")
# outside the XML 1.0 Char production; such text cannot be serialized
_ILLEGAL_XML_RE = re.compile("[^\t\n\r\x20-\ud7ff\ue000-\ufffd\U00010000-\U0010ffff]")

ROOT = "/recommendation"


def _is_token(value: str) -> bool:
    return bool(value) and _TOKEN_RE.fullmatch(value) is not None


def _block_kind(block: ConceptBlock) -> str:
    return {
        Demographics: "demographics",
        Disorder: "disorder",
        Intervention: "intervention",
        LabCriterion: "labResults",
        GeneralOutcome: "generalOutcome",
    }[type(block)]


def section_items(rec: Recommendation) -> Iterator[tuple[str, str, object]]:
    """Yield ``(section, path, item)`` for every block and expression, in
    canonical order with XPath-style 1-based element paths."""
    for section_name, section in (
        ("population", rec.population),
        ("suggestion", rec.suggestion),
        ("outcome", rec.outcome),
    ):
        counters: dict[str, int] = {}
        items = list(section.blocks()) + list(getattr(section, "exprs", ()))
        for item in items:
            kind = "expr" if isinstance(item, ExprNode) else _block_kind(item)
            counters[kind] = counters.get(kind, 0) + 1
            yield section_name, f"{ROOT}/{section_name}/{kind}[{counters[kind]}]", item


class _Checker:
    def __init__(self) -> None:
        self.errors: list[Issue] = []
        self.warnings: list[Issue] = []

    def error(self, code: str, path: str, message: str) -> None:
        self.errors.append(Issue(code, path, message))

    def warn(self, code: str, path: str, message: str) -> None:
        self.warnings.append(Issue(code, path, message))

    def text(self, path: str, value: str | None, *, required: bool = False) -> None:
        if value is None:
            if required:
                self.error(E.EMPTY_FIELD, path, "required text is missing")
            return
        if required and not value.strip():
            self.error(E.EMPTY_FIELD, path, "required text is empty")
        if _ILLEGAL_XML_RE.search(value):
            self.error(E.ILLEGAL_CHARACTER, path, "text contains characters XML cannot carry")

    def block_id(self, path: str, value: str) -> None:
        if not _is_token(value):
            self.error(E.BAD_ID, path, f"block id {value!r} must be a non-empty token without whitespace")
        else:
            self.text(path, value)

    def numeric(self, path: str, constraint_op: Operator, value: NumericValue) -> None:
        is_range = isinstance(value, NumericRange)
        if (constraint_op is Operator.IN_RANGE) != is_range:
            self.error(
                E.OPERATOR_VALUE_MISMATCH,
                path,
                "operator 'in' requires a range value and a range value requires 'in'",
            )
        values = (value.low, value.high) if is_range else (value,)
        if any(not v.is_finite() for v in values):
            self.error(E.BAD_RANGE, path, "numeric values must be finite")
        elif is_range and value.low > value.high:
            self.error(E.BAD_RANGE, path, f"range {value} has low > high")

    def concept(self, path: str, ref: DictionaryRef | None) -> None:
        if ref is None:
            return
        if not ref.dictionary.strip() or not ref.dict_id.strip():
            self.error(E.EMPTY_FIELD, path, "dictionary reference needs both dictionary and id")
            return
        self.text(path, ref.dictionary)
        self.text(path, ref.dict_id)
        if ref.dictionary == "UMLS" and not _CUI_RE.fullmatch(ref.dict_id):
            self.warn(E.BAD_CUI_SHAPE, path, f"{ref.dict_id!r} does not look like a UMLS CUI (C + 7 digits)")


def _check_block(c: _Checker, path: str, block: ConceptBlock) -> None:
    c.block_id(f"{path}/id", block.id)
    if isinstance(block, Demographics):
        if block.age is None and block.gender is None and block.ethnicity is None and block.country is None:
            c.error(E.EMPTY_DEMOGRAPHICS, path, "demographics block sets no attribute")
        if block.age is not None:
            c.numeric(f"{path}/age", block.age.operator, block.age.value)
            v = block.age.value
            lows = (v.low,) if isinstance(v, NumericRange) else (v,)
            if any(x.is_finite() and x < 0 for x in lows):
                c.error(E.BAD_RANGE, f"{path}/age", "age must be >= 0")
        for name in ("gender", "ethnicity", "country"):
            value = getattr(block, name)
            c.text(f"{path}/{name}", value, required=value is not None)
    elif isinstance(block, Disorder):
        c.text(f"{path}/name", block.name, required=True)
        c.concept(f"{path}/UMLSDictId", block.concept)
    elif isinstance(block, Intervention):
        c.text(f"{path}/name", block.name, required=True)
        c.text(f"{path}/type", block.intervention_type)
        c.concept(f"{path}/dictId", block.concept)
        c.text(f"{path}/modifier", block.modifier_text)
        if block.grade is not None and not _is_token(block.grade):
            c.error(E.EMPTY_FIELD, f"{path}/grade", "grade must be a non-empty token")
        c.text(f"{path}/grade", block.grade)
    elif isinstance(block, LabCriterion):
        c.text(f"{path}/key", block.key, required=True)
        c.numeric(f"{path}/value", block.operator, block.value)
        c.text(f"{path}/unit", block.unit)
        c.text(f"{path}/temporal", block.temporal)
    elif isinstance(block, GeneralOutcome):
        c.text(f"{path}/outcomeText", block.outcome_text, required=True)


def _check_exprs(c: _Checker, section: str, items: list[tuple[str, object]]) -> None:
    local_ids = {item.output if isinstance(item, ExprNode) else item.id for _, item in items}
    exprs = [(path, item) for path, item in items if isinstance(item, ExprNode)]
    for path, node in exprs:
        if node.expr_type is ExprType.COMPARED_TO:
            if section == "population":
                c.error(E.COMPARISON_IN_POPULATION, path, "COMPARED_TO is only allowed in suggestion")
            if len(node.inputs) != 2:
                c.error(E.BAD_ARITY, path, "COMPARED_TO takes exactly 2 inputs")
        elif len(node.inputs) < 2:
            c.error(E.BAD_ARITY, path, f"{node.expr_type.value} needs at least 2 inputs")
        for ref in node.inputs:
            if not _is_token(ref):
                c.error(E.BAD_ID, f"{path}/inputConceptId", f"input {ref!r} is not a token")
            elif ref not in local_ids:
                c.error(E.DANGLING_REF, f"{path}/inputConceptId", f"input {ref!r} names no block or expression in {section}")

    # cycles among expression outputs
    producers = {node.output: node for _, node in exprs}
    state: dict[str, int] = {}
    reported: set[str] = set()

    def visit(out: str, trail: list[str]) -> None:
        state[out] = 1
        trail.append(out)
        for ref in producers[out].inputs:
            if ref not in producers:
                continue
            if state.get(ref) == 1:
                cycle = trail[trail.index(ref):]
                key = min(cycle)
                if key not in reported:
                    reported.add(key)
                    path = next(p for p, n in exprs if n.output == ref)
                    c.error(E.CYCLE_DETECTED, path, "expression cycle: " + " -> ".join(cycle + [ref]))
            elif ref not in state:
                visit(ref, trail)
        trail.pop()
        state[out] = 2

    for out in producers:
        if out not in state:
            visit(out, [])


def validate(rec: Recommendation) -> ValidationReport:
    """Check every document invariant; violations are reported, never raised."""
    c = _Checker()
    if not _is_token(rec.doc_id):
        c.error(E.BAD_ID, ROOT, f"document id {rec.doc_id!r} must be a non-empty token")
    c.text(f"{ROOT}/sourceText", rec.source_text)
    if rec.source is not None:
        c.text(f"{ROOT}/source/origin", rec.source.origin)
        for i, cite in enumerate(rec.source.citations, 1):
            c.text(f"{ROOT}/source/citation[{i}]", cite, required=True)

    if not rec.population.blocks() and not rec.suggestion.blocks():
        c.error(E.EMPTY_DOCUMENT, ROOT, "population and suggestion are both empty")

    seen: dict[str, list[str]] = {}
    by_section: dict[str, list[tuple[str, object]]] = {"population": [], "suggestion": [], "outcome": []}
    for section, path, item in section_items(rec):
        by_section[section].append((path, item))
        if isinstance(item, ExprNode):
            seen.setdefault(item.output, []).append(f"{path}/outputConceptId")
            c.block_id(f"{path}/outputConceptId", item.output)
        else:
            seen.setdefault(item.id, []).append(f"{path}/id")
            _check_block(c, path, item)

    for ident, paths in seen.items():
        if len(paths) > 1:
            for p in paths:
                c.error(E.DUPLICATE_ID, p, f"id {ident!r} is used {len(paths)} times")

    for section, items in by_section.items():
        _check_exprs(c, section, items)

    return ValidationReport(tuple(c.errors), tuple(c.warnings))
