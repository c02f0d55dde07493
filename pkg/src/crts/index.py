"""Faceted inverted index over recommendation corpora.

Queries are flat conjunctions of facet lookups, e.g.::

    population.disorder.cui=C0018801 AND suggestion.intervention.type=drug
    population.lab.LVEF<=40

A lab-value conjunct matches a document when one of its population lab
criteria for that key can hold together with the query bound, i.e. the two
intervals intersect.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from decimal import Decimal
from enum import Enum
from typing import Iterable, Iterator

from crts import errors as E
from crts.errors import CrtsError
from crts.model import LabCriterion, NumericRange, Operator, Recommendation, validate

INDEX_HEADER = "CRTSIDX 1"


class Section(Enum):
    POPULATION = "population"
    SUGGESTION = "suggestion"
    OUTCOME = "outcome"


class Facet(Enum):
    CONCEPT_ID = "concept_id"
    CONCEPT_NAME = "concept_name"
    LAB_KEY = "lab_key"
    INTERVENTION_TYPE = "intervention_type"
    DISORDER_NEGATED = "disorder_negated"


VALID_FACETS = {
    Section.POPULATION: set(Facet),
    Section.SUGGESTION: {Facet.CONCEPT_ID, Facet.CONCEPT_NAME, Facet.INTERVENTION_TYPE},
    Section.OUTCOME: {Facet.CONCEPT_NAME, Facet.LAB_KEY},
}


def normalize_token(text: str) -> str:
    return text.strip().casefold()


@dataclass(frozen=True)
class IndexKey:
    section: Section
    facet: Facet
    value: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", normalize_token(self.value))

    @property
    def sort_key(self) -> tuple[str, str, str]:
        return (self.section.value, self.facet.value, self.value)


@dataclass(frozen=True)
class LabBound:
    """A query-side bound such as ``<= 40``."""

    operator: Operator
    value: Decimal


@dataclass(frozen=True)
class Conjunct:
    key: IndexKey
    bound: LabBound | None = None


@dataclass(frozen=True)
class Query:
    conjuncts: tuple[Conjunct, ...]

    def __post_init__(self) -> None:
        if not self.conjuncts:
            raise CrtsError(E.QUERY_SYNTAX, "a query needs at least one conjunct")

    def extend(self, conjunct: Conjunct) -> Query:
        return Query(self.conjuncts + (conjunct,))


# ---------------------------------------------------------------------------
# postings
# ---------------------------------------------------------------------------


def document_keys(rec: Recommendation) -> Iterator[IndexKey]:
    """Every facet value a document is posted under."""
    pop, sug, out = Section.POPULATION, Section.SUGGESTION, Section.OUTCOME
    for d in rec.population.disorders:
        yield IndexKey(pop, Facet.CONCEPT_NAME, d.name)
        if d.concept is not None:
            yield IndexKey(pop, Facet.CONCEPT_ID, d.concept.dict_id)
        if d.negation:
            yield IndexKey(pop, Facet.DISORDER_NEGATED, d.name)
            if d.concept is not None:
                yield IndexKey(pop, Facet.DISORDER_NEGATED, d.concept.dict_id)
    for section, interventions in ((pop, rec.population.interventions), (sug, rec.suggestion.interventions)):
        for i in interventions:
            yield IndexKey(section, Facet.CONCEPT_NAME, i.name)
            if i.concept is not None:
                yield IndexKey(section, Facet.CONCEPT_ID, i.concept.dict_id)
            if i.intervention_type is not None:
                yield IndexKey(section, Facet.INTERVENTION_TYPE, i.intervention_type)
    for section, labs in ((pop, rec.population.lab_criteria), (out, rec.outcome.lab_criteria)):
        for lab in labs:
            yield IndexKey(section, Facet.LAB_KEY, lab.key)
    for g in rec.outcome.general:
        yield IndexKey(out, Facet.CONCEPT_NAME, g.outcome_text)


@dataclass(frozen=True)
class RecommendationIndex:
    postings: dict[IndexKey, tuple[str, ...]]
    docs: dict[str, Recommendation]

    def lookup(self, key: IndexKey) -> tuple[str, ...]:
        return self.postings.get(key, ())


def _freeze(postings: dict[IndexKey, set[str]], docs: dict[str, Recommendation]) -> RecommendationIndex:
    return RecommendationIndex(
        {k: tuple(sorted(postings[k])) for k in sorted(postings, key=lambda k: k.sort_key)},
        {d: docs[d] for d in sorted(docs)},
    )


def build_index(corpus: Iterable[Recommendation]) -> RecommendationIndex:
    """Index *corpus*. Raises ``DUPLICATE_DOC_ID`` and ``INVALID_DOCUMENT``."""
    postings: dict[IndexKey, set[str]] = {}
    docs: dict[str, Recommendation] = {}
    for rec in corpus:
        if rec.doc_id in docs:
            raise CrtsError(E.DUPLICATE_DOC_ID, f"document id {rec.doc_id!r} occurs twice")
        report = validate(rec)
        if not report.ok:
            raise CrtsError(E.INVALID_DOCUMENT, f"{rec.doc_id}: {report.errors[0]}")
        docs[rec.doc_id] = rec
        for key in document_keys(rec):
            postings.setdefault(key, set()).add(rec.doc_id)
    return _freeze(postings, docs)


def add(index: RecommendationIndex, rec: Recommendation) -> RecommendationIndex:
    """Return a new index that also covers *rec*."""
    if rec.doc_id in index.docs:
        raise CrtsError(E.DUPLICATE_DOC_ID, f"document id {rec.doc_id!r} occurs twice")
    single = build_index([rec])
    postings = {k: set(v) for k, v in index.postings.items()}
    for key, ids in single.postings.items():
        postings.setdefault(key, set()).update(ids)
    return _freeze(postings, {**index.docs, rec.doc_id: rec})


# ---------------------------------------------------------------------------
# lab interval satisfiability
# ---------------------------------------------------------------------------

_INF = None  # unbounded end


@dataclass(frozen=True)
class _Interval:
    low: Decimal | None
    low_closed: bool
    high: Decimal | None
    high_closed: bool

    def intersects(self, other: _Interval) -> bool:
        low, low_closed = self.low, self.low_closed
        if other.low is not None and (low is None or other.low > low):
            low, low_closed = other.low, other.low_closed
        elif other.low is not None and other.low == low:
            low_closed = low_closed and other.low_closed
        high, high_closed = self.high, self.high_closed
        if other.high is not None and (high is None or other.high < high):
            high, high_closed = other.high, other.high_closed
        elif other.high is not None and other.high == high:
            high_closed = high_closed and other.high_closed
        if low is None or high is None:
            return True
        return low < high or (low == high and low_closed and high_closed)


def _intervals(op: Operator, value: Decimal | NumericRange) -> list[_Interval]:
    if op is Operator.IN_RANGE:
        assert isinstance(value, NumericRange)
        return [_Interval(value.low, True, value.high, True)]
    assert isinstance(value, Decimal)
    return {
        Operator.LT: [_Interval(_INF, False, value, False)],
        Operator.LE: [_Interval(_INF, False, value, True)],
        Operator.GT: [_Interval(value, False, _INF, False)],
        Operator.GE: [_Interval(value, True, _INF, False)],
        Operator.EQ: [_Interval(value, True, value, True)],
        Operator.NE: [_Interval(_INF, False, value, False), _Interval(value, False, _INF, False)],
    }[op]


def lab_compatible(criterion: LabCriterion, bound: LabBound) -> bool:
    """Can the criterion and the query bound hold for the same value?"""
    wanted = _intervals(bound.operator, bound.value)
    return any(a.intersects(b) for a in _intervals(criterion.operator, criterion.value) for b in wanted)


# ---------------------------------------------------------------------------
# querying
# ---------------------------------------------------------------------------


def _check_key(key: IndexKey) -> None:
    if not isinstance(key.section, Section) or not isinstance(key.facet, Facet):
        raise CrtsError(E.UNKNOWN_FACET, f"unknown facet {key.section!r}/{key.facet!r}")
    if key.facet not in VALID_FACETS[key.section]:
        raise CrtsError(E.UNKNOWN_FACET, f"{key.section.value} has no {key.facet.value} facet")


def query(index: RecommendationIndex, q: Query) -> list[str]:
    """Doc ids satisfying every conjunct of *q*, sorted."""
    result: set[str] | None = None
    for c in q.conjuncts:
        _check_key(c.key)
        if c.bound is not None and c.key.facet is not Facet.LAB_KEY:
            raise CrtsError(E.UNKNOWN_FACET, "value bounds only apply to lab keys")
        hits = set(index.lookup(c.key))
        if c.bound is not None:
            hits = {
                d
                for d in hits
                if any(
                    normalize_token(lab.key) == c.key.value and lab_compatible(lab, c.bound)
                    for lab in _section_labs(index.docs[d], c.key.section)
                )
            }
        result = hits if result is None else result & hits
        if not result:
            break
    return sorted(result or ())


def _section_labs(rec: Recommendation, section: Section) -> tuple[LabCriterion, ...]:
    if section is Section.POPULATION:
        return rec.population.lab_criteria
    if section is Section.OUTCOME:
        return rec.outcome.lab_criteria
    return ()


_FIELD_FACETS = {
    ("disorder", "cui"): Facet.CONCEPT_ID,
    ("disorder", "name"): Facet.CONCEPT_NAME,
    ("disorder", "negated"): Facet.DISORDER_NEGATED,
    ("intervention", "cui"): Facet.CONCEPT_ID,
    ("intervention", "name"): Facet.CONCEPT_NAME,
    ("intervention", "type"): Facet.INTERVENTION_TYPE,
    ("lab", "key"): Facet.LAB_KEY,
    ("outcome", "name"): Facet.CONCEPT_NAME,
}
_SECTION_ELEMENTS = {
    Section.POPULATION: {"disorder", "intervention", "lab"},
    Section.SUGGESTION: {"intervention"},
    Section.OUTCOME: {"outcome", "lab"},
}
_QUERY_OPS = {"<": Operator.LT, "<=": Operator.LE, ">": Operator.GT, ">=": Operator.GE, "=": Operator.EQ}

_FACET_RE = re.compile(r"(\w+)\.(\w+)\.(\w+)\s*=\s*(.+)", re.S)
_AND_RE = re.compile(r"\s+AND(?:\s+|$)")
_LAB_RE = re.compile(r"population\.lab\.(\"[^\"]*\"|[^<>=!\"]+?)\s*(<=|>=|<|>|=)\s*([+-]?\d+(?:\.\d+)?)", re.S)


def _split_conjuncts(text: str) -> list[str]:
    parts, buf, quoted = [], [], False
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == '"':
            quoted = not quoted
        m = None if quoted or not buf else _AND_RE.match(text, i)
        if m:
            parts.append("".join(buf))
            buf = []
            i = m.end()
            continue
        buf.append(ch)
        i += 1
    if quoted:
        raise CrtsError(E.QUERY_SYNTAX, "unterminated quote")
    parts.append("".join(buf))
    return [p.strip() for p in parts]


def _unquote(token: str) -> str:
    token = token.strip()
    if len(token) >= 2 and token[0] == token[-1] == '"':
        return token[1:-1]
    if '"' in token:
        raise CrtsError(E.QUERY_SYNTAX, f"stray quote in {token!r}")
    return token


def parse_query(text: str) -> Query:
    """Parse ``conjunct (AND conjunct)*``.

    ``path=token`` looks up a facet, where path is
    ``{population|suggestion|outcome}.{disorder|intervention|lab|outcome}.{cui|name|type|key|negated}``.
    ``population.lab.<key> <op> <number>`` bounds a lab value, op being one of
    ``< <= > >= =``. Tokens may be double-quoted to protect spaces or ``AND``.
    """
    if not text.strip():
        raise CrtsError(E.QUERY_SYNTAX, "empty query")
    conjuncts = []
    for part in _split_conjuncts(text):
        if not part:
            raise CrtsError(E.QUERY_SYNTAX, f"empty conjunct in {text!r}")
        m = _FACET_RE.fullmatch(part)
        if m and (m.group(2), m.group(3)) in _FIELD_FACETS:
            section_name, element, fieldname, token = m.groups()
            try:
                section = Section(section_name)
            except ValueError:
                raise CrtsError(E.QUERY_SYNTAX, f"unknown section {section_name!r}") from None
            if element not in _SECTION_ELEMENTS[section]:
                raise CrtsError(E.QUERY_SYNTAX, f"{section_name} has no {element} elements")
            value = _unquote(token)
            if not value.strip():
                raise CrtsError(E.QUERY_SYNTAX, f"empty value in {part!r}")
            conjuncts.append(Conjunct(IndexKey(section, _FIELD_FACETS[element, fieldname], value)))
            continue
        m = _LAB_RE.fullmatch(part)
        if m:
            key = _unquote(m.group(1))
            if not key.strip():
                raise CrtsError(E.QUERY_SYNTAX, f"empty lab key in {part!r}")
            bound = LabBound(_QUERY_OPS[m.group(2)], Decimal(m.group(3)))
            conjuncts.append(Conjunct(IndexKey(Section.POPULATION, Facet.LAB_KEY, key), bound))
            continue
        raise CrtsError(E.QUERY_SYNTAX, f"cannot parse conjunct {part!r}")
    return Query(tuple(conjuncts))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def dump_index(index: RecommendationIndex) -> bytes:
    """Serialize as the header line, one JSON line per document, then one
    JSON line per posting, all in sorted order."""
    from crts.serial import to_json_obj

    lines = [INDEX_HEADER]
    for doc_id, rec in index.docs.items():
        lines.append(json.dumps(["doc", doc_id, to_json_obj(rec)], sort_keys=True, ensure_ascii=False))
    for key, ids in index.postings.items():
        lines.append(json.dumps(["post", *key.sort_key, list(ids)], ensure_ascii=False))
    return ("\n".join(lines) + "\n").encode("utf-8")


def load_index(data: bytes) -> RecommendationIndex:
    """Read an index file and check its postings against its documents."""
    from crts.serial import from_json_obj

    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CrtsError(E.INDEX_FORMAT, str(exc)) from None
    lines = text.split("\n")
    if not lines or lines[0] != INDEX_HEADER:
        raise CrtsError(E.INDEX_FORMAT, f"missing {INDEX_HEADER!r} header")
    docs = []
    stored: dict[IndexKey, tuple[str, ...]] = {}
    for n, line in enumerate(lines[1:], 2):
        if not line:
            continue
        try:
            entry = json.loads(line)
            if entry[0] == "doc":
                docs.append(from_json_obj(entry[2]))
            elif entry[0] == "post":
                key = IndexKey(Section(entry[1]), Facet(entry[2]), entry[3])
                stored[key] = tuple(entry[4])
            else:
                raise ValueError(f"unknown record type {entry[0]!r}")
        except (ValueError, IndexError, TypeError, CrtsError) as exc:
            raise CrtsError(E.INDEX_FORMAT, f"line {n}: {exc}") from None
    index = build_index(docs)
    if index.postings != stored:
        raise CrtsError(E.INDEX_FORMAT, "postings do not match the stored documents")
    return index
