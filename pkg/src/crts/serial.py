"""Reading and writing CRTS documents and patient records.

The XML form follows the element vocabulary of the type system, with three
extensions: ``unit`` and ``modifier`` children on lab results and
interventions, and ``sourceText`` / ``source`` children of the root. The
document id lives in the root's ``id`` attribute. Canonical XML is UTF-8,
two-space indented, LF line endings, with every defaulted field written out.

JSON mirrors the model one-to-one using the same element names as keys.
Numeric criterion values are kept as strings there so the decimal text
survives a round trip through either format.
"""

from __future__ import annotations

import json
import re
import xml.etree.ElementTree as ET
from decimal import Decimal
from typing import Any, Callable

from crts import errors as E
from crts.errors import CrtsError
from crts.matching import LabObservation, PatientFact, PatientRecord
from crts.model import (
    ROOT,
    Demographics,
    DictionaryRef,
    Disorder,
    ExprNode,
    ExprType,
    GeneralOutcome,
    Intervention,
    Issue,
    LabCriterion,
    NumericConstraint,
    NumericRange,
    NumericValue,
    Operator,
    Outcome,
    Population,
    Recommendation,
    Source,
    Suggestion,
    TimePeriod,
    validate,
)

DEFAULT_DOC_ID = "unnamed"

_NUMBER_RE = re.compile(r"[+-]?\d+(?:\.\d+)?")
_RANGE_RE = re.compile(r"([+-]?\d+(?:\.\d+)?)\s*\.\.\s*([+-]?\d+(?:\.\d+)?)")

# fields of each block element, in canonical order
_BLOCK_FIELDS = {
    "demographics": ("id", "age", "gender", "ethnicity", "country"),
    "disorder": ("id", "name", "dictionary", "UMLSDictId", "dictId", "timeperiod", "negation"),
    "intervention": ("id", "name", "type", "dictionary", "UMLSDictId", "dictId", "timeperiod", "modifier", "grade"),
    "labResults": ("id", "key", "value", "unit", "operator", "temporal"),
    "generalOutcome": ("id", "outcomeText"),
    "expr": ("inputConceptId", "outputConceptId"),
}
_SECTION_CHILDREN = {
    "population": ("demographics", "disorder", "intervention", "labResults", "expr"),
    "suggestion": ("intervention", "expr"),
    "outcome": ("generalOutcome", "labResults"),
}
_VOCABULARY = (
    {"recommendation", "sourceText", "source", "origin", "citation"}
    | set(_SECTION_CHILDREN)
    | set(_BLOCK_FIELDS)
    | {f for fields in _BLOCK_FIELDS.values() for f in fields}
)


def parse_number(text: str) -> Decimal:
    text = text.strip()
    if not _NUMBER_RE.fullmatch(text):
        raise CrtsError(E.VALUE_PARSE, f"{text!r} is not a decimal number")
    return Decimal(text)


def parse_value(text: str) -> NumericValue:
    """Parse ``"40"`` or an inclusive range ``"0.5..0.8"``."""
    m = _RANGE_RE.fullmatch(text.strip())
    if m:
        return NumericRange(Decimal(m.group(1)), Decimal(m.group(2)))
    return parse_number(text)


def format_value(value: NumericValue) -> str:
    return str(value)


def _default_operator(value: NumericValue) -> Operator:
    return Operator.IN_RANGE if isinstance(value, NumericRange) else Operator.EQ


def _time_period(text: str) -> TimePeriod:
    try:
        return TimePeriod(text.strip().lower())
    except ValueError:
        raise CrtsError(E.VALUE_PARSE, f"unknown time period {text!r}") from None


def _boolean(text: str) -> bool:
    value = text.strip().lower()
    if value not in ("true", "false"):
        raise CrtsError(E.VALUE_PARSE, f"expected true or false, got {text!r}")
    return value == "true"


def _expr_type(text: str) -> ExprType:
    try:
        return ExprType(text.strip().upper())
    except ValueError:
        raise CrtsError(E.VALUE_PARSE, f"unknown expression type {text!r}") from None


def _concept(fields: dict[str, str], path: str) -> DictionaryRef | None:
    dictionary, umls, dict_id = fields.get("dictionary"), fields.get("UMLSDictId"), fields.get("dictId")
    if umls is not None:
        if dict_id is not None or (dictionary is not None and dictionary.strip() != "UMLS"):
            raise CrtsError(E.SCHEMA_VIOLATION, "UMLSDictId cannot be combined with another dictionary id", path)
        return DictionaryRef("UMLS", umls.strip())
    if dictionary is None and dict_id is None:
        return None
    if dictionary is None or dict_id is None:
        raise CrtsError(E.SCHEMA_VIOLATION, "dictionary and dictId must appear together", path)
    return DictionaryRef(dictionary.strip(), dict_id.strip())


# ---------------------------------------------------------------------------
# XML
# ---------------------------------------------------------------------------


class _XmlReader:
    def __init__(self, strict: bool, warnings: list[Issue] | None):
        self.strict = strict
        self.warnings = warnings

    def unknown(self, path: str, what: str) -> None:
        if self.strict:
            raise CrtsError(E.SCHEMA_VIOLATION, f"unknown {what}", path)
        if self.warnings is not None:
            self.warnings.append(Issue(E.SCHEMA_VIOLATION, path, f"ignored unknown {what}"))

    def check_attrs(self, elem: ET.Element, path: str, allowed: tuple[str, ...] = ()) -> None:
        for name in sorted(elem.attrib):
            if name not in allowed:
                self.unknown(path, f"attribute {name!r}")

    def check_no_text(self, elem: ET.Element, path: str) -> None:
        if (elem.text or "").strip():
            self.unknown(path, "text content")
        for child in elem:
            if (child.tail or "").strip():
                self.unknown(path, "text content")

    def leaf_fields(self, elem: ET.Element, kind: str, path: str) -> tuple[dict[str, str], dict[str, dict[str, str]]]:
        """Collect ``tag -> text`` for the leaf children of a block element."""
        self.check_attrs(elem, path, ("type",) if kind == "expr" else ())
        self.check_no_text(elem, path)
        allowed = _BLOCK_FIELDS[kind]
        fields: dict[str, str] = {}
        attrs: dict[str, dict[str, str]] = {}
        for child in elem:
            child_path = f"{path}/{child.tag}"
            if child.tag not in allowed:
                if child.tag in _VOCABULARY:
                    raise CrtsError(E.SCHEMA_VIOLATION, f"<{child.tag}> is not allowed inside <{kind}>", child_path)
                self.unknown(child_path, f"element <{child.tag}>")
                continue
            if child.tag in fields:
                raise CrtsError(E.SCHEMA_VIOLATION, f"<{child.tag}> appears more than once", child_path)
            if len(child):
                raise CrtsError(E.SCHEMA_VIOLATION, f"<{child.tag}> must not contain elements", child_path)
            self.check_attrs(child, child_path, ("operator",) if child.tag == "age" else ())
            fields[child.tag] = child.text or ""
            attrs[child.tag] = dict(child.attrib)
        return fields, attrs

    @staticmethod
    def required(fields: dict[str, str], tag: str, path: str) -> str:
        if tag not in fields:
            raise CrtsError(E.SCHEMA_VIOLATION, f"missing required <{tag}>", path)
        return fields[tag]

    def block(self, elem: ET.Element, kind: str, path: str) -> Any:
        f, attrs = self.leaf_fields(elem, kind, path)
        try:
            return self._block(f, attrs, kind, path)
        except CrtsError as exc:
            if exc.path is None:
                raise CrtsError(exc.code, exc.message, path) from None
            raise

    def _block(self, f: dict[str, str], attrs: dict[str, dict[str, str]], kind: str, path: str) -> Any:
        req = lambda tag: self.required(f, tag, path)  # noqa: E731
        opt = f.get
        block_id = req("id").strip()
        if kind == "demographics":
            age = None
            if "age" in f:
                value = parse_value(f["age"])
                op_token = attrs["age"].get("operator")
                op = Operator.from_token(op_token) if op_token is not None else _default_operator(value)
                age = NumericConstraint(op, value)
            return Demographics(block_id, age, opt("gender"), opt("ethnicity"), opt("country"))
        if kind == "disorder":
            return Disorder(
                block_id,
                req("name"),
                _concept(f, path),
                _time_period(f["timeperiod"]) if "timeperiod" in f else TimePeriod.UNSPECIFIED,
                _boolean(f["negation"]) if "negation" in f else False,
            )
        if kind == "intervention":
            return Intervention(
                block_id,
                req("name"),
                opt("type"),
                _concept(f, path),
                _time_period(f["timeperiod"]) if "timeperiod" in f else TimePeriod.UNSPECIFIED,
                opt("modifier"),
                f["grade"].strip() if "grade" in f else None,
            )
        if kind == "labResults":
            return LabCriterion(
                block_id,
                req("key"),
                parse_value(req("value")),
                Operator.from_token(req("operator")),
                opt("unit"),
                opt("temporal"),
            )
        return GeneralOutcome(block_id, req("outcomeText"))

    def expr(self, elem: ET.Element, path: str) -> ExprNode:
        f, _ = self.leaf_fields(elem, "expr", path)
        if "type" not in elem.attrib:
            raise CrtsError(E.SCHEMA_VIOLATION, "expression needs a type attribute", path)
        try:
            expr_type = _expr_type(elem.attrib["type"])
        except CrtsError as exc:
            raise CrtsError(exc.code, exc.message, path) from None
        inputs = tuple(t for t in self.required(f, "inputConceptId", path).split() if t)
        output = self.required(f, "outputConceptId", path).strip()
        return ExprNode(expr_type, inputs, output)

    def section(self, elem: ET.Element, name: str, path: str) -> dict[str, list]:
        self.check_attrs(elem, path)
        self.check_no_text(elem, path)
        allowed = _SECTION_CHILDREN[name]
        items: dict[str, list] = {kind: [] for kind in allowed}
        for child in elem:
            kind = child.tag
            child_path = f"{path}/{kind}[{len(items.get(kind, [])) + 1}]"
            if kind not in allowed:
                if kind in _VOCABULARY:
                    raise CrtsError(E.SCHEMA_VIOLATION, f"<{kind}> is not allowed inside <{name}>", child_path)
                self.unknown(child_path, f"element <{kind}>")
                continue
            if kind == "expr":
                items[kind].append(self.expr(child, child_path))
            else:
                items[kind].append(self.block(child, kind, child_path))
        return items

    def source(self, elem: ET.Element, path: str) -> Source:
        self.check_attrs(elem, path)
        self.check_no_text(elem, path)
        origin = None
        citations = []
        for child in elem:
            child_path = f"{path}/{child.tag}"
            if child.tag not in ("origin", "citation"):
                if child.tag in _VOCABULARY:
                    raise CrtsError(E.SCHEMA_VIOLATION, f"<{child.tag}> is not allowed inside <source>", child_path)
                self.unknown(child_path, f"element <{child.tag}>")
                continue
            if len(child):
                raise CrtsError(E.SCHEMA_VIOLATION, f"<{child.tag}> must not contain elements", child_path)
            self.check_attrs(child, child_path)
            if child.tag == "origin":
                if origin is not None:
                    raise CrtsError(E.SCHEMA_VIOLATION, "<origin> appears more than once", child_path)
                origin = child.text or ""
            else:
                citations.append(child.text or "")
        return Source(origin, tuple(citations))

    def document(self, root: ET.Element, default_doc_id: str) -> Recommendation:
        if root.tag != "recommendation":
            raise CrtsError(E.SCHEMA_VIOLATION, f"root element must be <recommendation>, not <{root.tag}>", f"/{root.tag}")
        self.check_attrs(root, ROOT, ("id",))
        self.check_no_text(root, ROOT)
        parts: dict[str, Any] = {}
        for child in root:
            path = f"{ROOT}/{child.tag}"
            if child.tag not in ("sourceText", "source", *_SECTION_CHILDREN):
                if child.tag in _VOCABULARY:
                    raise CrtsError(E.SCHEMA_VIOLATION, f"<{child.tag}> is not allowed inside <recommendation>", path)
                self.unknown(path, f"element <{child.tag}>")
                continue
            if child.tag in parts:
                raise CrtsError(E.SCHEMA_VIOLATION, f"<{child.tag}> appears more than once", path)
            if child.tag == "sourceText":
                if len(child):
                    raise CrtsError(E.SCHEMA_VIOLATION, "<sourceText> must not contain elements", path)
                self.check_attrs(child, path)
                parts["sourceText"] = child.text or ""
            elif child.tag == "source":
                parts["source"] = self.source(child, path)
            else:
                parts[child.tag] = self.section(child, child.tag, path)

        pop = parts.get("population", {k: [] for k in _SECTION_CHILDREN["population"]})
        sug = parts.get("suggestion", {k: [] for k in _SECTION_CHILDREN["suggestion"]})
        out = parts.get("outcome", {k: [] for k in _SECTION_CHILDREN["outcome"]})
        if not any(pop[k] for k in ("demographics", "disorder", "intervention", "labResults")) and not sug["intervention"]:
            raise CrtsError(E.SCHEMA_VIOLATION, "document has no population or suggestion blocks", ROOT)
        return Recommendation(
            doc_id=root.attrib.get("id", default_doc_id).strip(),
            population=Population(
                tuple(pop["demographics"]),
                tuple(pop["disorder"]),
                tuple(pop["intervention"]),
                tuple(pop["labResults"]),
                tuple(pop["expr"]),
            ),
            suggestion=Suggestion(tuple(sug["intervention"]), tuple(sug["expr"])),
            outcome=Outcome(tuple(out["generalOutcome"]), tuple(out["labResults"])),
            source_text=parts.get("sourceText"),
            source=parts.get("source"),
        )


def parse_xml(
    data: bytes,
    *,
    strict: bool = True,
    warnings: list[Issue] | None = None,
    default_doc_id: str = DEFAULT_DOC_ID,
) -> Recommendation:
    """Parse CRTS-XML bytes into a :class:`Recommendation`.

    In lenient mode (``strict=False``) unknown elements and attributes are
    skipped and reported into *warnings*; misplaced known elements are always
    a ``SCHEMA_VIOLATION``. Absent ``negation`` reads as false and absent
    ``timeperiod`` as unspecified. The document is not validated here.
    """
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise CrtsError(E.XML_MALFORMED, str(exc)) from None
    return _XmlReader(strict, warnings).document(root, default_doc_id)


def _esc_text(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace("\r", "&#13;")


def _esc_attr(text: str) -> str:
    return (
        _esc_text(text)
        .replace('"', "&quot;")
        .replace("\t", "&#9;")
        .replace("\n", "&#10;")
    )


class _XmlWriter:
    def __init__(self) -> None:
        self.lines: list[str] = []

    def leaf(self, depth: int, tag: str, text: str, attrs: dict[str, str] | None = None) -> None:
        attr_text = "".join(f' {k}="{_esc_attr(v)}"' for k, v in sorted((attrs or {}).items()))
        self.lines.append(f"{'  ' * depth}<{tag}{attr_text}>{_esc_text(text)}</{tag}>")

    def open(self, depth: int, tag: str, attrs: dict[str, str] | None = None) -> None:
        attr_text = "".join(f' {k}="{_esc_attr(v)}"' for k, v in sorted((attrs or {}).items()))
        self.lines.append(f"{'  ' * depth}<{tag}{attr_text}>")

    def close(self, depth: int, tag: str) -> None:
        self.lines.append(f"{'  ' * depth}</{tag}>")

    def empty(self, depth: int, tag: str) -> None:
        self.lines.append(f"{'  ' * depth}<{tag}/>")

    def concept(self, depth: int, ref: DictionaryRef | None, umls_form: bool) -> None:
        if ref is None:
            return
        if umls_form and ref.dictionary == "UMLS":
            self.leaf(depth, "UMLSDictId", ref.dict_id)
        else:
            self.leaf(depth, "dictionary", ref.dictionary)
            self.leaf(depth, "dictId", ref.dict_id)

    def block(self, depth: int, block: Any) -> None:
        d = depth + 1
        if isinstance(block, Demographics):
            self.open(depth, "demographics")
            self.leaf(d, "id", block.id)
            if block.age is not None:
                self.leaf(d, "age", format_value(block.age.value), {"operator": block.age.operator.value})
            for name in ("gender", "ethnicity", "country"):
                if getattr(block, name) is not None:
                    self.leaf(d, name, getattr(block, name))
            self.close(depth, "demographics")
        elif isinstance(block, Disorder):
            self.open(depth, "disorder")
            self.leaf(d, "id", block.id)
            self.leaf(d, "name", block.name)
            self.concept(d, block.concept, umls_form=True)
            self.leaf(d, "timeperiod", block.time_period.value)
            self.leaf(d, "negation", "true" if block.negation else "false")
            self.close(depth, "disorder")
        elif isinstance(block, Intervention):
            self.open(depth, "intervention")
            self.leaf(d, "id", block.id)
            self.leaf(d, "name", block.name)
            if block.intervention_type is not None:
                self.leaf(d, "type", block.intervention_type)
            self.concept(d, block.concept, umls_form=False)
            self.leaf(d, "timeperiod", block.time_period.value)
            if block.modifier_text is not None:
                self.leaf(d, "modifier", block.modifier_text)
            if block.grade is not None:
                self.leaf(d, "grade", block.grade)
            self.close(depth, "intervention")
        elif isinstance(block, LabCriterion):
            self.open(depth, "labResults")
            self.leaf(d, "id", block.id)
            self.leaf(d, "key", block.key)
            self.leaf(d, "value", format_value(block.value))
            if block.unit is not None:
                self.leaf(d, "unit", block.unit)
            self.leaf(d, "operator", block.operator.value)
            if block.temporal is not None:
                self.leaf(d, "temporal", block.temporal)
            self.close(depth, "labResults")
        elif isinstance(block, GeneralOutcome):
            self.open(depth, "generalOutcome")
            self.leaf(d, "id", block.id)
            self.leaf(d, "outcomeText", block.outcome_text)
            self.close(depth, "generalOutcome")
        else:
            self.open(depth, "expr", {"type": block.expr_type.value})
            self.leaf(d, "inputConceptId", " ".join(block.inputs))
            self.leaf(d, "outputConceptId", block.output)
            self.close(depth, "expr")

    def section(self, tag: str, items: list) -> None:
        if not items:
            self.empty(1, tag)
            return
        self.open(1, tag)
        for item in items:
            self.block(2, item)
        self.close(1, tag)


def _require_valid(rec: Recommendation) -> None:
    report = validate(rec)
    if not report.ok:
        first = report.errors[0]
        raise CrtsError(E.INVALID_DOCUMENT, f"{len(report.errors)} validation error(s), first: {first}")


def write_xml(rec: Recommendation) -> bytes:
    """Serialize *rec* as canonical CRTS-XML. Raises ``INVALID_DOCUMENT``."""
    _require_valid(rec)
    w = _XmlWriter()
    w.lines.append('<?xml version="1.0" encoding="UTF-8"?>')
    w.open(0, "recommendation", {"id": rec.doc_id})
    if rec.source_text is not None:
        w.leaf(1, "sourceText", rec.source_text)
    if rec.source is not None:
        if rec.source.origin is None and not rec.source.citations:
            w.empty(1, "source")
        else:
            w.open(1, "source")
            if rec.source.origin is not None:
                w.leaf(2, "origin", rec.source.origin)
            for cite in rec.source.citations:
                w.leaf(2, "citation", cite)
            w.close(1, "source")
    pop, sug, out = rec.population, rec.suggestion, rec.outcome
    w.section("population", [*pop.demographics, *pop.disorders, *pop.interventions, *pop.lab_criteria, *pop.exprs])
    w.section("suggestion", [*sug.interventions, *sug.exprs])
    w.section("outcome", [*out.general, *out.lab_criteria])
    w.close(0, "recommendation")
    return ("\n".join(w.lines) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# JSON mirror
# ---------------------------------------------------------------------------


def _concept_json(ref: DictionaryRef | None) -> dict[str, Any]:
    return {"dictionary": ref.dictionary if ref else None, "dictId": ref.dict_id if ref else None}


def _block_json(block: Any) -> dict[str, Any]:
    if isinstance(block, Demographics):
        age = None
        if block.age is not None:
            age = {"operator": block.age.operator.value, "value": format_value(block.age.value)}
        return {"id": block.id, "age": age, "gender": block.gender, "ethnicity": block.ethnicity, "country": block.country}
    if isinstance(block, Disorder):
        return {
            "id": block.id,
            "name": block.name,
            **_concept_json(block.concept),
            "timeperiod": block.time_period.value,
            "negation": block.negation,
        }
    if isinstance(block, Intervention):
        return {
            "id": block.id,
            "name": block.name,
            "type": block.intervention_type,
            **_concept_json(block.concept),
            "timeperiod": block.time_period.value,
            "modifier": block.modifier_text,
            "grade": block.grade,
        }
    if isinstance(block, LabCriterion):
        return {
            "id": block.id,
            "key": block.key,
            "value": format_value(block.value),
            "unit": block.unit,
            "operator": block.operator.value,
            "temporal": block.temporal,
        }
    if isinstance(block, GeneralOutcome):
        return {"id": block.id, "outcomeText": block.outcome_text}
    return {"type": block.expr_type.value, "inputConceptId": list(block.inputs), "outputConceptId": block.output}


def to_json_obj(rec: Recommendation) -> dict[str, Any]:
    pop, sug, out = rec.population, rec.suggestion, rec.outcome
    blocks = lambda items: [_block_json(b) for b in items]  # noqa: E731
    source = None
    if rec.source is not None:
        source = {"origin": rec.source.origin, "citation": list(rec.source.citations)}
    return {
        "recommendation": {
            "id": rec.doc_id,
            "sourceText": rec.source_text,
            "source": source,
            "population": {
                "demographics": blocks(pop.demographics),
                "disorder": blocks(pop.disorders),
                "intervention": blocks(pop.interventions),
                "labResults": blocks(pop.lab_criteria),
                "expr": blocks(pop.exprs),
            },
            "suggestion": {"intervention": blocks(sug.interventions), "expr": blocks(sug.exprs)},
            "outcome": {"generalOutcome": blocks(out.general), "labResults": blocks(out.lab_criteria)},
        }
    }


def _dumps(obj: Any) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def write_json(rec: Recommendation) -> bytes:
    """Serialize *rec* as deterministic CRTS-JSON. Raises ``INVALID_DOCUMENT``."""
    _require_valid(rec)
    return _dumps(to_json_obj(rec))


def _reject_duplicates(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in pairs:
        if key in out:
            raise CrtsError(E.SCHEMA_VIOLATION, f"duplicate key {key!r}")
        out[key] = value
    return out


def _bad_constant(name: str) -> Any:
    raise CrtsError(E.VALUE_PARSE, f"{name} is not an allowed number")


def _load_json(data: bytes) -> Any:
    try:
        text = data.decode("utf-8-sig")
        return json.loads(
            text,
            object_pairs_hook=_reject_duplicates,
            parse_float=Decimal,
            parse_int=Decimal,
            parse_constant=_bad_constant,
        )
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CrtsError(E.JSON_MALFORMED, str(exc)) from None


class _JsonReader:
    """Shape checks for decoded JSON objects, tracking a path for errors."""

    @staticmethod
    def obj(value: Any, path: str, required: tuple[str, ...], optional: tuple[str, ...] = ()) -> dict[str, Any]:
        if not isinstance(value, dict):
            raise CrtsError(E.SCHEMA_VIOLATION, "expected an object", path)
        for key in value:
            if key not in required and key not in optional:
                raise CrtsError(E.SCHEMA_VIOLATION, f"unknown key {key!r}", path)
        for key in required:
            if key not in value:
                raise CrtsError(E.SCHEMA_VIOLATION, f"missing key {key!r}", path)
        return value

    @staticmethod
    def array(value: Any, path: str) -> list[Any]:
        if value is None:
            return []
        if not isinstance(value, list):
            raise CrtsError(E.SCHEMA_VIOLATION, "expected an array", path)
        return value

    @staticmethod
    def string(value: Any, path: str, *, nullable: bool = True) -> str | None:
        if value is None and nullable:
            return None
        if not isinstance(value, str):
            raise CrtsError(E.SCHEMA_VIOLATION, "expected a string", path)
        return value

    @staticmethod
    def boolean(value: Any, path: str, default: bool) -> bool:
        if value is None:
            return default
        if not isinstance(value, bool):
            raise CrtsError(E.SCHEMA_VIOLATION, "expected true or false", path)
        return value


def _with_path(path: str, fn: Callable[[], Any]) -> Any:
    try:
        return fn()
    except CrtsError as exc:
        if exc.path is None:
            raise CrtsError(exc.code, exc.message, path) from None
        raise


def _json_concept(o: dict[str, Any], path: str) -> DictionaryRef | None:
    r = _JsonReader
    dictionary = r.string(o.get("dictionary"), f"{path}/dictionary")
    dict_id = r.string(o.get("dictId"), f"{path}/dictId")
    if dictionary is None and dict_id is None:
        return None
    if dictionary is None or dict_id is None:
        raise CrtsError(E.SCHEMA_VIOLATION, "dictionary and dictId must appear together", path)
    return DictionaryRef(dictionary, dict_id)


def _json_block(kind: str, value: Any, path: str) -> Any:
    r = _JsonReader
    s = lambda key: r.string(o.get(key), f"{path}/{key}")  # noqa: E731
    if kind == "expr":
        o = r.obj(value, path, ("type", "inputConceptId", "outputConceptId"))
        inputs = r.array(o["inputConceptId"], f"{path}/inputConceptId")
        if not all(isinstance(i, str) for i in inputs):
            raise CrtsError(E.SCHEMA_VIOLATION, "inputs must be strings", f"{path}/inputConceptId")
        expr_type = _with_path(path, lambda: _expr_type(r.string(o["type"], path, nullable=False)))
        return ExprNode(expr_type, tuple(inputs), r.string(o["outputConceptId"], path, nullable=False))

    fields = _BLOCK_FIELDS[kind]
    required = {"demographics": ("id",), "disorder": ("id", "name"), "intervention": ("id", "name"),
                "labResults": ("id", "key", "value", "operator"), "generalOutcome": ("id", "outcomeText")}[kind]
    optional = tuple(f for f in fields if f not in required and f != "UMLSDictId")
    o = r.obj(value, path, required, optional)
    block_id = r.string(o["id"], f"{path}/id", nullable=False)

    def build() -> Any:
        if kind == "demographics":
            age = None
            if o.get("age") is not None:
                a = r.obj(o["age"], f"{path}/age", ("operator", "value"))
                age = NumericConstraint(
                    Operator.from_token(r.string(a["operator"], f"{path}/age", nullable=False)),
                    parse_value(r.string(a["value"], f"{path}/age", nullable=False)),
                )
            return Demographics(block_id, age, s("gender"), s("ethnicity"), s("country"))
        if kind == "disorder":
            tp = s("timeperiod")
            return Disorder(
                block_id,
                r.string(o["name"], f"{path}/name", nullable=False),
                _json_concept(o, path),
                _time_period(tp) if tp is not None else TimePeriod.UNSPECIFIED,
                r.boolean(o.get("negation"), f"{path}/negation", False),
            )
        if kind == "intervention":
            tp = s("timeperiod")
            return Intervention(
                block_id,
                r.string(o["name"], f"{path}/name", nullable=False),
                s("type"),
                _json_concept(o, path),
                _time_period(tp) if tp is not None else TimePeriod.UNSPECIFIED,
                s("modifier"),
                s("grade"),
            )
        if kind == "labResults":
            return LabCriterion(
                block_id,
                r.string(o["key"], f"{path}/key", nullable=False),
                parse_value(r.string(o["value"], f"{path}/value", nullable=False)),
                Operator.from_token(r.string(o["operator"], f"{path}/operator", nullable=False)),
                s("unit"),
                s("temporal"),
            )
        return GeneralOutcome(block_id, r.string(o["outcomeText"], f"{path}/outcomeText", nullable=False))

    return _with_path(path, build)


def from_json_obj(obj: Any, default_doc_id: str = DEFAULT_DOC_ID) -> Recommendation:
    r = _JsonReader
    top = r.obj(obj, "/", ("recommendation",))
    doc = r.obj(top["recommendation"], ROOT, (), ("id", "sourceText", "source", *_SECTION_CHILDREN))

    def section(name: str) -> dict[str, list]:
        path = f"{ROOT}/{name}"
        raw = doc.get(name)
        kinds = _SECTION_CHILDREN[name]
        if raw is None:
            return {k: [] for k in kinds}
        o = r.obj(raw, path, (), kinds)
        return {
            k: [_json_block(k, v, f"{path}/{k}[{i}]") for i, v in enumerate(r.array(o.get(k), f"{path}/{k}"), 1)]
            for k in kinds
        }

    source = None
    if doc.get("source") is not None:
        so = r.obj(doc["source"], f"{ROOT}/source", (), ("origin", "citation"))
        cites = r.array(so.get("citation"), f"{ROOT}/source/citation")
        source = Source(
            r.string(so.get("origin"), f"{ROOT}/source/origin"),
            tuple(r.string(c, f"{ROOT}/source/citation", nullable=False) for c in cites),
        )
    pop, sug, out = section("population"), section("suggestion"), section("outcome")
    doc_id = r.string(doc.get("id"), f"{ROOT}/id")
    return Recommendation(
        doc_id=doc_id if doc_id is not None else default_doc_id,
        population=Population(
            tuple(pop["demographics"]),
            tuple(pop["disorder"]),
            tuple(pop["intervention"]),
            tuple(pop["labResults"]),
            tuple(pop["expr"]),
        ),
        suggestion=Suggestion(tuple(sug["intervention"]), tuple(sug["expr"])),
        outcome=Outcome(tuple(out["generalOutcome"]), tuple(out["labResults"])),
        source_text=r.string(doc.get("sourceText"), f"{ROOT}/sourceText"),
        source=source,
    )


def parse_json(data: bytes, *, default_doc_id: str = DEFAULT_DOC_ID) -> Recommendation:
    """Parse CRTS-JSON bytes. Unknown keys are always rejected."""
    return from_json_obj(_load_json(data), default_doc_id)


def parse_document(data: bytes, **kwargs: Any) -> Recommendation:
    """Parse XML or JSON, chosen by the first non-blank byte."""
    head = data.lstrip(b"\xef\xbb\xbf \t\r\n")[:1]
    if head == b"{":
        kwargs.pop("strict", None)
        kwargs.pop("warnings", None)
        return parse_json(data, **kwargs)
    return parse_xml(data, **kwargs)


# ---------------------------------------------------------------------------
# patient records
# ---------------------------------------------------------------------------

_PATIENT_STATUS = {"current": TimePeriod.CURRENT, "past": TimePeriod.PAST}


def _patient_fact(value: Any, path: str, allow_negated: bool) -> PatientFact:
    r = _JsonReader
    keys = ("cui", "name", "status", "negated") if allow_negated else ("cui", "name", "status")
    o = r.obj(value, path, (), keys)
    cui = r.string(o.get("cui"), f"{path}/cui")
    name = r.string(o.get("name"), f"{path}/name")
    if not (cui or "").strip() and not (name or "").strip():
        raise CrtsError(E.SCHEMA_VIOLATION, "an entry needs a cui or a name", path)
    status_text = r.string(o.get("status"), f"{path}/status")
    status = TimePeriod.CURRENT
    if status_text is not None:
        if status_text.strip().lower() not in _PATIENT_STATUS:
            raise CrtsError(E.VALUE_PARSE, f"status must be current or past, got {status_text!r}", f"{path}/status")
        status = _PATIENT_STATUS[status_text.strip().lower()]
    negated = r.boolean(o.get("negated"), f"{path}/negated", False)
    return PatientFact(cui.strip() if cui else None, name, status, negated)


def _patient_number(value: Any, path: str) -> Decimal:
    if isinstance(value, bool) or not isinstance(value, Decimal):
        raise CrtsError(E.VALUE_PARSE, f"expected a number, got {value!r}", path)
    return value


def parse_patient_json(data: bytes) -> PatientRecord:
    """Parse a patient record; see the README for the schema."""
    r = _JsonReader
    o = r.obj(_load_json(data), "/", (), ("demographics", "conditions", "interventions", "labs", "closed_world"))
    demo = r.obj(o.get("demographics") or {}, "/demographics", (), ("age", "gender", "ethnicity", "country"))
    age = None
    if demo.get("age") is not None:
        age = _patient_number(demo["age"], "/demographics/age")
        if age < 0:
            raise CrtsError(E.VALUE_PARSE, "age must be >= 0", "/demographics/age")
    labs = []
    for i, raw in enumerate(r.array(o.get("labs"), "/labs"), 1):
        path = f"/labs[{i}]"
        lab = r.obj(raw, path, ("key", "value"), ("unit", "observed_at"))
        labs.append(
            LabObservation(
                r.string(lab["key"], f"{path}/key", nullable=False),
                _patient_number(lab["value"], f"{path}/value"),
                r.string(lab.get("unit"), f"{path}/unit"),
                r.string(lab.get("observed_at"), f"{path}/observed_at"),
            )
        )
    return PatientRecord(
        age=age,
        gender=r.string(demo.get("gender"), "/demographics/gender"),
        ethnicity=r.string(demo.get("ethnicity"), "/demographics/ethnicity"),
        country=r.string(demo.get("country"), "/demographics/country"),
        conditions=tuple(
            _patient_fact(c, f"/conditions[{i}]", True) for i, c in enumerate(r.array(o.get("conditions"), "/conditions"), 1)
        ),
        interventions=tuple(
            _patient_fact(c, f"/interventions[{i}]", False)
            for i, c in enumerate(r.array(o.get("interventions"), "/interventions"), 1)
        ),
        labs=tuple(labs),
        closed_world=r.boolean(o.get("closed_world"), "/closed_world", False),
    )
