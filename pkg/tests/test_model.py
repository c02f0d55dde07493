from decimal import Decimal

import pytest
from hypothesis import given

from crts import errors as E
from crts.model import (
    Demographics,
    DictionaryRef,
    Disorder,
    ExprNode,
    ExprType,
    GeneralOutcome,
    Intervention,
    LabCriterion,
    NumericConstraint,
    NumericRange,
    Operator,
    Outcome,
    Population,
    Recommendation,
    Suggestion,
    TimePeriod,
    validate,
)

from generators import recommendations


def umls(cui):
    return DictionaryRef("UMLS", cui)


def diuretics_doc():
    return Recommendation(
        "diuretics",
        Population(
            disorders=(
                Disorder("1", "Systolic heart failure", umls("C1135191"), TimePeriod.CURRENT),
                Disorder("2", "Volume overload", umls("C0546817"), TimePeriod.CURRENT),
            ),
            exprs=(ExprNode(ExprType.AND, ("1", "2"), "4"),),
        ),
        Suggestion(interventions=(Intervention("3", "Diuretics", "Chemical And Drugs", umls("C0012798")),)),
    )


def test_diuretics_recommendation_is_clean():
    report = validate(diuretics_doc())
    assert report.ok
    assert report.errors == () and report.warnings == ()


def test_duplicate_id_reported_at_both_paths():
    rec = Recommendation(
        "d",
        Population(disorders=(Disorder("1", "A"),), interventions=(Intervention("1", "B"),)),
    )
    report = validate(rec)
    dup = [i.path for i in report.errors if i.code == E.DUPLICATE_ID]
    assert sorted(dup) == [
        "/recommendation/population/disorder[1]/id",
        "/recommendation/population/intervention[1]/id",
    ]


def test_dangling_ref():
    rec = Recommendation(
        "d",
        Population(
            disorders=(Disorder("1", "A"), Disorder("2", "B")),
            exprs=(ExprNode(ExprType.AND, ("1", "99"), "3"),),
        ),
    )
    report = validate(rec)
    assert E.DANGLING_REF in report.codes()
    (issue,) = [i for i in report.errors if i.code == E.DANGLING_REF]
    assert "99" in issue.message


def test_cui_shape_is_only_a_warning():
    rec = Recommendation("d", Population(disorders=(Disorder("1", "Chagas", umls("0007930")),)))
    report = validate(rec)
    assert report.errors == ()
    assert [w.code for w in report.warnings] == [E.BAD_CUI_SHAPE]


def test_refs_do_not_cross_sections():
    rec = Recommendation(
        "d",
        Population(disorders=(Disorder("1", "A"),)),
        Suggestion(
            interventions=(Intervention("2", "B"),),
            exprs=(ExprNode(ExprType.OR, ("1", "2"), "3"),),
        ),
    )
    assert E.DANGLING_REF in validate(rec).codes()


def test_cycle_detected():
    rec = Recommendation(
        "d",
        Population(
            disorders=(Disorder("1", "A"), Disorder("2", "B")),
            exprs=(
                ExprNode(ExprType.AND, ("1", "4"), "3"),
                ExprNode(ExprType.OR, ("2", "3"), "4"),
            ),
        ),
    )
    codes = [i.code for i in validate(rec).errors]
    assert codes.count(E.CYCLE_DETECTED) == 1


@pytest.mark.parametrize(
    "rec, code",
    [
        (Recommendation("d"), E.EMPTY_DOCUMENT),
        (Recommendation("d", outcome=Outcome((GeneralOutcome("1", "x"),))), E.EMPTY_DOCUMENT),
        (Recommendation("has space", Population(disorders=(Disorder("1", "A"),))), E.BAD_ID),
        (Recommendation("d", Population(disorders=(Disorder("", "A"),))), E.BAD_ID),
        (Recommendation("d", Population(disorders=(Disorder("1", "  "),))), E.EMPTY_FIELD),
        (Recommendation("d", Population(disorders=(Disorder("1", "bad\x01char"),))), E.ILLEGAL_CHARACTER),
        (Recommendation("d", Population(demographics=(Demographics("1"),))), E.EMPTY_DEMOGRAPHICS),
        (
            Recommendation("d", Population(demographics=(Demographics("1", NumericConstraint(Operator.GE, Decimal(-1))),))),
            E.BAD_RANGE,
        ),
        (
            Recommendation("d", Population(lab_criteria=(LabCriterion("1", "LVEF", NumericRange(Decimal(5), Decimal(1)), Operator.IN_RANGE),))),
            E.BAD_RANGE,
        ),
        (
            Recommendation("d", Population(lab_criteria=(LabCriterion("1", "LVEF", Decimal(40), Operator.IN_RANGE),))),
            E.OPERATOR_VALUE_MISMATCH,
        ),
        (
            Recommendation("d", Population(lab_criteria=(LabCriterion("1", "LVEF", NumericRange(Decimal(1), Decimal(5)), Operator.LE),))),
            E.OPERATOR_VALUE_MISMATCH,
        ),
        (
            Recommendation("d", Population(disorders=(Disorder("1", "A"),), exprs=(ExprNode(ExprType.AND, ("1",), "2"),))),
            E.BAD_ARITY,
        ),
        (
            Recommendation(
                "d",
                Population(
                    disorders=(Disorder("1", "A"), Disorder("2", "B")),
                    exprs=(ExprNode(ExprType.COMPARED_TO, ("1", "2"), "3"),),
                ),
            ),
            E.COMPARISON_IN_POPULATION,
        ),
        (
            Recommendation(
                "d",
                suggestion=Suggestion(
                    (Intervention("1", "A"), Intervention("2", "B"), Intervention("3", "C")),
                    (ExprNode(ExprType.COMPARED_TO, ("1", "2", "3"), "4"),),
                ),
            ),
            E.BAD_ARITY,
        ),
    ],
)
def test_error_codes(rec, code):
    assert code in validate(rec).codes()


def test_compared_to_allowed_in_suggestion():
    rec = Recommendation(
        "d",
        suggestion=Suggestion(
            (Intervention("1", "Digoxin"), Intervention("2", "Placebo")),
            (ExprNode(ExprType.COMPARED_TO, ("1", "2"), "3"),),
        ),
    )
    assert validate(rec).ok


def test_operator_tokens():
    assert Operator.from_token("<=") is Operator.LE
    assert Operator.from_token("≤") is Operator.LE
    assert Operator.from_token("≥") is Operator.GE
    assert Operator.from_token("in") is Operator.IN_RANGE
    with pytest.raises(E.CrtsError) as exc:
        Operator.from_token("=<")
    assert exc.value.code == E.VALUE_PARSE


def test_corpus_validates_cleanly(corpus_docs):
    assert len(corpus_docs) == 10
    for rec in corpus_docs.values():
        report = validate(rec)
        assert report.ok, (rec.doc_id, report.errors)
        assert report.warnings == ()


@given(recommendations)
def test_validate_is_deterministic(rec):
    assert validate(rec) == validate(rec)
    assert validate(rec).ok
