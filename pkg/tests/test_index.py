import dataclasses
import random
from decimal import Decimal

import pytest
from hypothesis import given
from hypothesis import strategies as st

from crts import errors as E
from crts.index import (
    Conjunct,
    Facet,
    IndexKey,
    LabBound,
    Query,
    Section,
    add,
    build_index,
    document_keys,
    dump_index,
    lab_compatible,
    load_index,
    parse_query,
    query,
)
from crts.model import Disorder, LabCriterion, NumericRange, Operator, Population, Recommendation

from generators import (
    conjuncts,
    jointly_satisfiable,
    linear_scan,
    pooled_recommendations,
    queries,
    query_text,
    random_recommendation,
)

D = Decimal


def corpus_of(n, seed=0):
    rng = random.Random(seed)
    return [random_recommendation(rng, doc_id=f"d{i:03d}", pooled=True) for i in range(n)]


def key(section, facet, value):
    return IndexKey(Section(section), facet, value)


def test_empty_index():
    index = build_index([])
    assert index.postings == {} and index.docs == {}
    assert query(index, parse_query("population.disorder.cui=C0018801")) == []


def test_heart_failure_posting_matches_scan(corpus_docs):
    index = build_index(corpus_docs.values())
    hits = index.lookup(key("population", Facet.CONCEPT_ID, "c0018801"))
    scan = sorted(
        d.doc_id
        for d in corpus_docs.values()
        if any(x.concept is not None and x.concept.dict_id == "C0018801" for x in (*d.population.disorders, *d.population.interventions))
    )
    assert list(hits) == scan
    assert scan == [
        "rec-02-ace-inhibitor-hf-lvsd",
        "rec-04-beta-blocker-hfpef",
        "rec-05-bp-monitoring-hfpef",
        "rec-06-arb-ace-hfpef",
        "rec-07-low-sodium-diet-hf",
        "rec-08-arb-ace-hf-ascvd-diabetes",
    ]


def test_diuretics_query(corpus_docs):
    index = build_index(corpus_docs.values())
    q = Query((Conjunct(key("suggestion", Facet.CONCEPT_NAME, "diuretics")),))
    assert query(index, q) == ["rec-09-diuretics-systolic-hf"]
    assert query(index, q) == linear_scan(corpus_docs.values(), q)


def test_lab_bound_over_corpus(corpus_docs):
    index = build_index(corpus_docs.values())
    lvef = '"Left ventricular ejection fraction"'
    assert query(index, parse_query(f"population.lab.{lvef} <= 35")) == ["rec-02-ace-inhibitor-hf-lvsd"]
    assert query(index, parse_query(f"population.lab.{lvef} > 40")) == []
    assert query(index, parse_query(f"population.lab.{lvef} >= 40")) == ["rec-02-ace-inhibitor-hf-lvsd"]


def test_negated_disorder_facet(corpus_docs):
    index = build_index(corpus_docs.values())
    assert query(index, parse_query("population.disorder.negated=C0042514")) == ["rec-03-amiodarone-ccc-rassi"]
    assert query(index, parse_query("population.disorder.negated=C0007930")) == []


def test_two_conjuncts_intersect(corpus_docs):
    index = build_index(corpus_docs.values())
    a = parse_query("population.disorder.cui=C0018801")
    b = parse_query('suggestion.intervention.type="Chemical And Drugs"')
    both = parse_query('population.disorder.cui=C0018801 AND suggestion.intervention.type="Chemical And Drugs"')
    assert query(index, both) == sorted(set(query(index, a)) & set(query(index, b)))


def test_duplicate_doc_id():
    doc = Recommendation("same", Population(disorders=(Disorder("1", "x"),)))
    with pytest.raises(E.CrtsError) as exc:
        build_index([doc, doc])
    assert exc.value.code == E.DUPLICATE_DOC_ID
    with pytest.raises(E.CrtsError) as exc:
        add(build_index([doc]), doc)
    assert exc.value.code == E.DUPLICATE_DOC_ID


def test_invalid_document_not_indexed():
    bad = Recommendation("bad", Population(disorders=(Disorder("1", "x"), Disorder("1", "y"))))
    with pytest.raises(E.CrtsError) as exc:
        build_index([bad])
    assert exc.value.code == E.INVALID_DOCUMENT


def test_parse_query_examples():
    q = parse_query("population.disorder.cui=C0018801")
    assert q.conjuncts == (Conjunct(IndexKey(Section.POPULATION, Facet.CONCEPT_ID, "c0018801")),)
    q = parse_query("population.lab.LVEF<=40 AND suggestion.intervention.type=drug")
    assert q.conjuncts == (
        Conjunct(IndexKey(Section.POPULATION, Facet.LAB_KEY, "lvef"), LabBound(Operator.LE, D(40))),
        Conjunct(IndexKey(Section.SUGGESTION, Facet.INTERVENTION_TYPE, "drug")),
    )
    q = parse_query('outcome.outcome.name="to reduce AND shocks"')
    assert q.conjuncts[0].key.value == "to reduce and shocks"


@pytest.mark.parametrize(
    "text",
    [
        "population.bogus=1",
        "",
        "   ",
        "population.disorder.cui=",
        "suggestion.disorder.cui=C1",
        "population.disorder.cui=C1 AND",
        "AND population.disorder.cui=C1",
        'population.disorder.name="open',
        "population.lab.LVEF <= forty",
        "population.lab.LVEF != 40",
        "clinic.disorder.cui=C1",
    ],
)
def test_query_syntax_errors(text):
    with pytest.raises(E.CrtsError) as exc:
        parse_query(text)
    assert exc.value.code == E.QUERY_SYNTAX


def test_unknown_facet_combinations():
    index = build_index([])
    with pytest.raises(E.CrtsError) as exc:
        query(index, Query((Conjunct(IndexKey(Section.SUGGESTION, Facet.LAB_KEY, "x")),)))
    assert exc.value.code == E.UNKNOWN_FACET
    with pytest.raises(E.CrtsError) as exc:
        query(index, Query((Conjunct(IndexKey(Section.POPULATION, Facet.CONCEPT_ID, "x"), LabBound(Operator.LT, D(1))),)))
    assert exc.value.code == E.UNKNOWN_FACET


@pytest.mark.parametrize(
    "op, value, bound_op, bound, expected",
    [
        (Operator.LE, 40, Operator.LE, 35, True),
        (Operator.LE, 40, Operator.GT, 40, False),
        (Operator.LE, 40, Operator.GE, 40, True),
        (Operator.LT, 40, Operator.GE, 40, False),
        (Operator.GT, 10, Operator.LT, 10, False),
        (Operator.EQ, 10, Operator.EQ, 10, True),
        (Operator.NE, 10, Operator.EQ, 10, False),
        (Operator.NE, 10, Operator.LE, 10, True),
        (Operator.IN_RANGE, (D("0.5"), D("0.8")), Operator.GT, D("0.8"), False),
        (Operator.IN_RANGE, (D("0.5"), D("0.8")), Operator.GE, D("0.8"), True),
    ],
)
def test_interval_intersection(op, value, bound_op, bound, expected):
    v = NumericRange(*value) if isinstance(value, tuple) else D(value)
    crit = LabCriterion("1", "k", v, op)
    b = LabBound(bound_op, D(bound))
    assert lab_compatible(crit, b) is expected
    assert jointly_satisfiable(crit, b) is expected


def test_index_file_round_trip(tmp_path):
    index = build_index(corpus_of(30))
    path = tmp_path / "corpus.idx"
    path.write_bytes(dump_index(index))
    loaded = load_index(path.read_bytes())
    assert loaded == index
    assert path.read_bytes().startswith(b"CRTSIDX 1\n")
    assert dump_index(loaded) == dump_index(index)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda t: t.replace("CRTSIDX 1", "CRTSIDX 2"),
        lambda t: t.replace('["post", "population"', '["post", "populace"', 1),
        lambda t: t + '["post", "population", "concept_id", "zzz", ["d000"]]\n',
        lambda t: t + "not json\n",
    ],
)
def test_corrupt_index_file(mutate):
    text = dump_index(build_index(corpus_of(5))).decode()
    with pytest.raises(E.CrtsError) as exc:
        load_index(mutate(text).encode())
    assert exc.value.code == E.INDEX_FORMAT


def test_incremental_build_in_any_order():
    docs = corpus_of(25, seed=3)
    full = build_index(docs)
    for seed in range(3):
        shuffled = docs[:]
        random.Random(seed).shuffle(shuffled)
        index = build_index([])
        for d in shuffled:
            index = add(index, d)
        assert index.postings == full.postings
        assert dump_index(index) == dump_index(full)


def test_document_keys_are_normalized(corpus_docs):
    for doc in corpus_docs.values():
        for k in document_keys(doc):
            assert k.value == k.value.strip().casefold()


CORPUS = corpus_of(60, seed=11)
INDEX = build_index(CORPUS)


@given(queries)
def test_query_matches_linear_scan(q):
    assert query(INDEX, q) == linear_scan(CORPUS, q)


@given(queries)
def test_query_text_round_trip(q):
    text = query_text(q)
    if text is not None:
        assert parse_query(text) == q


@given(queries, conjuncts)
def test_adding_a_conjunct_never_enlarges(q, c):
    assert set(query(INDEX, q.extend(c))) <= set(query(INDEX, q))


@given(st.lists(pooled_recommendations, max_size=6))
def test_postings_cover_scan_on_small_corpora(docs):
    docs = [dataclasses.replace(d, doc_id=f"x{i}") for i, d in enumerate(docs)]
    index = build_index(docs)
    for k, ids in index.postings.items():
        assert list(ids) == linear_scan(docs, Query((Conjunct(k),)))
