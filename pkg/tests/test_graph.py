import random
from itertools import product

import pytest
from hypothesis import given

from crts import errors as E
from crts.graph import DNF_MAX_DISJUNCTS, build_expr_graph, dnf_terms, normalize_to_dnf
from crts.logic import eval_graph
from crts.model import Disorder, ExprNode, ExprType, Intervention, Population, Suggestion

from generators import F, T, U, populations, random_population, reference_eval


def pop(n, *exprs):
    leaves = [chr(ord("a") + i) for i in range(n)]
    return Population(disorders=tuple(Disorder(x, x) for x in leaves), exprs=tuple(exprs))


def AND(out, *ins):
    return ExprNode(ExprType.AND, ins, out)


def OR(out, *ins):
    return ExprNode(ExprType.OR, ins, out)


def test_implicit_root_over_unjoined_blocks():
    g = build_expr_graph(pop(2))
    assert g.implicit_root
    assert g.tree() == ("AND", "a", "b")
    assert g.leaves == ("a", "b")


def test_implicit_root_id_avoids_collisions():
    section = Population(disorders=(Disorder("root", "x"), Disorder("b", "y")))
    g = build_expr_graph(section)
    assert g.root != "root"
    assert g.tree() == ("AND", "root", "b")


def test_single_block_is_its_own_root():
    g = build_expr_graph(pop(1))
    assert g.root == "a" and g.nodes == ()


def test_empty_section():
    g = build_expr_graph(Population())
    assert g.root is None
    assert eval_graph(g, {}) is T


def test_icd_shocks_population(icd_shocks):
    g = build_expr_graph(icd_shocks.population)
    assert g.root == "3"
    assert set(g.leaves) == {"1", "2"}
    assert not g.implicit_root


def test_nested_or_feeding_and(corpus_docs):
    g = build_expr_graph(corpus_docs["rec-01-icd-ccc-cardiac-arrest"].population)
    assert len(g.leaves) == 5
    assert g.tree() == ("AND", "1", ("OR", "2", "3"), ("OR", "4", "5"))
    assert g.render() == "1 AND (2 OR 3) AND (4 OR 5)"


def test_nodes_are_topologically_ordered():
    # document order lists the consumer first
    g = build_expr_graph(pop(3, AND("x", "a", "y"), OR("y", "b", "c")))
    assert [n.output for n in g.nodes] == ["y", "x"]


def test_dangling_and_cycle_raise():
    with pytest.raises(E.CrtsError) as exc:
        build_expr_graph(pop(1, AND("x", "a", "zz")))
    assert exc.value.code == E.DANGLING_REF
    with pytest.raises(E.CrtsError) as exc:
        build_expr_graph(pop(2, AND("x", "a", "y"), OR("y", "b", "x")))
    assert exc.value.code == E.CYCLE_DETECTED


def test_distributive_law():
    g = build_expr_graph(pop(3, OR("o", "b", "c"), AND("r", "a", "o")))
    d = normalize_to_dnf(g)
    assert d.tree() == ("OR", ("AND", "a", "b"), ("AND", "a", "c"))
    assert d.leaves == g.leaves


def test_dnf_fixed_point():
    g = build_expr_graph(pop(3, AND("x", "a", "b"), OR("r", "x", "c")))
    assert normalize_to_dnf(g).tree() == g.tree() == ("OR", ("AND", "a", "b"), "c")


def test_absorption_and_duplicates():
    # a OR (a AND b) == a
    g = build_expr_graph(pop(2, AND("x", "a", "b"), OR("r", "a", "x")))
    assert dnf_terms(g) == [("a",)]
    assert normalize_to_dnf(g).root == "a"


def test_dnf_of_shared_subgraph():
    g = build_expr_graph(pop(3, OR("o", "a", "b"), AND("x", "o", "c"), AND("y", "o", "x")))
    assert sorted(map(sorted, dnf_terms(g))) == [["a", "c"], ["b", "c"]]


def test_dnf_blowup():
    # AND of 13 two-way ORs has 8192 minimal disjuncts
    n = 13
    section = Population(
        disorders=tuple(Disorder(f"{s}{i}", "x") for i in range(n) for s in "pq"),
        exprs=tuple(OR(f"o{i}", f"p{i}", f"q{i}") for i in range(n)),
    )
    assert 2**n > DNF_MAX_DISJUNCTS
    with pytest.raises(E.CrtsError) as exc:
        normalize_to_dnf(build_expr_graph(section))
    assert exc.value.code == E.DNF_BLOWUP


def test_compared_to_is_rejected():
    s = Suggestion(
        (Intervention("1", "A"), Intervention("2", "B")),
        (ExprNode(ExprType.COMPARED_TO, ("1", "2"), "3"),),
    )
    g = build_expr_graph(s)
    with pytest.raises(E.CrtsError) as exc:
        normalize_to_dnf(g)
    assert exc.value.code == E.COMPARISON_NODE
    assert g.render({"1": "Digoxin", "2": "Placebo"}) == "Digoxin COMPARED_TO Placebo"


def test_eight_leaf_truth_tables():
    rng = random.Random(2024)
    for _ in range(40):
        section = random_population(rng, 8)
        g = build_expr_graph(section)
        d = normalize_to_dnf(g)
        ids = [b.id for b in section.blocks()]
        for bits in product((T, F), repeat=8):
            a = dict(zip(ids, bits))
            assert eval_graph(d, a) == reference_eval(section, a)


@given(populations())
def test_leaves_are_the_section_blocks(section):
    g = build_expr_graph(section)
    assert set(g.leaves) == {b.id for b in section.blocks()}


@given(populations())
def test_dnf_is_idempotent_and_flat(section):
    d = normalize_to_dnf(build_expr_graph(section))
    dd = normalize_to_dnf(d)
    assert dd.tree() == d.tree()
    for node in d.nodes:
        if node.expr_type is ExprType.AND:
            assert all(i in d.leaves for i in node.inputs)
        else:
            assert node.output == d.root


@given(populations(max_leaves=5))
def test_dnf_preserves_three_valued_semantics(section):
    d = normalize_to_dnf(build_expr_graph(section))
    ids = [b.id for b in section.blocks()]
    for vals in product((T, U, F), repeat=len(ids)):
        a = dict(zip(ids, vals))
        assert eval_graph(d, a) == reference_eval(section, a)
