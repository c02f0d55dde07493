"""Expression graphs over block ids and their disjunctive normal form."""

from __future__ import annotations

import graphlib
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Union

from crts import errors as E
from crts.model import ExprNode, ExprType, Population, Suggestion

DNF_MAX_DISJUNCTS = 4096

Tree = Union[str, tuple]


@dataclass(frozen=True)
class ExprGraph:
    """A rooted DAG whose leaves are block ids.

    ``nodes`` is topologically ordered (every node after the nodes it
    consumes). ``root`` is ``None`` for an empty section, a leaf id when the
    section has a single top-level block, or a node output otherwise.
    """

    root: str | None
    nodes: tuple[ExprNode, ...]
    leaves: tuple[str, ...]
    implicit_root: bool = False

    @cached_property
    def node_map(self) -> dict[str, ExprNode]:
        return {n.output: n for n in self.nodes}

    def tree(self, ident: str | None = None) -> Tree:
        """Nested ``(type, child, ...)`` tuples below *ident* (default: root).

        Leaves come back as bare id strings. Shared sub-DAGs are expanded.
        """
        ident = self.root if ident is None else ident
        if ident is None:
            return ("AND",)
        node = self.node_map.get(ident)
        if node is None:
            return ident
        return (node.expr_type.value, *(self.tree(i) for i in node.inputs))

    def render(self, labels: Mapping[str, str] | None = None) -> str:
        """Infix text such as ``1 AND (2 OR 3)``; *labels* renames leaves."""
        labels = labels or {}

        def fmt(t: Tree, top: bool) -> str:
            if isinstance(t, str):
                return labels.get(t, t)
            if len(t) == 1:
                return "TRUE"
            op = " COMPARED_TO " if t[0] == "COMPARED_TO" else f" {t[0]} "
            body = op.join(fmt(c, False) for c in t[1:])
            return body if top else f"({body})"

        return fmt(self.tree(), True)


def _fresh_id(base: str, taken: set[str]) -> str:
    ident, n = base, 1
    while ident in taken:
        n += 1
        ident = f"{base}{n}"
    taken.add(ident)
    return ident


def build_expr_graph(section: Population | Suggestion) -> ExprGraph:
    """Assemble the expression DAG of a section.

    Blocks or expression outputs that no expression consumes are the tops of
    the graph. Several tops are joined under a synthesized AND root, since all
    stated criteria apply at once.
    """
    leaves = tuple(b.id for b in section.blocks())
    leaf_set = set(leaves)
    producers: dict[str, ExprNode] = {}
    for node in section.exprs:
        producers[node.output] = node
    for node in section.exprs:
        for ref in node.inputs:
            if ref not in leaf_set and ref not in producers:
                raise E.CrtsError(E.DANGLING_REF, f"expression {node.output!r} consumes unknown id {ref!r}")

    sorter = graphlib.TopologicalSorter()
    for node in section.exprs:
        sorter.add(node.output, *(r for r in node.inputs if r in producers))
    try:
        order = [o for o in sorter.static_order() if o in producers]
    except graphlib.CycleError as exc:
        raise E.CrtsError(E.CYCLE_DETECTED, f"expression cycle: {' -> '.join(exc.args[1])}") from None
    nodes = [producers[o] for o in order]

    consumed = {ref for node in section.exprs for ref in node.inputs}
    tops = [i for i in (*leaves, *(n.output for n in section.exprs)) if i not in consumed]
    if not tops:
        return ExprGraph(None, tuple(nodes), leaves)
    if len(tops) == 1:
        return ExprGraph(tops[0], tuple(nodes), leaves)
    root = _fresh_id("root", leaf_set | set(producers))
    nodes.append(ExprNode(ExprType.AND, tuple(tops), root))
    return ExprGraph(root, tuple(nodes), leaves, implicit_root=True)


def _simplify(terms: list[tuple[str, ...]]) -> list[tuple[str, ...]]:
    """Drop duplicate and absorbed conjunctions, keeping first-seen order."""
    sets = []
    seen: set[frozenset[str]] = set()
    for term in terms:
        s = frozenset(term)
        if s not in seen:
            seen.add(s)
            sets.append((s, term))
    by_size = sorted(sets, key=lambda st: len(st[0]))
    kept: list[frozenset[str]] = []
    survivors: set[frozenset[str]] = set()
    for s, _ in by_size:
        if not any(k < s for k in kept):
            kept.append(s)
            survivors.add(s)
    return [term for s, term in sets if s in survivors]


def _and_terms(left: list[tuple[str, ...]], right: list[tuple[str, ...]]) -> list[tuple[str, ...]]:
    # bound the raw product before absorption gets a chance to shrink it
    if len(left) * len(right) > DNF_MAX_DISJUNCTS * 16:
        raise E.CrtsError(E.DNF_BLOWUP, f"DNF would exceed {DNF_MAX_DISJUNCTS} disjuncts")
    out = []
    for a in left:
        for b in right:
            out.append(a + tuple(x for x in b if x not in a))
    return _simplify(out)


def dnf_terms(graph: ExprGraph) -> list[tuple[str, ...]]:
    """The DNF of *graph* as a list of conjunctions of leaf ids."""
    for node in graph.nodes:
        if node.expr_type is ExprType.COMPARED_TO:
            raise E.CrtsError(E.COMPARISON_NODE, f"node {node.output!r} is COMPARED_TO; it has no truth semantics")
    if graph.root is None:
        return [()]
    terms: dict[str, list[tuple[str, ...]]] = {}

    def of(ident: str) -> list[tuple[str, ...]]:
        return terms[ident] if ident in terms else [(ident,)]

    for node in graph.nodes:
        if node.expr_type is ExprType.OR:
            acc = _simplify([t for i in node.inputs for t in of(i)])
        else:
            acc = [()]
            for i in node.inputs:
                acc = _and_terms(acc, of(i))
        if len(acc) > DNF_MAX_DISJUNCTS:
            raise E.CrtsError(E.DNF_BLOWUP, f"DNF would exceed {DNF_MAX_DISJUNCTS} disjuncts")
        terms[node.output] = acc
    return of(graph.root)


def normalize_to_dnf(graph: ExprGraph) -> ExprGraph:
    """Rewrite *graph* as an OR of ANDs of leaves.

    The result is equivalent under every assignment to the leaves, including
    three-valued ones, because distribution and absorption hold in Kleene
    logic. Only references are duplicated; the leaf set is carried over
    unchanged. Raises ``DNF_BLOWUP`` when any stage exceeds
    ``DNF_MAX_DISJUNCTS`` conjunctions and ``COMPARISON_NODE`` when the graph
    holds a COMPARED_TO node.
    """
    terms = dnf_terms(graph)
    if graph.root is None:
        return graph
    taken = set(graph.leaves)
    nodes: list[ExprNode] = []

    def conj(term: tuple[str, ...]) -> str:
        if len(term) == 1:
            return term[0]
        out = _fresh_id(f"dnf.and{len(nodes) + 1}", taken)
        nodes.append(ExprNode(ExprType.AND, term, out))
        return out

    children = [conj(t) for t in terms]
    if len(children) == 1:
        return ExprGraph(children[0], tuple(nodes), graph.leaves)
    root = _fresh_id("dnf.or", taken)
    nodes.append(ExprNode(ExprType.OR, tuple(children), root))
    return ExprGraph(root, tuple(nodes), graph.leaves)
