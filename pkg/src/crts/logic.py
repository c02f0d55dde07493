"""Strong Kleene three-valued logic and graph evaluation."""

from __future__ import annotations

from enum import IntEnum
from typing import Iterable, Mapping

from crts import errors as E
from crts.graph import ExprGraph
from crts.model import ExprType


class TruthValue(IntEnum):
    # ordering FALSE < UNKNOWN < TRUE makes AND = min and OR = max
    FALSE = 0
    UNKNOWN = 1
    TRUE = 2

    @classmethod
    def of(cls, value: bool) -> TruthValue:
        return cls.TRUE if value else cls.FALSE

    def __invert__(self) -> TruthValue:
        return TruthValue(2 - self.value)

    def __and__(self, other: TruthValue) -> TruthValue:
        return TruthValue(min(self.value, other.value))

    def __or__(self, other: TruthValue) -> TruthValue:
        return TruthValue(max(self.value, other.value))

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    TruthValue.TRUE: "Applies",
    TruthValue.FALSE: "Does not apply",
    TruthValue.UNKNOWN: "Insufficient data",
}


def all_of(values: Iterable[TruthValue]) -> TruthValue:
    return TruthValue(min(values, default=TruthValue.TRUE))


def any_of(values: Iterable[TruthValue]) -> TruthValue:
    return TruthValue(max(values, default=TruthValue.FALSE))


def eval_graph(graph: ExprGraph, leaf_values: Mapping[str, TruthValue]) -> TruthValue:
    """Evaluate *graph* bottom-up; an empty graph is vacuously TRUE."""
    for leaf in graph.leaves:
        if leaf not in leaf_values:
            raise E.CrtsError(E.MISSING_LEAF, f"no truth value for leaf {leaf!r}")
    values = dict(leaf_values)
    for node in graph.nodes:
        inputs = [values[i] for i in node.inputs]
        if node.expr_type is ExprType.AND:
            values[node.output] = min(inputs)
        elif node.expr_type is ExprType.OR:
            values[node.output] = max(inputs)
        else:
            raise E.CrtsError(E.COMPARISON_NODE, f"node {node.output!r} is COMPARED_TO; it has no truth value")
    if graph.root is None:
        return TruthValue.TRUE
    return TruthValue(values[graph.root])
