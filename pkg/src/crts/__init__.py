"""Typed clinical recommendations: model, XML/JSON formats, patient matching
and structured retrieval."""

from crts.errors import CrtsError
from crts.graph import ExprGraph, build_expr_graph, normalize_to_dnf
from crts.logic import TruthValue, eval_graph
from crts.matching import (
    LabObservation,
    MatchConfig,
    MatchResult,
    PatientFact,
    PatientRecord,
    compare_lab,
    eval_criterion,
    match_recommendation,
)
from crts.model import Recommendation, ValidationReport, validate
from crts.serial import parse_json, parse_patient_json, parse_xml, write_json, write_xml

__version__ = "0.1.0"
