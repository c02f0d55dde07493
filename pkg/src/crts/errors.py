from __future__ import annotations


class CrtsError(Exception):
    """Failure carrying a stable error code.

    Codes are part of the public surface (CLI reports and tests match on them),
    so they never change meaning between releases.
    """

    def __init__(self, code: str, message: str, path: str | None = None):
        self.code = code
        self.message = message
        self.path = path
        where = f" at {path}" if path else ""
        super().__init__(f"{code}{where}: {message}")


# parse / serialization
XML_MALFORMED = "XML_MALFORMED"
JSON_MALFORMED = "JSON_MALFORMED"
SCHEMA_VIOLATION = "SCHEMA_VIOLATION"
VALUE_PARSE = "VALUE_PARSE"
INVALID_DOCUMENT = "INVALID_DOCUMENT"

# document validation
DUPLICATE_ID = "DUPLICATE_ID"
DANGLING_REF = "DANGLING_REF"
CYCLE_DETECTED = "CYCLE_DETECTED"
EMPTY_DOCUMENT = "EMPTY_DOCUMENT"
BAD_ID = "BAD_ID"
EMPTY_FIELD = "EMPTY_FIELD"
EMPTY_DEMOGRAPHICS = "EMPTY_DEMOGRAPHICS"
BAD_RANGE = "BAD_RANGE"
OPERATOR_VALUE_MISMATCH = "OPERATOR_VALUE_MISMATCH"
BAD_ARITY = "BAD_ARITY"
COMPARISON_IN_POPULATION = "COMPARISON_IN_POPULATION"
ILLEGAL_CHARACTER = "ILLEGAL_CHARACTER"
BAD_CUI_SHAPE = "BAD_CUI_SHAPE"  # warning only

# expression graphs
DNF_BLOWUP = "DNF_BLOWUP"
COMPARISON_NODE = "COMPARISON_NODE"
MISSING_LEAF = "MISSING_LEAF"

# index / query
DUPLICATE_DOC_ID = "DUPLICATE_DOC_ID"
UNKNOWN_FACET = "UNKNOWN_FACET"
QUERY_SYNTAX = "QUERY_SYNTAX"
INDEX_FORMAT = "INDEX_FORMAT"

# command line
IO_ERROR = "IO_ERROR"
