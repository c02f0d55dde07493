from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from crts import corpus

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled by test_acceptance, echoed after the run
ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def corpus_paths() -> list[Path]:
    return [Path(str(p)) for p in corpus.paths()]


@pytest.fixture(scope="session")
def corpus_docs():
    return {d.doc_id: d for d in corpus.load()}


@pytest.fixture(scope="session")
def icd_shocks(corpus_docs):
    return corpus_docs["ccc-icd-shocks"]
