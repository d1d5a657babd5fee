from __future__ import annotations

import pytest

from srsql import bundled_path, load_schemas
from srsql.evaluate import read_corpus


@pytest.fixture(scope="session")
def schemas():
    return load_schemas(bundled_path("tables.json"))


@pytest.fixture(scope="session")
def concert(schemas):
    return schemas["concert_singer"]


@pytest.fixture(scope="session")
def corpus():
    return read_corpus(bundled_path("corpus.jsonl"))


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
