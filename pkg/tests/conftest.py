import sys

import numpy as np
import pytest

from dialogue_rater.domain import default_ontology, generate_database


@pytest.fixture(scope="session")
def onto():
    return default_ontology()


@pytest.fixture(scope="session")
def db(onto):
    return generate_database(1, 150, onto)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in list(sys.modules.items())
                if name.endswith("test_acceptance") and hasattr(m, "RESULTS")), None)
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
