import pytest

from encluster import extraction, synth

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def corpus():
    """The seeded synthetic corpus: 5 kinds x 40 encounters."""
    return synth.gen_corpus(40, seed=0)


@pytest.fixture(scope="session")
def unified100(corpus):
    encounters, _ = corpus
    return [extraction.unify_encounter(e, 100) for e in encounters]
