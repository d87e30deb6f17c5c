import json
from pathlib import Path

import pytest

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def corpus_path() -> Path:
    return DATA_DIR / "corpus.jsonl"


@pytest.fixture(scope="session")
def corpus(corpus_path):
    from molblend.chem import load_corpus

    return load_corpus(corpus_path)


@pytest.fixture(scope="session")
def corpus_smiles(corpus):
    return [rec.smiles for rec in corpus]


@pytest.fixture(scope="session")
def pampa_fixture():
    """Twenty scripted permeability items: gold label + canned model output."""
    with open(DATA_DIR / "pampa_fixture.jsonl", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh]


# ---------------------------------------------------------------------------
# acceptance reporting: one line per criterion at the end of the run
# ---------------------------------------------------------------------------

_ACCEPTANCE_RESULTS: dict[str, str] = {}


def record_acceptance(name: str, ok: bool) -> None:
    _ACCEPTANCE_RESULTS[name] = "PASS" if ok else "FAIL"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker and report.when == "call":
        label = marker.kwargs.get("name") or item.name
        _ACCEPTANCE_RESULTS[label] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"{_ACCEPTANCE_RESULTS[label]}  {label}")


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(name): marks a test as an acceptance criterion"
    )
