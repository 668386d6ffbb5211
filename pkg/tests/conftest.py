import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from depthfuzz.targets import make_target  # noqa: E402


@pytest.fixture
def nested8():
    return make_target("nested8", 42)


@pytest.fixture
def corpus_dir(tmp_path, nested8):
    d = tmp_path / "corpus"
    d.mkdir()
    (d / "seed000").write_bytes(nested8.initial_corpus()[0])
    return d


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical experiments")


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
