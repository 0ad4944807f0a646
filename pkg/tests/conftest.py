import pytest

from phishvote.dataset import synthetic
from phishvote.prompting import default_templates
from phishvote.providers import MockBehavior, MockProvider


@pytest.fixture
def templates():
    return default_templates()


@pytest.fixture
def small_ds():
    return synthetic(10, seed=1)


def mock_registry(ds, behaviors):
    """name -> MockProvider for a {name: MockBehavior} mapping."""
    truths = {s.url: s.truth for s in ds}
    return {name: MockProvider(b, truths) for name, b in behaviors.items()}


@pytest.fixture
def perfect():
    return MockBehavior(1.0, 0.0, 0)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
