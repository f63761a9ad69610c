import pytest

from metastable.hierarchy import build_tree
from metastable.gamma_expansion import RateExpansion
from metastable.models import FIG1_MINIMA, fig1_spec


@pytest.fixture(scope="session")
def fig1():
    return fig1_spec()


@pytest.fixture(scope="session")
def fig1_tree(fig1):
    return build_tree(fig1)


@pytest.fixture(scope="session")
def fig1_expansion(fig1_tree):
    return RateExpansion.from_tree(fig1_tree)


@pytest.fixture(scope="session")
def x():
    """Minima of the bundled landscape by name: ``x['x4'] == 11``."""
    return dict(FIG1_MINIMA)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
