import numpy as np
import pytest

from sparseinv.dictionary import build_dual, build_paper_dictionary, build_small_dictionary
from sparseinv.operator import build_exponential_operator


def pytest_addoption(parser):
    parser.addoption("--full", action="store_true", default=False,
                     help="run the full-size simulation reproduction (about two hours)")


def pytest_configure(config):
    config.addinivalue_line("markers", "full: full-size reproduction, enabled with --full")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--full"):
        return
    skip = pytest.mark.skip(reason="needs --full")
    for item in items:
        if "full" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def paper_setup():
    d = build_paper_dictionary(128)
    op = build_exponential_operator(128)
    return op, d, build_dual(d, op)


@pytest.fixture(scope="session")
def small16():
    d = build_small_dictionary(16)
    op = build_exponential_operator(16)
    return op, d, build_dual(d, op)


@pytest.fixture(scope="session")
def small8():
    d = build_small_dictionary(8)
    op = build_exponential_operator(8)
    return op, d, build_dual(d, op)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_ACCEPTANCE: list = []


@pytest.fixture
def record_acceptance(capsys):
    """Callable ``(label, passed, detail)`` that logs one verdict line per criterion."""
    def record(label, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} {label}: {detail}"
        _ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line)
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
