from importlib import resources

import pytest

from omegacert.compile import compile_to_pts
from omegacert.dra import parse_dra
from omegacert.ppl import parse_program

EXAMPLES = resources.files("omegacert.examples")


def example_text(name: str) -> str:
    return EXAMPLES.joinpath(name).read_text()


def load_pts(name: str):
    return compile_to_pts(parse_program(example_text(name)))


def load_dra(name: str):
    return parse_dra(example_text(name))


def example_path(name: str) -> str:
    return str(EXAMPLES.joinpath(name))


@pytest.fixture(scope="session")
def re1():
    return load_pts("re1.pp")


@pytest.fixture(scope="session")
def re1_bounded():
    return load_pts("re1_bounded.pp")


@pytest.fixture(scope="session")
def re2():
    return load_pts("re2.pp")


@pytest.fixture(scope="session")
def re2_bounded():
    return load_pts("re2_bounded.pp")


@pytest.fixture(scope="session")
def fig1b():
    return load_dra("fig1b.dra")


@pytest.fixture(scope="session")
def re2_c2():
    return load_dra("re2_c2.dra")


@pytest.fixture(scope="session")
def re2_c3():
    return load_dra("re2_c3.dra")


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
