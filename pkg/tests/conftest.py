from importlib import resources

import pytest

from kleinian import orbit

ACCEPTANCE_LINES = []


def data_path(name):
    return str(resources.files("kleinian") / "data" / name)


@pytest.fixture(scope="session")
def apollonian():
    return orbit.load_group(data_path("apollonian.json"))


@pytest.fixture(scope="session")
def apollonian_1e4(apollonian):
    return orbit.orbit_enumerate(apollonian, 1e4)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
