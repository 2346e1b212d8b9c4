import pytest
from hypothesis import HealthCheck, settings

from rawload.fixtures import fixture_path
from rawload.model import load_workload_file

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# filled by test_acceptance.py, echoed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def table1():
    return load_workload_file(fixture_path("table1"))


@pytest.fixture(scope="session")
def col_bytes(table1):
    params, _ = table1
    return params.row_count * params.attributes[0].spf


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
