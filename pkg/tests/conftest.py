import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from clognet.dsl import parse_project

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

settings.register_profile(
    "repo",
    max_examples=60,
    deadline=None,
    derandomize="CLOGNET_SEED" not in os.environ,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


def fixture_path(name: str) -> str:
    return str(FIXTURES / name)


@pytest.fixture(scope="session")
def otd():
    return parse_project(fixture_path("order_to_delivery.clog"))


@pytest.fixture(scope="session")
def mutant():
    return parse_project(fixture_path("load_mutant.clog"))


@pytest.fixture(scope="session")
def appendix():
    return parse_project(fixture_path("appendix_net.clog"))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n, (ok, detail) in sorted(results.items()):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
