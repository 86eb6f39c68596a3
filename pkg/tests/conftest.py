import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("pas", deadline=None, max_examples=50)
settings.load_profile("pas")

from pas.model import Configuration, RequirementSpec, WorkflowSpec, tas_registry  # noqa: E402


@pytest.fixture
def registry():
    return tas_registry()


@pytest.fixture
def workflow():
    return WorkflowSpec()


@pytest.fixture
def requirements():
    return RequirementSpec(0.02, 8.0)


@pytest.fixture
def depth1_config():
    return Configuration.of(A=[2], M=[2], D=[1])


@pytest.fixture
def compliant_config():
    return Configuration.of(A=[4, 1], M=[4, 2], D=[4, 1])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
