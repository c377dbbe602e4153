import numpy as np
import pytest
from hypothesis import settings

from vecnoma.scenario import ScenarioConfig

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def cfg():
    return ScenarioConfig()


@pytest.fixture
def short_cfg():
    # 100 m of coverage on lane 2 gives 200-slot episodes
    return ScenarioConfig(coverage=100.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
