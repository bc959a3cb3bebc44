import json
import sys
from pathlib import Path

import pytest
from hypothesis import settings

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE))

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

GOLDEN_DIR = HERE / "golden"
ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def goldens() -> dict:
    return json.loads((GOLDEN_DIR / "values.json").read_text())


@pytest.fixture(scope="session")
def mask_dist():
    import oracles
    return oracles.mask_distribution()


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
