import json
from pathlib import Path

import pytest

ORACLE_FILE = Path(__file__).parent / "oracles" / "values.json"


@pytest.fixture(scope="session")
def oracle():
    return json.loads(ORACLE_FILE.read_text())


@pytest.fixture(scope="session")
def double_bump_oracle():
    import numpy as np

    raw = json.loads((ORACLE_FILE.parent / "double_bump.json").read_text())
    rows = np.array(raw["rows"])
    return {"x": rows[:, :2], "rho1": rows[:, 2], "rho2": rows[:, 3], "q": rows[:, 4]}


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
