import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import line_kg, random_store  # noqa: E402

from kglink.data import TripleStore  # noqa: E402


@pytest.fixture
def tiny_store() -> TripleStore:
    """Three entities, one relation: A -r0-> B -r0-> C, one valid/test triple each."""
    return TripleStore(
        entity_dict={"A": 0, "B": 1, "C": 2},
        relation_dict={"r0": 0},
        train=[(0, 0, 1), (1, 0, 2)],
        valid=[(0, 0, 2)],
        test=[(2, 0, 0)],
    )


@pytest.fixture
def toy_store() -> TripleStore:
    return random_store(np.random.default_rng(11))


@pytest.fixture(scope="session")
def synthetic_store() -> TripleStore:
    return line_kg()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for outcome in ("passed", "failed", "error", "skipped"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" in nodeid and getattr(report, "when", "call") == "call":
                name = nodeid.split("::")[-1]
                lines.append((name, outcome.upper()))
            elif "test_acceptance" in nodeid and outcome == "skipped":
                name = nodeid.split("::")[-1]
                lines.append((name, "SKIPPED"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, outcome in sorted(set(lines)):
            terminalreporter.write_line(f"{outcome:8s} {name}")
