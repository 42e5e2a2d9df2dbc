import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mhbench import syngen  # noqa: E402
from mhbench.core import split_dataset  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def small_dataset():
    return syngen.generate(syngen.fixture("separable", seed=0, num_users=5, samples_per_user=(20, 24)))


@pytest.fixture(scope="session")
def small_split(small_dataset):
    return split_dataset(small_dataset)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
