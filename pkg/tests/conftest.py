import json
from pathlib import Path

import pytest

from hetgc.profiles import make_config

ROOT = Path(__file__).resolve().parent.parent
GOLDEN = Path(__file__).resolve().parent / "golden"

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def example1():
    return make_config([1, 2, 3, 4, 4], 7, 1, seed=0)


@pytest.fixture
def example2():
    # throughputs chosen so the proportional counts are [2,1,1,3,3,3,3] with s=3
    return make_config([2, 1, 1, 3, 3, 3, 3], 4, 3, seed=0)


@pytest.fixture
def config_dir():
    return ROOT / "configs"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {text}")
