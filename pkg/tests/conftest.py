import json
from pathlib import Path

import pytest

from ultraranging.waveform import DeviceId, WaveformSpec

FIXTURES = Path(__file__).parent / "fixtures"

ID_A = DeviceId("3f2b8c1e-7d4a-4b6e-9a51-2c8d0e6f1a73")
ID_B = DeviceId("a9c04d17-52e8-4f3b-8b6a-71d5e2f09c48")


def load_fixture(name):
    return json.loads((FIXTURES / name).read_text())


@pytest.fixture
def spec():
    return WaveformSpec.smartphone()


@pytest.fixture
def laptop_spec():
    return WaveformSpec.laptop()


@pytest.fixture
def ids():
    return ID_A, ID_B


# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
