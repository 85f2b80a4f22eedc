from pathlib import Path

import numpy as np
import pytest

from gpcde.gpc import hpc, load_code_spec

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

# printed optimized mapper for the tau_5 = 0.667 / tau_8 = 0.333 half-product code
A_STAR = np.array(
    [
        [0.2640, 0.1056, 0.2984, 0.3320],
        [0.2976, 0.4508, 0.2453, 0.0063],
        [0.0031, 0.0249, 0.0746, 0.8973],
    ]
)


@pytest.fixture(scope="session")
def ref_spec():
    return load_code_spec(CONFIGS / "hpc_n1600.json")


@pytest.fixture(scope="session")
def ref_instance(ref_spec):
    from gpcde.simulator import instantiate

    return instantiate(ref_spec)


@pytest.fixture
def small_hpc():
    return hpc(10, {5: 0.667, 8: 0.333})


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
