import os

for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from broadmamba.ssm_core import ContinuousSSM  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_system(rng, d, N, delta_range=(0.001, 0.5)):
    A = -np.exp(rng.uniform(np.log(0.5), np.log(8.0), size=(d, N)))
    B = rng.normal(size=(d, N))
    C = rng.normal(size=(d, N))
    delta = rng.uniform(*delta_range, size=d)
    return ContinuousSSM.from_delta(A, B, C, rng.normal(size=d), delta)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
