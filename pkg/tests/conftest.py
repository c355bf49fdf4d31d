import os
import sys
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def model1_desk_report():
    """Model 1, n=300, N=8n, p=100, 50 replications (shared by several checks)."""
    from sslinfer.sim import SimConfig, run_simulation

    cfg = SimConfig(model=1, n=300, ratio=8, p=100, reps=50, methods=("dlasso1", "sssl"), targets=(1, 6), seed=2024)
    t0 = time.perf_counter()
    report = run_simulation(cfg, workers=None)
    report.manifest["wall_time_s"] = time.perf_counter() - t0
    return report


@pytest.fixture(scope="session")
def model2_desk_report():
    """Model 2, n=300, N=8n, p=100, 50 replications, theta6 only."""
    from sslinfer.sim import SimConfig, run_simulation

    cfg = SimConfig(model=2, n=300, ratio=8, p=100, reps=50, methods=("dlasso1", "dssl", "sssl"), targets=(6,), seed=2025)
    return run_simulation(cfg, workers=None)
