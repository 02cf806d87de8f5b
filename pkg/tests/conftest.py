import time

import pytest

from afpca.simulate import StudyConfig, run_study


@pytest.fixture(scope="session")
def desk_study():
    """20 seeded replicates at I=25 for both noise levels and both methods."""
    start = time.perf_counter()
    report = run_study(StudyConfig(I_values=(25,), sigma2_values=(0.1, 0.2), replicates=20))
    return report, time.perf_counter() - start


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
