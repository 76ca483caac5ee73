import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from s2s_sls import harness  # noqa: E402
from s2s_sls.config import ExperimentConfig  # noqa: E402


@pytest.fixture(scope="session")
def amber_cfg():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def amber(amber_cfg, tmp_path_factory):
    """One full AMBER-style pipeline run shared by the harness-level tests."""
    out = tmp_path_factory.mktemp("amber")
    return harness.run_pipeline(amber_cfg, out, plots=True)


def pytest_terminal_summary(terminalreporter):
    from _acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
