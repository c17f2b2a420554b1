import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import STUB_HARNESS
from mom.exec_orchestrator import SandboxConfig
from mom.table_core import QaRecord, Table, Task


def pytest_runtest_logreport(report):
    """Emit one [PASS]/[FAIL] line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    import test_acceptance
    if not test_acceptance.RESULTS and report.failed:
        print(f"[FAIL] {report.nodeid}", flush=True)
    while test_acceptance.RESULTS:
        name, ok = test_acceptance.RESULTS.pop(0)
        status = "PASS" if ok and report.passed else "FAIL"
        print(f"[{status}] {name}", flush=True)


@pytest.fixture
def stub_sandbox(tmp_path):
    """Sandbox config running the in-repo stub harness (wire-protocol only,
    plain exec, no pandas)."""
    return SandboxConfig(
        harness_cmd=(sys.executable, str(STUB_HARNESS)),
        timeout_s=5,
        workdir=str(tmp_path),
    )


@pytest.fixture
def small_table():
    return Table(["team", "points"], [["reds", 10], ["blues", 7]])


@pytest.fixture
def qa_record(small_table):
    return QaRecord(
        id="q1",
        question="Which team has more points?",
        table=small_table,
        gold_answer="reds",
        task=Task.FACT_CHECKING,
    )
