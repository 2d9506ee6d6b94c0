"""Full-profile acceptance battery: one PASS/FAIL line per criterion.

The lines are printed in the terminal summary (see ``conftest.py``).
"""
import json
import time

import pytest

from delaycoord.acceptance import PROFILES, acceptance_suite, summary_lines
from delaycoord.cli import jsonable

BUDGET_SECONDS = 600
#: Lines handed to the terminal summary hook.
REPORT: list[str] = []


@pytest.fixture(scope="module")
def full_run():
    t0 = time.perf_counter()
    summary = acceptance_suite("full", seed=0)
    elapsed = time.perf_counter() - t0
    for line, c in zip(summary_lines(summary), summary["criteria"]):
        REPORT.append(f"{line}  {json.dumps(jsonable(c['checks']), sort_keys=True)}")
    REPORT.append(f"full profile: {elapsed:.1f} s")
    return summary, elapsed


def _criterion(summary, cid):
    [c] = [c for c in summary["criteria"] if c["id"] == cid]
    return c


def test_full_profile_thresholds():
    full = PROFILES["full"]
    assert full["scale"] == 1
    assert full["freq_N"] == 1000 and full["min_freq"] == 0.95 and full["final_dev"] == 0.02
    assert full["pred_n"] == 100_000 and full["min_slope"] == 0.9 and full["min_finite"] == 0.99
    assert full["pred_window"] == (10 ** -2.5, 10 ** -1.0)


@pytest.mark.parametrize("cid", range(1, 10))
def test_criterion(full_run, cid):
    summary, _ = full_run
    c = _criterion(summary, cid)
    failed = [name for name, ok in c["checks"].items() if not ok]
    assert c["passed"], f"criterion {cid} failed checks {failed}: {json.dumps(jsonable(c['metrics']))}"


def test_runtime_budget(full_run):
    _, elapsed = full_run
    assert elapsed < BUDGET_SECONDS
