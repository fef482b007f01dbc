import sys

import numpy as np
import pytest

import capres.admm as admm

# Every ADMM step taken anywhere in the suite is checked for valid scenario
# prices and a tight price decomposition; a violation fails the test.
STEP_CHECKS = {"steps": 0, "worst_neg": 0.0, "worst_rows": 0.0, "worst_tight": 0.0}
_original_step = admm.step


def _checked_step(state, instance, config, cache=None, pool=None):
    new = _original_step(state, instance, config, cache, pool)
    neg, rows, tight = admm.dual_iterate_errors(instance, new)
    STEP_CHECKS["steps"] += 1
    STEP_CHECKS["worst_neg"] = max(STEP_CHECKS["worst_neg"], neg)
    STEP_CHECKS["worst_rows"] = max(STEP_CHECKS["worst_rows"], rows)
    STEP_CHECKS["worst_tight"] = max(STEP_CHECKS["worst_tight"], tight)
    assert neg <= 1e-10, f"iteration {new.l}: negative price {-neg:.3g}"
    assert rows <= 1e-8, f"iteration {new.l}: row sums miss p by {rows:.3g}"
    assert tight <= 1e-6, f"iteration {new.l}: tightness error {tight:.3g}"
    return new


@pytest.fixture(autouse=True)
def _guard_dual_iterates(monkeypatch):
    monkeypatch.setattr(admm, "step", _checked_step)
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
