import numpy as np
import pytest

from momentdesign.designsolve import RelaxationConfig, solve_design
from momentdesign.presets import preset
from momentdesign.recovery import RecoveryConfig, polish_design, recover


@pytest.fixture(scope="session")
def interval_d5():
    X = preset("interval")
    return X, solve_design(X, RelaxationConfig(d=5, delta=0))


@pytest.fixture(scope="session")
def wynn_d1():
    X = preset("wynn_polygon")
    res = solve_design(X, RelaxationConfig(d=1, delta=3))
    rr = recover(res.y_star, X, RecoveryConfig(r=3), d=1)
    design = polish_design(rr.design, X, res.y_star, res.basis, res.criterion, 1)
    return X, res, rr, design


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record acceptance checks: acceptance(number, label, ok, detail)."""
    store = request.config.stash.setdefault(_ACCEPTANCE_KEY, {})

    def record(number, label, ok, detail=""):
        store.setdefault(number, []).append((label, bool(ok), detail))
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_ACCEPTANCE_KEY, None)
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        checks = store[number]
        failed = [c for c in checks if not c[1]]
        status = "PASS" if not failed else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status} ({len(checks) - len(failed)}/{len(checks)} checks)")
        for label, ok, detail in failed:
            terminalreporter.write_line(f"    failed: {label} {detail}".rstrip())
