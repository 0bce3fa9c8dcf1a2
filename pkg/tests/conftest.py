import numpy as np
import pytest

from multildp.core import make_rng


@pytest.fixture
def rng():
    return make_rng(12345, 7)


def zscore(sample, target, axis=0):
    sample = np.asarray(sample, dtype=float)
    se = sample.std(axis=axis, ddof=1) / np.sqrt(sample.shape[axis])
    return (sample.mean(axis=axis) - target) / se


# criterion number -> (ok, line); filled by test_acceptance
ACCEPTANCE = {}


def record_criterion(num: int, title: str, ok: bool, detail: str = "") -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE[num] = (ok, line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for num in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[num][1])
