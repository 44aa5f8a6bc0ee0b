import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def uniform_keys(rng, n, w=32):
    """Distinct uniform w-bit keys."""
    out = np.unique(rng.integers(0, 1 << w, size=n + n // 4 + 16, dtype=np.uint64))
    rng.shuffle(out)
    assert len(out) >= n
    return out[:n]


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
