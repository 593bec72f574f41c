import numpy as np
import pytest

from sgmfusion.imagecore import GrayImage


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_gray(rng, height, width):
    return GrayImage(rng.integers(0, 256, (height, width), dtype=np.uint8))


def shifted_pair(rng, height, width, shift):
    """Base image whose column x shows match column x - shift."""
    wide = rng.integers(0, 256, (height, width + shift), dtype=np.uint8)
    match = wide[:, shift:]
    base = wide[:, : width]
    # base[x] = wide[x], match[x - shift] = wide[x]
    return GrayImage(base), GrayImage(match)


# one status line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def record_acceptance(number, label, passed, detail, status=None):
    status = status or ("PASS" if passed else "FAIL")
    line = f"{status} criterion {number} ({label}): {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES, key=lambda item: item[0]):
            terminalreporter.write_line(line)
