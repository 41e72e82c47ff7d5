from pathlib import Path

import numpy as np
import pytest

from lensrect import DistortionCenter, RadialPolyParams

DATA = Path(__file__).parent / "data"

# strongest / weakest inverse parameters of the experiments (1920x1080 canvas)
STRONG = (1e-11, 2e-12)
WEAK = (1e-13, 2e-14)
HD = (1920, 1080)
HD_CORNER = float(np.hypot(959.5, 539.5))


def inverse(k, dims=HD):
    return RadialPolyParams(k[0], k[1], DistortionCenter.image_center(*dims))


def scaled(k, dims):
    """Coefficients giving the same relative geometry on a canvas of width dims[0]."""
    s = HD[0] / dims[0]
    return k[0] * s ** 2, k[1] * s ** 4


@pytest.fixture(scope="session")
def bundled_paths():
    paths = sorted(DATA.glob("*.png"))
    assert len(paths) >= 3
    return paths


# filled by tests/test_acceptance.py, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
