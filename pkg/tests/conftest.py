import numpy as np
import pytest

from dnsspp.features import SpectralLayer
from dnsspp.window import Window


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_layer(rng, width, d_in, scale=1.0, sigma=None, tie=False):
    o1 = rng.normal(scale=scale, size=(width, d_in))
    b1 = rng.uniform(0, 2 * np.pi, width)
    if tie:
        o2, b2 = o1, b1
    else:
        o2 = rng.normal(scale=scale, size=(width, d_in))
        b2 = rng.uniform(0, 2 * np.pi, width)
    if sigma is None:
        sigma = float(rng.uniform(0.5, 2.0))
    return SpectralLayer(o1, o2, b1, b2, sigma=sigma, tie=tie)


UNIT_1D = Window(((-5.0, 5.0),))


# One line per acceptance criterion, echoed at the end of the run.
ACCEPTANCE = []


def report(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
