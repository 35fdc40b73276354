import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from zklab.spectral import RealField, make_grid

settings.register_profile(
    "zklab", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("zklab")


def band_limited(grid, seed, amp=1.0, frac=0.5):
    """Random real field whose modes fit inside ``frac`` of the band."""
    rng = np.random.default_rng(seed)
    jx = np.abs(grid.jx)[:, None]
    my = np.abs(grid.my)[None, :]
    keep = (jx < frac * grid.Nx / 2) & (my < frac * grid.Ny / 2)
    c = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * keep
    c = 0.5 * (c + np.conj(np.roll(np.flip(c, (0, 1)), 1, axis=(0, 1))))
    c = np.where(grid.band_mask, c, 0)
    from zklab.spectral import SpectralField, from_spectral

    u = from_spectral(SpectralField(grid, c))
    scale = np.max(np.abs(u.samples))
    return RealField(grid, u.samples * (amp / scale if scale > 0 else 1.0))


@pytest.fixture
def small_grid():
    return make_grid(2 * math.pi, 1, 8, 8, 2)


_ACCEPTANCE_LINES: list = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line; the lines are repeated in the terminal summary."""

    def emit(number, ok, detail, soft=False):
        word = "PASS" if ok else ("WARN" if soft else "FAIL")
        line = f"{word} criterion {number:>2}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
