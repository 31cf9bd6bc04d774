import math

import numpy as np
import pytest
from hypothesis import settings

from riskshape.world import Obstacle, Track, TrackTile

settings.register_profile("ci", max_examples=50, deadline=None)
settings.load_profile("ci")


def circle_track(n=200, radius=None, half_width=6.0, tile_length=2.0, obstacles=()):
    """Counter-clockwise circular track with `n` tiles; the geometry is known in closed form."""
    radius = radius if radius is not None else n * tile_length / (2 * math.pi)
    ang = 2 * math.pi * np.arange(n) / n
    tiles = tuple(
        TrackTile(i, (radius * math.cos(a), radius * math.sin(a)), float((a + math.pi / 2 + math.pi) % (2 * math.pi)
                                                                         - math.pi), half_width)
        for i, a in enumerate(ang)
    )
    spacing = 2 * math.pi * radius / n
    return Track(tiles, tuple(obstacles), 0, spacing)


def straight_track(n=100, half_width=6.0, tile_length=2.0, obstacles=()):
    """Open strip along +x, closed only nominally; handy for hand-computed events."""
    tiles = tuple(TrackTile(i, (i * tile_length, 0.0), 0.0, half_width) for i in range(n))
    return Track(tiles, tuple(obstacles), 0, tile_length)


@pytest.fixture
def ring():
    return circle_track()


@pytest.fixture
def ring_with_obstacle():
    return circle_track(obstacles=(Obstacle(50, 0.0, 1.5),))


# one pass/fail line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def report_criterion():
    def _report(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
