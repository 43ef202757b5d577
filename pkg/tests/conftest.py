import os
import sys

import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from services.immersion import unit_circle  # noqa: E402
from services.mcflow import FlowSettings, analyze, run  # noqa: E402
from services.scenarios import sphere_profile  # noqa: E402

CIRCLE_NODES = 64
CAP = 50.0


@pytest.fixture(scope="session")
def circle_traj():
    """Shrinking unit circle up to sup|II| = 50, classified."""
    traj = run(unit_circle(CIRCLE_NODES), FlowSettings(curvature_cap=CAP))
    analyze(traj)
    return traj


@pytest.fixture(scope="session")
def sphere_traj():
    traj = run(sphere_profile(65), FlowSettings(curvature_cap=CAP))
    analyze(traj)
    return traj
