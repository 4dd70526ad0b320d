import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from elastic_gestures.motion import KINECT20, MotionSequence, SkeletonTopology  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def kinect_seq(rng):
    return MotionSequence(KINECT20, rng.normal(size=(30, 60)), label="wave", name="k0")


def seq_from(poses, label=None, name=None, subject=None):
    poses = np.asarray(poses, dtype=float)
    if poses.ndim == 1:
        poses = poses[:, None]
    if poses.shape[1] % 3:
        poses = np.pad(poses, ((0, 0), (0, 3 - poses.shape[1] % 3)))
    topo = SkeletonTopology.generic(poses.shape[1] // 3)
    return MotionSequence(topo, poses, label=label, name=name, subject=subject)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        passed, detail = results[n]
        terminalreporter.write_line(
            f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
