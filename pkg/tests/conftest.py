"""
Shared fixtures: small planar chains with analytic answers and the shipped MTM model
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from config import config
from kinematics import DHRow, LinkInertia, RobotModel
from schemas import load_robot

REPO_ROOT = Path(__file__).parent.parent
MTM_PATH = REPO_ROOT / "data" / "mtm.json"
EXPERIMENTS_DIR = REPO_ROOT / "data" / "experiments"

PLANAR_GRAVITY = (0.0, -9.81, 0.0)


def planar_chain(lengths, masses, gravity=PLANAR_GRAVITY, name="planar"):
    """Revolute chain in the base x-y plane, point masses at the link tips"""
    dh = [DHRow(1, 0.0, 0.0, 0.0, length) for length in lengths]
    links = [LinkInertia(mass) for mass in masses]
    return RobotModel(name, dh, links, gravity)


def random_chain(n, rng, name="random"):
    """Spatial chain with random geometry, signs, offsets and COMs"""
    dh = [
        DHRow(
            int(rng.choice([-1, 1])),
            float(rng.uniform(-np.pi, np.pi)),
            float(rng.uniform(-0.3, 0.3)),
            float(rng.uniform(-np.pi, np.pi)),
            float(rng.uniform(-0.3, 0.3)),
        )
        for _ in range(n)
    ]
    links = [LinkInertia(float(rng.uniform(0.1, 2.0)), rng.uniform(-0.1, 0.1, 3)) for _ in range(n)]
    return RobotModel(name, dh, links, (0.0, 0.0, -9.81))


@pytest.fixture(autouse=True)
def isolated_config(tmp_path):
    """Keep logs out of the repository and restore any config field a test changes"""
    saved = config.model_dump()
    config.log_dir = tmp_path / "logs"
    config.enable_file_logging = False
    config.show_progress = False
    yield
    for key, value in saved.items():
        setattr(config, key, value)


@pytest.fixture
def one_link():
    """Unit pendulum: m = 1 kg at the tip of a 1 m link, horizontal at q = 0"""
    return planar_chain([1.0], [1.0], name="pendulum")


@pytest.fixture
def three_link():
    return planar_chain([0.4, 0.3, 0.2], [1.0, 0.8, 0.5], name="three_link")


@pytest.fixture
def mtm():
    return load_robot(MTM_PATH)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
