"""
Shared pytest fixtures for the curved Born rule simulator tests
"""

import json
import os
import shutil
import tempfile
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path for imports
import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from detection_protocol import DetectionRun
from fock_hilbert import random_density, random_state, single_particle
from lattice_geometry import LatticeSurface, Partition, Region
from qca_dynamics import Defect, GateModel


@pytest.fixture(scope="function")
def temp_dir():
    """Create a temporary directory for testing"""
    temp_path = tempfile.mkdtemp()
    yield temp_path
    # Cleanup
    if os.path.exists(temp_path):
        shutil.rmtree(temp_path)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def free_model():
    """Free walk without coin mixing: ups move right, downs move left"""
    return GateModel()


@pytest.fixture
def coin_model():
    return GateModel(theta=0.4)


@pytest.fixture
def interacting_model():
    return GateModel(theta=0.3, theta_y=0.5, coupling=0.7, phase=0.2, interacting=True)


@pytest.fixture
def nonlocal_model():
    return GateModel(theta=0.4, defect=Defect.NONLOCAL)


@pytest.fixture
def creation_model():
    return GateModel(theta=0.4, defect=Defect.VACUUM_CREATION)


def initial_region(n_sites: int) -> Region:
    return Region.full(LatticeSurface.flat(n_sites, 0))


@pytest.fixture
def staircase_run(coin_model):
    """Random state under the coin walk, Σ = (1, 2, 3, 4), two patches, m = 2"""
    psi = random_state(initial_region(4), coin_model.factor, np.random.default_rng(3))
    return DetectionRun(
        model=coin_model,
        initial=psi,
        sigma=LatticeSurface.staircase(4, 1),
        partition=Partition.from_site_lists(4, [[0, 1], [2, 3]]),
        m=2,
    )


@pytest.fixture
def mixed_run(coin_model):
    rho = random_density(initial_region(3), coin_model.factor, np.random.default_rng(5), rank=3)
    return DetectionRun(
        model=coin_model,
        initial=rho,
        sigma=LatticeSurface((1, 2, 2)),
        partition=Partition.from_site_lists(3, [[0], [1, 2]]),
        m=1,
    )


@pytest.fixture
def right_mover_run(free_model):
    """One up mover from site 0; at layer 6 it sits on site 3, inside the only patch"""
    psi = single_particle(initial_region(5), free_model.factor, 0, 'up')
    return DetectionRun(
        model=free_model,
        initial=psi,
        sigma=LatticeSurface.flat(5, 6),
        partition=Partition.from_site_lists(5, [[2, 3, 4]]),
        m=1,
    )


@pytest.fixture
def experiment_data():
    """A small, fast experiment file body"""
    return {
        "name": "coin-staircase",
        "n_sites": 4,
        "model": {"theta": 0.4},
        "initial": {"kind": "random", "seed": 3},
        "surface": {"generator": "staircase", "offset": 1},
        "partition": {"sites": [[0, 1], [2, 3]]},
        "m": 2,
        "suite": {
            "m_values": [4, 2, 1],
            "fs_trials": 1,
            "cut_high": 1,
            "exhaustive_max_sites": 3,
            "random_pairs": 2,
            "max_trails": 4,
            "sandwich_trials": 5,
            "operator_checks_max_sites": 3,
        },
    }


@pytest.fixture
def write_config(temp_dir):
    """Write an experiment body to a JSON file and return its path"""
    def write(data, name="experiment.json"):
        path = os.path.join(temp_dir, name)
        with open(path, 'w', encoding='utf-8') as f:
            if isinstance(data, str):
                f.write(data)
            else:
                json.dump(data, f)
        return path
    return write


def pytest_configure(config):
    """Configure pytest with custom markers"""
    config.addinivalue_line("markers", "unit: Unit tests")
    config.addinivalue_line("markers", "integration: Integration tests across modules and the CLI")
    config.addinivalue_line("markers", "theorem: Detection theorem comparisons on small lattices")
    config.addinivalue_line("markers", "negative: Negative controls that must fail an axiom")
    config.addinivalue_line("markers", "slow: Tests that take more than a few seconds")
