"""
Pytest Configuration and Fixtures
==================================

Shared fixtures for all tests.
"""
import pytest
import sys
from fractions import Fraction
from pathlib import Path

# src on the import path
sys.path.insert(0, str(Path(__file__).parent.parent / 'src'))

from modules.gaussian_model import DriftSpec, GaussianPathModel
from modules.instances import anticipation_instance
from modules.path_space import FilteredPathSpace, PathMeasure
from modules.transport_base import MonteCarloSettings


@pytest.fixture
def binary_space():
    """All four two-step sign paths, coordinate filtration"""
    return FilteredPathSpace.coordinate([2, 2])


@pytest.fixture
def uniform_binary(binary_space):
    return PathMeasure.uniform(binary_space)


@pytest.fixture
def skewed_binary(binary_space):
    """Rational measure with one null path"""
    return PathMeasure(binary_space, [Fraction(1, 2), Fraction(1, 4), Fraction(1, 4), 0])


@pytest.fixture
def anticipation():
    """Instance where looking ahead pays: causal 1/2, classic 0"""
    return anticipation_instance()


@pytest.fixture
def small_model():
    """Gaussian model with N = 20 steps on [0, 1]"""
    return GaussianPathModel.unit(20)


@pytest.fixture
def constant_drift():
    return DriftSpec.constant(1.0)


@pytest.fixture
def ou_drift():
    return DriftSpec.ou(1.0)


@pytest.fixture
def mc_settings():
    """Small chunks so a few thousand samples still span several chunks"""
    return MonteCarloSettings(chunk_size=1024, threads=2)


@pytest.fixture
def write_json(tmp_path):
    """Writes a JSON payload under tmp_path and returns the path"""
    import orjson

    def _write(name, payload):
        path = tmp_path / name
        path.write_bytes(orjson.dumps(payload))
        return path
    return _write
