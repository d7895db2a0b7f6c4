# conftest.py - Shared pytest fixtures for thermolimit
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from config import Settings, configure_logging  # noqa: E402
from thermal_core import DiscreteSpectrum  # noqa: E402

configure_logging(Settings(threads=2, log_level="WARNING", log_format="console"), force=True)


@pytest.fixture
def two_level():
    """Two levels at 0 and 1, nondegenerate"""
    return DiscreteSpectrum.from_levels([(0.0, 1), (1.0, 1)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
