"""
Shared pytest configuration for PoseLift
"""

import os
import sys

import pytest

# Add parent directory to path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long training runs (deselect with -m 'not slow')")


@pytest.fixture(scope="session")
def synthetic_data():
    """210 synthetic samples: every subject S1..S7 sees every action twice"""
    from ingestion.synth_poses import synth_generate

    return synth_generate(210, seed=3)
