"""Shared fixtures: repo paths and the standard device fixtures.

The two bundled configs are loaded once per session; every run derived
from them is deterministic, so caching the parsed objects is safe.
"""

import pathlib

import pytest

from topomech.config import load_config
from topomech.device import couplings

REPO = pathlib.Path(__file__).resolve().parent.parent
CONFIGS = REPO / "configs"


@pytest.fixture(scope="session")
def caption_config():
    return load_config(CONFIGS / "transfer_q1000_t25mk.toml")


@pytest.fixture(scope="session")
def cold_config():
    return load_config(CONFIGS / "transfer_q2000_t20mk.toml")


@pytest.fixture(scope="session")
def dc(caption_config):
    """Operating-point couplings with the fixture pins applied."""
    return couplings(caption_config.device, caption_config.coupling_overrides)


@pytest.fixture(scope="session")
def dc_cold(cold_config):
    return couplings(cold_config.device, cold_config.coupling_overrides)
