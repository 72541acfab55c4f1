"""Shared fixtures: default fleet, deterministic links, bundled scenario."""

from pathlib import Path

import pytest

import birdsim
from birdsim import (
    Band,
    FlightState,
    LinkBandParams,
    LinkModel,
    default_profiles,
)

BUNDLED_SCENARIO = Path(birdsim.__file__).parent / "scenarios" / "urban_fire.yaml"


@pytest.fixture
def nodes():
    return default_profiles()


@pytest.fixture
def mean_link():
    """Variance-free link: every sample is exactly the band mean."""
    return LinkModel(noise_seed=0, variance_scale=0.0)


@pytest.fixture
def noisy_link():
    return LinkModel(noise_seed=7)


@pytest.fixture
def ground_state():
    return FlightState(t=0.0, altitude=30.0)


@pytest.fixture
def scenario_path():
    return BUNDLED_SCENARIO


def make_flat_bands(ul: float, dl: float, rtt: float) -> dict[Band, LinkBandParams]:
    """All three regimes identical and noise-free; handy for arithmetic tests."""
    return {
        band: LinkBandParams(
            band=band, dl_mean=dl, ul_mean=ul, rtt_mean=rtt, dl_std=0.0, ul_std=0.0
        )
        for band in Band
    }
