"""Shared fixtures: reference parameter sets and oracle helpers."""

import numpy as np
import pytest

from homsim.params import EmitterParams, GateWindow, InterferometerParams
from homsim.corrections import NoiseModel
from homsim.presets import (
    reference_emitter,
    reference_interferometer,
    reference_noise,
    reference_spin,
)


@pytest.fixture(scope="session")
def ref_emitter() -> EmitterParams:
    return reference_emitter(5.0)


@pytest.fixture(scope="session")
def ref_interferometer() -> InterferometerParams:
    return reference_interferometer()


@pytest.fixture(scope="session")
def ref_noise() -> NoiseModel:
    return reference_noise()


@pytest.fixture(scope="session")
def ref_spin():
    return reference_spin()


@pytest.fixture(scope="session")
def ungated() -> GateWindow:
    return GateWindow(0.0, 48.0)


def poisson_z(observed: float, expected: float) -> float:
    """Standard score of a Poisson count against its expectation."""
    return (observed - expected) / np.sqrt(max(expected, 1.0))
