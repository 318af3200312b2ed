"""Reference parameter sets used by the examples, tests and CLI defaults.

Values describe the silicon-vacancy emitter, fiber interferometer and
detection chain this package models: 6 ns excited-state lifetime, 48.7 ns
path delay, T/R ratios 1.129 and 1.046, 0.5% fringe deficit, 60 ps
relative arrival jitter, and the three-temperature linewidth study rows.
"""

from __future__ import annotations

import math

from .corrections import NoiseModel
from .dephasing import DephasingRow, VibronicParams
from .params import EmitterParams, InterferometerParams
from .spin import SpinParams
from .units import mhz_to_rate

#: Slow spectral diffusion: effectively static over one cycle.
SLOW_DIFFUSION_NS = 1e9

#: (temperature K, PLE linewidth MHz, coherence-fit gamma/2pi MHz).
LINEWIDTH_STUDY = (
    DephasingRow(5.0, 62.4, 6.4, 0.4, 0.8),
    DephasingRow(5.9, 70.1, 13.4, 0.3, 1.6),
    DephasingRow(6.8, 82.4, 33.2, 0.3, 4.8),
)

#: Pure-dephasing rates gamma'_max/2pi in MHz per study row.
DEPHASING_MHZ = {5.0: 3.2, 5.9: 6.7, 6.8: 16.6}
DEPHASING_SIGMA_MHZ = {5.0: 0.4, 5.9: 0.8, 6.8: 2.4}

#: Diffusion amplitudes Gamma'_0/2pi in MHz per study row.
DIFFUSION_MHZ = {5.0: 32.7, 5.9: 36.9, 6.8: 39.3}

#: Heated-run coherence decay (strong RF drive), as a rate in ns^-1.
HEATED_GAMMA = mhz_to_rate(119.0)


def reference_emitter(temperature: float = 5.0, isc_probability: float = 0.0) -> EmitterParams:
    """Emitter constants at one of the study temperatures."""
    if temperature not in DEPHASING_MHZ:
        raise ValueError(f"no reference row at {temperature} K")
    return EmitterParams(
        lifetime=6.0,
        pure_dephasing=mhz_to_rate(DEPHASING_MHZ[temperature]),
        diffusion_amplitude=mhz_to_rate(DIFFUSION_MHZ[temperature]),
        diffusion_time=SLOW_DIFFUSION_NS,
        splitting=0.966,
        saturation_energy=4.0,
        metastable_lifetime=100.0,
        isc_probability=isc_probability,
    )


def reference_heated_emitter() -> EmitterParams:
    """Emitter constants during strong RF drive (broadened coherence).

    The heated coherence decay is lumped into pure dephasing
    (gamma = 2*gamma'), with spectral diffusion folded in.
    """
    return EmitterParams(
        lifetime=6.0,
        pure_dephasing=HEATED_GAMMA / 2.0,
        diffusion_amplitude=0.0,
        splitting=0.966,
        saturation_energy=4.0,
        metastable_lifetime=100.0,
        isc_probability=0.0,
    )


def reference_interferometer(
    sigma_det: float = 0.16, sigma_arrival: float = 0.06
) -> InterferometerParams:
    """Measured splitter ratios, fringe deficit, efficiencies and jitters."""
    return InterferometerParams.from_ratios(
        1.129,
        1.046,
        path_delay=48.7,
        fringe_deficit=0.005,
        eta1=0.85,
        eta2=0.85,
        sigma_det=sigma_det,
        sigma_arrival=sigma_arrival,
    )


def ideal_interferometer() -> InterferometerParams:
    """Balanced splitters, unit efficiency, no jitter, no fringe deficit."""
    return InterferometerParams(path_delay=48.7)


def reference_noise(sn: float = 28.0, pulse_energy: float = 5.5) -> NoiseModel:
    """Signal/noise photon probabilities at the working pulse energy."""
    p = -math.expm1(-pulse_energy / 4.0)
    return NoiseModel.from_sn(sn, p)


def reference_spin() -> SpinParams:
    """Fitted drive and field constants of the spin-control experiments."""
    return SpinParams()


def reference_vibronic() -> VibronicParams:
    """Fitted phonon-coupling prefactor and vibronic gap."""
    return VibronicParams.from_mhz(365.0, gap=4.4)
