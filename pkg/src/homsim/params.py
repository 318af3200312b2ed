"""Domain parameter types shared across the package."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Measurement:
    """A scalar value with a one-standard-deviation uncertainty."""

    value: float
    sigma: float = 0.0

    def __iter__(self):
        return iter((self.value, self.sigma))


@dataclass(frozen=True)
class EmitterParams:
    """Optical constants of the emitter.

    Parameters
    ----------
    lifetime : float
        Excited-state lifetime tau_ES in ns. The radiative decay rate is
        ``1/lifetime``.
    pure_dephasing : float
        Pure dephasing rate gamma' in ns^-1.
    diffusion_amplitude : float
        Spectral-diffusion amplitude Gamma'_0 in ns^-1.
    diffusion_time : float
        Spectral-diffusion time constant tau_c in ns (inf = static lines).
    splitting : float
        Frequency difference of the two spin-tagged optical transitions
        in GHz.
    saturation_energy : float
        Pulse energy in pJ at which the excitation probability reaches
        1 - 1/e.
    metastable_lifetime : float
        Lifetime of the intersystem-crossing shelving state in ns.
    isc_probability : float
        Probability per optical cycle of decaying through the metastable
        state instead of emitting a zero-phonon-line photon. Not measured
        independently; the default is an assumption and configurable.
    """

    lifetime: float = 6.0
    pure_dephasing: float = 0.0
    diffusion_amplitude: float = 0.0
    diffusion_time: float = math.inf
    splitting: float = 0.966
    saturation_energy: float = 4.0
    metastable_lifetime: float = 100.0
    isc_probability: float = 0.0

    def __post_init__(self):
        if self.lifetime <= 0:
            raise ValueError("lifetime must be positive")
        if self.pure_dephasing < 0 or self.diffusion_amplitude < 0:
            raise ValueError("dephasing rates must be non-negative")
        if self.diffusion_time <= 0:
            raise ValueError("diffusion_time must be positive")
        if self.saturation_energy <= 0:
            raise ValueError("saturation_energy must be positive")
        if self.metastable_lifetime <= 0:
            raise ValueError("metastable_lifetime must be positive")
        if not 0.0 <= self.isc_probability <= 1.0:
            raise ValueError("isc_probability must lie in [0, 1]")

    @property
    def decay_rate(self) -> float:
        """Radiative decay rate Gamma = 1/tau_ES in ns^-1."""
        return 1.0 / self.lifetime

    def coherence_decay(self, path_delay: float) -> float:
        """Total coherence-decay parameter for photons emitted ``path_delay`` apart.

        gamma = Gamma'_0 * (1 - exp(-(dt/tau_c)^2)) + 2*gamma'.
        """
        if math.isinf(self.diffusion_time):
            diffused = 0.0
        else:
            diffused = -math.expm1(-((path_delay / self.diffusion_time) ** 2))
        return self.diffusion_amplitude * diffused + 2.0 * self.pure_dephasing


@dataclass(frozen=True)
class InterferometerParams:
    """Unbalanced Mach-Zehnder and detection-chain constants.

    ``sigma_arrival`` is the standard deviation of the *relative* arrival
    time between the two photons of an interfering pair (the quantity the
    overlap correction uses); simulators apply sigma_arrival/sqrt(2) per
    photon so the pair difference has exactly this width.
    """

    path_delay: float = 48.7
    t1: float = 0.5
    r1: float = 0.5
    t2: float = 0.5
    r2: float = 0.5
    fringe_deficit: float = 0.0
    eta1: float = 1.0
    eta2: float = 1.0
    sigma_det: float = 0.0
    sigma_arrival: float = 0.0

    def __post_init__(self):
        if self.path_delay <= 0:
            raise ValueError("path_delay must be positive")
        for t, r, name in ((self.t1, self.r1, "1"), (self.t2, self.r2, "2")):
            if not (0.0 < t < 1.0) or not (0.0 < r < 1.0):
                raise ValueError(f"T{name}, R{name} must lie in (0, 1)")
            if abs(t + r - 1.0) > 1e-9:
                raise ValueError(f"T{name} + R{name} must equal 1")
        if not 0.0 <= self.fringe_deficit < 1.0:
            raise ValueError("fringe_deficit must lie in [0, 1)")
        for eta in (self.eta1, self.eta2):
            if not 0.0 < eta <= 1.0:
                raise ValueError("detector efficiencies must lie in (0, 1]")
        if self.sigma_det < 0 or self.sigma_arrival < 0:
            raise ValueError("timing jitters must be non-negative")

    @classmethod
    def from_ratios(cls, ratio1: float, ratio2: float, **kwargs) -> "InterferometerParams":
        """Build from T/R intensity ratios of the two splitters."""
        t1 = ratio1 / (1.0 + ratio1)
        t2 = ratio2 / (1.0 + ratio2)
        return cls(t1=t1, r1=1.0 - t1, t2=t2, r2=1.0 - t2, **kwargs)

    @property
    def alpha1(self) -> float:
        """Imbalance factor (T1/R1 + R1/T1)/2 of the input splitter."""
        return 0.5 * (self.t1 / self.r1 + self.r1 / self.t1)

    @property
    def alpha2(self) -> float:
        """Imbalance factor (T2/R2 + R2/T2)/2 of the output splitter."""
        return 0.5 * (self.t2 / self.r2 + self.r2 / self.t2)


@dataclass(frozen=True)
class GateWindow:
    """Software acceptance window for detector clicks, relative to the sync tick."""

    t_start: float
    t_stop: float

    def __post_init__(self):
        if not 0.0 <= self.t_start < self.t_stop:
            raise ValueError("require 0 <= t_start < t_stop")

    @property
    def width(self) -> float:
        return self.t_stop - self.t_start
