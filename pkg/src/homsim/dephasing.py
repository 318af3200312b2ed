"""Temperature-dependent pure dephasing and optical-linewidth bookkeeping.

The dephasing channel is single-acoustic-phonon scattering across a small
vibronic gap; its rate follows A * dE^3 * n(dE, T) with the Bose
occupation n. Linewidth extraction supports two limiting decompositions
of a fitted coherence decay: dephasing-limited (slow spectral diffusion)
and diffusion-limited (no pure dephasing).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.optimize import brentq

from .units import K_BOLTZMANN_MEV, mhz_to_rate, rate_to_mhz


@dataclass(frozen=True)
class VibronicParams:
    """Phonon-coupling prefactor and level gap of the dephasing channel.

    ``prefactor`` is in rad/ns per meV^3 (i.e. 2*pi*MHz*meV^-3 / 1000);
    ``gap`` in meV.
    """

    prefactor: float
    gap: float = 4.4

    def __post_init__(self):
        if self.prefactor < 0:
            raise ValueError("prefactor must be non-negative")
        if self.gap <= 0:
            raise ValueError("gap must be positive")

    @classmethod
    def from_mhz(cls, prefactor_mhz_per_mev3: float, gap: float = 4.4) -> "VibronicParams":
        """Build from a prefactor quoted as A/2pi in MHz*meV^-3."""
        return cls(prefactor=mhz_to_rate(prefactor_mhz_per_mev3), gap=gap)


@dataclass(frozen=True)
class DephasingRow:
    """One temperature point of the linewidth study (all rates as r/2pi MHz)."""

    temperature: float
    linewidth_mhz: float
    gamma_fit_mhz: float
    sigma_linewidth_mhz: float = 0.0
    sigma_gamma_mhz: float = 0.0


def dephasing_rate(vp: VibronicParams, temperature: float) -> float:
    """Pure dephasing rate in ns^-1 at the given temperature.

    Uses the full Bose occupation 1/(exp(dE/kT) - 1); identical to the
    low-temperature exponential form within quoted precision at a few K,
    exact everywhere else.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    x = vp.gap / (K_BOLTZMANN_MEV * temperature)
    if x > 700.0:  # occupation underflows double precision
        return 0.0
    return vp.prefactor * vp.gap**3 / math.expm1(x)


def linewidth(decay_rate: float, diffusion_amplitude: float, pure_dephasing: float) -> float:
    """FWHM optical linewidth in MHz: (Gamma + Gamma'_0 + gamma') / 2pi."""
    if min(decay_rate, diffusion_amplitude, pure_dephasing) < 0:
        raise ValueError("rates must be non-negative")
    return rate_to_mhz(decay_rate + diffusion_amplitude + pure_dephasing)


def extract_dephasing_limited(
    gamma_fit: float, linewidth_mhz: float, decay_rate: float
) -> tuple[float, float]:
    """Decompose a fitted coherence decay assuming slow spectral diffusion.

    With tau_c >> path delay the coherence fit sees only pure dephasing,
    gamma = 2*gamma'_max; the diffusion amplitude is whatever linewidth
    remains: Gamma'_0 = 2*pi*linewidth/1000 - Gamma - gamma'_max.

    Returns (gamma'_max, Gamma'_0) in ns^-1.
    """
    if gamma_fit < 0:
        raise ValueError("gamma_fit must be non-negative")
    gamma_prime_max = gamma_fit / 2.0
    diffusion = mhz_to_rate(linewidth_mhz) - decay_rate - gamma_prime_max
    if diffusion < 0:
        raise ValueError(
            "inconsistent inputs: linewidth below the lifetime-plus-dephasing floor"
        )
    return gamma_prime_max, diffusion


def extract_diffusion_limited(
    gamma_fit: float, linewidth_mhz: float, decay_rate: float, path_delay: float
) -> tuple[float, float]:
    """Decompose a fitted coherence decay assuming no pure dephasing.

    Gamma'_0_max is the full excess linewidth; the minimum diffusion time
    constant solves gamma_fit = Gamma'_0_max * (1 - exp(-(dt/tau_c)^2)).
    A vanishing gamma_fit returns tau_c = inf (open-ended bound).

    Returns (Gamma'_0_max, tau_c_min) in (ns^-1, ns).
    """
    if gamma_fit < 0:
        raise ValueError("gamma_fit must be non-negative")
    diffusion_max = mhz_to_rate(linewidth_mhz) - decay_rate
    if diffusion_max <= 0:
        raise ValueError("linewidth does not exceed the lifetime limit")
    if gamma_fit == 0.0:
        return diffusion_max, math.inf
    saturation = gamma_fit / diffusion_max
    if saturation >= 1.0:
        raise ValueError(
            f"gamma_fit {gamma_fit:.6g} ns^-1 exceeds the saturation bound "
            f"Gamma'_0_max = {diffusion_max:.6g} ns^-1; no diffusion-only solution"
        )
    tau_c = path_delay / math.sqrt(-math.log1p(-saturation))
    return diffusion_max, tau_c


def critical_temperature(vp: VibronicParams, decay_rate: float) -> float:
    """Temperature at which pure dephasing halves the optical coherence time.

    Solves gamma'(T) = Gamma/2, the point where 1/(Gamma/2 + gamma')
    drops to half its dephasing-free value; bisection to 0.01 K.
    """
    if vp.prefactor <= 0:
        raise ValueError("prefactor must be positive to define a crossing")
    target = decay_rate / 2.0
    if target <= 0:
        return 0.0

    def f(t):
        return dephasing_rate(vp, t) - target

    t_lo, t_hi = 1e-3, 10.0
    while f(t_hi) < 0:
        t_hi *= 2.0
        if t_hi > 1e6:
            raise RuntimeError("no crossing found below 1e6 K")
    return float(brentq(f, t_lo, t_hi, xtol=0.005))
