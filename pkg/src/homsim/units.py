"""Unit conventions and conversion helpers.

All internal physics runs in double-precision nanoseconds. A rate ``r``
in ns^-1 is the coefficient appearing in exp(-r*t); its conventional
"r/2pi" frequency value is ``r * 1000 / (2*pi)`` MHz. Timestamps on the
wire are integer picoseconds.
"""

from __future__ import annotations

import math

import numpy as np

TWO_PI = 2.0 * math.pi

#: Boltzmann constant in meV/K.
K_BOLTZMANN_MEV = 0.0861733

PS_PER_NS = 1000


def rate_to_mhz(rate_per_ns):
    """Convert a decay rate in ns^-1 to its r/2pi value in MHz."""
    return rate_per_ns * (1000.0 / TWO_PI)


def mhz_to_rate(freq_mhz):
    """Convert an r/2pi frequency in MHz to a decay rate in ns^-1."""
    return freq_mhz * (TWO_PI / 1000.0)


def ghz_to_angular(freq_ghz):
    """Convert a frequency in GHz to an angular frequency in rad/ns."""
    return TWO_PI * freq_ghz


def angular_to_ghz(omega_rad_per_ns):
    """Convert an angular frequency in rad/ns to GHz."""
    return omega_rad_per_ns / TWO_PI


def ns_to_ps(t_ns) -> np.ndarray:
    """Round times in ns to integer picoseconds (int64)."""
    return np.rint(np.asarray(t_ns, dtype=np.float64) * PS_PER_NS).astype(np.int64)


def ps_to_ns(t_ps) -> np.ndarray:
    """Convert integer picoseconds to float nanoseconds."""
    return np.asarray(t_ps, dtype=np.float64) / PS_PER_NS
