"""Analytic two-photon coincidence densities and time-gated visibility.

The kernels here describe a pair of exponential wavepackets interfering on
a balanced splitter: the coincidence density over the first detection time
t_D and the detection separation tau, its gate-integrated form, and the
three-component quantum-beat pattern with detector-response convolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .params import GateWindow
from .units import TWO_PI


@dataclass(frozen=True)
class CoherenceParams:
    """Decay constants governing two-photon coherence.

    ``gamma`` is the total coherence-decay parameter entering
    exp(-gamma*tau). When the underlying components are supplied, the
    composition gamma = Gamma'_0*(1 - exp(-(dt/tau_c)^2)) + 2*gamma' is
    enforced.
    """

    decay_rate: float
    gamma: float
    splitting: float = 0.0
    diffusion_amplitude: Optional[float] = None
    diffusion_time: Optional[float] = None
    pure_dephasing: Optional[float] = None
    path_delay: Optional[float] = None

    def __post_init__(self):
        if self.decay_rate <= 0:
            raise ValueError("decay_rate must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        components = (
            self.diffusion_amplitude,
            self.diffusion_time,
            self.pure_dephasing,
            self.path_delay,
        )
        if any(c is not None for c in components):
            if any(c is None for c in components):
                raise ValueError("supply all coherence components or none")
            expected = compose_gamma(
                self.diffusion_amplitude,
                self.diffusion_time,
                self.pure_dephasing,
                self.path_delay,
            )
            if not math.isclose(self.gamma, expected, rel_tol=1e-9, abs_tol=1e-12):
                raise ValueError(
                    f"gamma={self.gamma} inconsistent with components (expect {expected})"
                )

    @classmethod
    def from_components(
        cls,
        decay_rate: float,
        diffusion_amplitude: float,
        diffusion_time: float,
        pure_dephasing: float,
        path_delay: float,
        splitting: float = 0.0,
    ) -> "CoherenceParams":
        gamma = compose_gamma(diffusion_amplitude, diffusion_time, pure_dephasing, path_delay)
        return cls(
            decay_rate=decay_rate,
            gamma=gamma,
            splitting=splitting,
            diffusion_amplitude=diffusion_amplitude,
            diffusion_time=diffusion_time,
            pure_dephasing=pure_dephasing,
            path_delay=path_delay,
        )


def compose_gamma(
    diffusion_amplitude: float,
    diffusion_time: float,
    pure_dephasing: float,
    path_delay: float,
) -> float:
    """Total coherence decay from spectral diffusion and pure dephasing."""
    if math.isinf(diffusion_time):
        diffused = 0.0
    else:
        diffused = -math.expm1(-((path_delay / diffusion_time) ** 2))
    return diffusion_amplitude * diffused + 2.0 * pure_dephasing


@dataclass(frozen=True)
class BeatCoefficients:
    """Weights and instrument constants of the three-component beat model."""

    c1: float
    c2: float
    c3: float
    t0: float = 0.0
    sigma_det: float = 0.0

    def __post_init__(self):
        if self.c1 <= 0:
            raise ValueError("c1 must be positive")
        if self.c2 < 0 or self.c3 < 0:
            raise ValueError("c2 and c3 must be non-negative")
        if self.sigma_det < 0:
            raise ValueError("sigma_det must be non-negative")


def g2_density(t_d, tau, cp: CoherenceParams, normalization: bool = False):
    """Coincidence density per photon pair at first detection t_d, separation tau.

    Gamma^2 * (1 - exp(-gamma*tau)) * exp(-Gamma*(2*t_d + tau)); with
    ``normalization=True`` the interference factor is dropped (the density
    of a fully distinguishable pair).
    """
    t_d = np.asarray(t_d, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(t_d < 0) or np.any(tau < 0):
        raise ValueError("t_d and tau must be non-negative")
    g = cp.decay_rate
    base = g * g * np.exp(-g * (2.0 * t_d + tau))
    if normalization:
        return base
    return base * -np.expm1(-cp.gamma * tau)


def gated_visibility(cp: CoherenceParams, delta_t: float) -> float:
    """Expected HOM visibility for a coincidence window of width delta_t.

    Closed form of the ratio of gate-integrated interfering to
    non-interfering coincidence densities; independent of the gate start.
    Near gamma = Gamma the expression is evaluated by a second-order
    series in (gamma - Gamma) to avoid the removable singularity.
    """
    if delta_t <= 0:
        raise ValueError("delta_t must be positive")
    g = cp.decay_rate
    y = cp.gamma
    denom = -math.expm1(-g * delta_t)
    denom2 = denom * denom
    if abs(g - y) < 1e-6 * g:
        eps = y - g
        e2 = math.exp(-2.0 * g * delta_t)
        c0 = delta_t + 1.0 / (2.0 * g)
        c1 = delta_t**2 / 2.0 + delta_t / (2.0 * g) + 1.0 / (4.0 * g**2)
        c2 = (
            delta_t**3 / 6.0
            + delta_t**2 / (4.0 * g)
            + delta_t / (4.0 * g**2)
            + 1.0 / (8.0 * g**3)
        )
        singular = -g * e2 * (c0 - eps * c1 + eps * eps * c2)
        return (g / (g + y) + singular) / denom2
    term1 = g / (g + y)
    term2 = g / (g - y) * math.exp(-2.0 * g * delta_t)
    term3 = 2.0 * g**2 / (g**2 - y**2) * math.exp(-(g + y) * delta_t)
    return (term1 + term2 - term3) / denom2


def beat_density(t_d, tau, cp: CoherenceParams, kind: str = "beating"):
    """Pair coincidence density for the three beat-model components.

    kind="beating": photons from the two different optical lines,
    Gamma^2 [1 + cos(2*pi*dnu*tau + pi) e^(-gamma*tau)] e^(-Gamma(2t_d+tau)).
    kind="same-line": the dnu = 0 case, Gamma^2 (1 - e^(-gamma*tau)) e^(...).
    kind="noise": the gamma -> inf limit (no coherence term).
    """
    t_d = np.asarray(t_d, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(t_d < 0) or np.any(tau < 0):
        raise ValueError("t_d and tau must be non-negative")
    g = cp.decay_rate
    base = g * g * np.exp(-g * (2.0 * t_d + tau))
    if kind == "beating":
        return base * (1.0 + np.cos(TWO_PI * cp.splitting * tau + math.pi) * np.exp(-cp.gamma * tau))
    if kind == "same-line":
        return base * -np.expm1(-cp.gamma * tau)
    if kind == "noise":
        return base
    raise ValueError(f"unknown density kind: {kind!r}")


def beat_integrated(tau, cp: CoherenceParams, gate: GateWindow, kind: str = "beating"):
    """Gate-integrated beat-model component as a function of tau >= 0.

    Integrates the density over the first detection time within the gate,
    (Gamma/2) e^(-2*Gamma*t_start) e^(-Gamma*tau) [1 - e^(-2*Gamma*(W-tau))]
    times the component's coherence factor; zero for tau >= gate width.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be non-negative")
    g = cp.decay_rate
    width = gate.width
    inside = tau < width
    envelope = np.where(
        inside,
        0.5 * g * math.exp(-2.0 * g * gate.t_start) * np.exp(-g * tau)
        * -np.expm1(-2.0 * g * (width - tau)),
        0.0,
    )
    if kind == "beating":
        factor = 1.0 + np.cos(TWO_PI * cp.splitting * tau + math.pi) * np.exp(-cp.gamma * tau)
    elif kind == "same-line":
        factor = -np.expm1(-cp.gamma * tau)
    elif kind == "noise":
        factor = np.ones_like(tau)
    else:
        raise ValueError(f"unknown density kind: {kind!r}")
    return envelope * factor


def gaussian_kernel(sigma: float, step: float, n_sigma: float = 6.0) -> np.ndarray:
    """Discrete Gaussian kernel truncated at +-n_sigma and renormalized."""
    if sigma <= 0:
        return np.array([1.0])
    half = max(1, int(math.ceil(n_sigma * sigma / step)))
    x = np.arange(-half, half + 1) * step
    kernel = np.exp(-0.5 * (x / sigma) ** 2)
    return kernel / kernel.sum()


def convolve_and_bin(
    density,
    bin_centers: np.ndarray,
    bin_width: float,
    sigma: float,
    oversample: int = 10,
    smoothing: int = 1,
) -> np.ndarray:
    """Evaluate a tau density, convolve with a Gaussian, integrate per bin.

    The density callable is evaluated on a grid oversampled by
    ``oversample`` relative to ``bin_width`` and padded so the truncated
    kernel never wraps. Returns the per-bin integral of the convolved
    density (subsample mean times bin_width), optionally smoothed with the
    renormalized moving average.
    """
    if oversample < 1:
        raise ValueError("oversample must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    step = bin_width / oversample
    pad = 0.0 if sigma == 0 else 6.0 * sigma
    n_pad = int(math.ceil(pad / step))
    lo = bin_centers[0] - bin_width / 2.0
    fine = lo + (np.arange(-n_pad, bin_centers.size * oversample + n_pad) + 0.5) * step
    values = density(fine)
    if sigma > 0:
        kernel = gaussian_kernel(sigma, step)
        values = np.convolve(values, kernel, mode="same")
    if n_pad:
        values = values[n_pad:-n_pad]
    binned = values.reshape(bin_centers.size, oversample).mean(axis=1) * bin_width
    if smoothing > 1:
        binned = moving_average(binned, smoothing)
    return binned


def moving_average(values: np.ndarray, order: int) -> np.ndarray:
    """Centered moving average of odd order, truncated at the edges.

    Renormalized so the total is preserved exactly.
    """
    if order < 1 or order % 2 == 0:
        raise ValueError("smoothing order must be odd and >= 1")
    if order == 1:
        return np.asarray(values, dtype=float).copy()
    values = np.asarray(values, dtype=float)
    window = np.ones(order)
    sums = np.convolve(values, window, mode="same")
    counts = np.convolve(np.ones_like(values), window, mode="same")
    averaged = sums / counts
    total = values.sum()
    averaged_total = averaged.sum()
    if total != 0.0 and averaged_total != 0.0:
        averaged *= total / averaged_total
    return averaged


def beat_pattern(
    bin_centers: np.ndarray,
    cp: CoherenceParams,
    bc: BeatCoefficients,
    gate: GateWindow,
    bin_width: float,
    smoothing: int = 1,
) -> np.ndarray:
    """Expected counts per bin of the three-component beat model.

    Sums c1*(beating) + c2*(same-line) + c3*(noise) gate-integrated
    components at |tau - t0|, extends symmetrically to tau < 0, convolves
    with the detector-response Gaussian of width sigma_det, integrates per
    bin and applies the same moving average the measurement pipeline uses.
    """
    bin_centers = np.asarray(bin_centers, dtype=float)
    if bin_centers.size < 2:
        raise ValueError("need at least two bins")
    steps = np.diff(bin_centers)
    if not np.allclose(steps, bin_width, rtol=1e-9, atol=1e-12):
        raise ValueError("bin_centers must be uniform with spacing bin_width")

    def density(tau):
        u = np.abs(tau - bc.t0)
        return (
            bc.c1 * beat_integrated(u, cp, gate, "beating")
            + bc.c2 * beat_integrated(u, cp, gate, "same-line")
            + bc.c3 * beat_integrated(u, cp, gate, "noise")
        )

    return convolve_and_bin(
        density, bin_centers, bin_width, bc.sigma_det, oversample=10, smoothing=smoothing
    )
