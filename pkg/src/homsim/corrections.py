"""Experimental-imperfection algebra for HOM visibilities.

Converts between the raw five-peak visibility and the two-photon overlap
integral, accounting for signal-to-noise, beam-splitter imbalance, fringe
deficit and arrival-time jitter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from scipy.special import erfcx

from .params import InterferometerParams, Measurement


@dataclass(frozen=True)
class NoiseModel:
    """Per-pulse photon statistics of signal (p) and background (q) sources.

    At most one photon per source per pulse; the derived probabilities for
    n = 0, 1, 2 photons in a pulse are p0 = (1-p)(1-q),
    p1 = p(1-q) + (1-p)q, p2 = pq.
    """

    p: float
    q: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0 or not 0.0 <= self.q <= 1.0:
            raise ValueError("photon probabilities must lie in [0, 1]")

    @classmethod
    def from_sn(cls, sn: float, p: float) -> "NoiseModel":
        """Build from a signal-to-noise ratio; q = p/sn (sn = inf means q = 0)."""
        if sn <= 0:
            raise ValueError("signal-to-noise ratio must be positive")
        return cls(p=p, q=0.0 if math.isinf(sn) else p / sn)

    @property
    def p0(self) -> float:
        return (1.0 - self.p) * (1.0 - self.q)

    @property
    def p1(self) -> float:
        return self.p * (1.0 - self.q) + (1.0 - self.p) * self.q

    @property
    def p2(self) -> float:
        return self.p * self.q

    @property
    def sn(self) -> float:
        """Signal-to-noise ratio p/q (inf when q = 0)."""
        if self.q == 0.0:
            return math.inf
        return self.p / self.q

    @property
    def signal_fraction(self) -> float:
        """p/(p+q), the probability that a detected photon is signal.

        Equals SN/(SN+1) and stays finite for q = 0.
        """
        total = self.p + self.q
        return 0.0 if total == 0.0 else self.p / total

    @property
    def mean_photons(self) -> float:
        """Mean photon number per pulse, p1 + 2*p2 = p + q."""
        return self.p + self.q

    @property
    def g_same_pulse(self) -> float:
        """Two-photons-in-one-pulse parameter g = 2*p2/(p1 + 2*p2)^2."""
        total = self.p + self.q
        return 0.0 if total == 0.0 else 2.0 * self.p2 / total**2


@dataclass(frozen=True)
class CorrectionInputs:
    """Everything needed to turn a raw visibility into an overlap integral."""

    v0: float
    sn: float
    alpha1: float = 1.0
    alpha2: float = 1.0
    epsilon: float = 0.0
    beta_jitter: float = 1.0
    g: Optional[float] = None
    sigma_v0: float = 0.0

    def __post_init__(self):
        if not -1.0 <= self.v0 <= 1.0:
            raise ValueError("raw visibility must lie in [-1, 1]")
        if self.sn <= 0:
            raise ValueError("signal-to-noise ratio must be positive")
        if self.alpha1 < 1.0 - 1e-12 or self.alpha2 < 1.0 - 1e-12:
            raise ValueError("alpha factors are >= 1 by construction")
        if not 0.0 < self.beta_jitter <= 1.0:
            raise ValueError("beta_jitter must lie in (0, 1]")


@dataclass(frozen=True)
class CorrectedVisibility(Measurement):
    """Corrected overlap integral; carries a warning on over-correction."""

    warning: Optional[str] = None


def g_lower_bound(sn: float) -> float:
    """Minimum same-pulse two-photon parameter at signal-to-noise ``sn``.

    Reached when multi-photon events come solely from signal-background
    coincidence: g = 2*SN/(SN+1)^2.
    """
    if sn <= 0:
        raise ValueError("signal-to-noise ratio must be positive")
    if math.isinf(sn):
        return 0.0
    return 2.0 * sn / (sn + 1.0) ** 2


def jitter_factor(sigma_jitter: float, lifetime: float) -> float:
    """Overlap reduction from Gaussian arrival-time jitter between the two photons.

    Averages exp(-|dt|/tau) over dt ~ N(0, sigma^2):
    exp[(sigma/(sqrt(2)tau))^2] * erfc(sigma/(sqrt(2)tau)).
    """
    if sigma_jitter < 0:
        raise ValueError("jitter must be non-negative")
    if lifetime <= 0:
        raise ValueError("lifetime must be positive")
    x = sigma_jitter / (math.sqrt(2.0) * lifetime)
    return float(erfcx(x))


def _braces(sn: float, alpha1: float, alpha2: float, g: Optional[float]):
    """The two bracket factors of the visibility-correction formula.

    With the default g (its lower bound 2SN/(SN+1)^2) these reduce to
    ((SN+1)/SN)^2*alpha + 2*alpha'/SN.
    """
    if g is None:
        g = g_lower_bound(sn)
    if math.isinf(sn):
        inv_sf2 = 1.0
    else:
        inv_sf2 = ((sn + 1.0) / sn) ** 2
    b1 = inv_sf2 * (alpha2 + g * alpha1)
    b2 = inv_sf2 * (alpha1 + g * alpha2)
    return b1, b2


def correct_visibility(inputs: CorrectionInputs) -> CorrectedVisibility:
    """Extract the two-photon overlap integral from a raw visibility.

    V = [B1 - (1 - V0)*B2] / ((1-eps)^2 * beta_jitter) with the bracket
    factors B1, B2 encoding signal-to-noise and splitter imbalance; with
    beta_jitter = 1 this is the jitter-free correction formula exactly.
    """
    b1, b2 = _braces(inputs.sn, inputs.alpha1, inputs.alpha2, inputs.g)
    scale = (1.0 - inputs.epsilon) ** 2 * inputs.beta_jitter
    value = (b1 - (1.0 - inputs.v0) * b2) / scale
    sigma = (b2 / scale) * inputs.sigma_v0
    warning = None
    if value > 1.0 + max(0.02, 2.0 * sigma):
        warning = (
            f"corrected visibility {value:.4f} exceeds 1; "
            "inputs are mutually inconsistent (over-correction)"
        )
    return CorrectedVisibility(value=value, sigma=sigma, warning=warning)


def max_raw_visibility(
    sn: float,
    ifm: Optional[InterferometerParams] = None,
    beta_jitter: float = 1.0,
    g: Optional[float] = None,
) -> float:
    """Raw visibility reached by a perfect overlap integral (V = 1).

    Solves the correction formula for V0 at V = 1. ``ifm=None`` means an
    ideal interferometer (balanced splitters, no fringe deficit).
    """
    if ifm is None:
        alpha1 = alpha2 = 1.0
        epsilon = 0.0
    else:
        alpha1, alpha2, epsilon = ifm.alpha1, ifm.alpha2, ifm.fringe_deficit
    b1, b2 = _braces(sn, alpha1, alpha2, g)
    return 1.0 - (b1 - (1.0 - epsilon) ** 2 * beta_jitter) / b2


def normalized_visibility(v_during: Measurement, v_before: Measurement) -> Measurement:
    """Ratio of corrected visibilities with and without the control pulse.

    First-order uncertainty propagation for a ratio of independent
    Gaussian-distributed values.
    """
    if v_before.value <= 0:
        raise ValueError("reference visibility must be positive")
    ratio = v_during.value / v_before.value
    rel = 0.0
    if v_during.value != 0.0:
        rel = math.hypot(v_during.sigma / v_during.value, v_before.sigma / v_before.value)
        sigma = abs(ratio) * rel
    else:
        sigma = v_during.sigma / v_before.value
    return Measurement(ratio, sigma)


def beat_coefficient_ratios(
    v_norm: float,
    sn: float,
    g: float,
    epsilon: float,
    alpha1: float,
    alpha2: float,
    sigma_v_norm: float = 0.0,
) -> tuple[Measurement, Measurement]:
    """Coefficient ratios (c2/c1, c3/c1) of the three-component beat model.

    c2/c1 = V_norm/(1 - V_norm); c3/c1 = (1 + c2/c1) *
    [(alpha2 + 2*alpha1*g) / (SN/(SN+1))^2 / (1-eps)^2 - 1].
    """
    if not 0.0 < v_norm < 1.0:
        raise ValueError("normalized visibility must lie strictly in (0, 1)")
    c2_over_c1 = v_norm / (1.0 - v_norm)
    sigma_c2 = sigma_v_norm / (1.0 - v_norm) ** 2
    sf = 1.0 if math.isinf(sn) else sn / (sn + 1.0)
    pedestal = (alpha2 + 2.0 * alpha1 * g) / (sf**2 * (1.0 - epsilon) ** 2) - 1.0
    c3_over_c1 = (1.0 + c2_over_c1) * pedestal
    sigma_c3 = sigma_c2 * abs(pedestal)
    return Measurement(c2_over_c1, sigma_c2), Measurement(c3_over_c1, sigma_c3)


def self_consistent_pedestal_ratio(
    v_norm: float,
    sn: float,
    g: float,
    epsilon: float,
    alpha1: float,
    alpha2: float,
) -> float:
    """c3/c1 consistent with this package's central-peak area algebra.

    Same structure as :func:`beat_coefficient_ratios` but with the
    same-pulse noise term entering the central peak singly (the
    convention predict_peak_areas and the simulator share), so fits of
    simulated histograms see a pedestal that matches their data.
    """
    if not 0.0 < v_norm < 1.0:
        raise ValueError("normalized visibility must lie strictly in (0, 1)")
    sf = 1.0 if math.isinf(sn) else sn / (sn + 1.0)
    pedestal = (alpha2 + g * alpha1) / (sf**2 * (1.0 - epsilon) ** 2) - 1.0
    return (1.0 / (1.0 - v_norm)) * pedestal


def characterize_beamsplitters(
    n11: float, n12: float, n21: float, n22: float
) -> tuple[float, float, float]:
    """T/R ratios of both splitters and the fringe-contrast bound they set.

    ``n_ij`` are photon counts on detector i in the early (j=1) / late
    (j=2) time bin of a double-pulse calibration run. Detector
    efficiencies cancel in both ratios.

    Returns (T1/R1, T2/R2, contrast_bound).
    """
    if min(n11, n12, n21, n22) <= 0:
        raise ValueError("all four calibration counts must be positive")
    ratio1 = math.sqrt((n11 * n21) / (n12 * n22))
    ratio2 = math.sqrt((n12 * n21) / (n11 * n22))
    x = math.sqrt(ratio1 * ratio2)
    bound = 2.0 / (x + 1.0 / x)
    return ratio1, ratio2, bound
