"""Time-tag streams, gated coincidence histograms and five-peak analysis."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .corrections import NoiseModel, jitter_factor
from .correlation import CoherenceParams, beat_integrated, convolve_and_bin, moving_average
from .params import GateWindow, InterferometerParams, Measurement
from .units import PS_PER_NS

SYNC_CHANNEL = 0
DET1_CHANNEL = 1
DET2_CHANNEL = 2


@dataclass(frozen=True, eq=False)
class TimeTagStream:
    """Ordered detection records: (channel, timestamp in integer ps).

    Channel 0 is the laser-clock sync, channels 1 and 2 the two
    detectors. Timestamps must be non-decreasing.
    """

    channels: np.ndarray
    times_ps: np.ndarray

    def __post_init__(self):
        channels = np.ascontiguousarray(self.channels, dtype=np.uint8)
        times = np.ascontiguousarray(self.times_ps, dtype=np.int64)
        if channels.shape != times.shape or channels.ndim != 1:
            raise ValueError("channels and times_ps must be equal-length 1-D arrays")
        if times.size and np.any(np.diff(times) < 0):
            raise ValueError("timestamps must be non-decreasing")
        if channels.size and not np.all(channels <= 2):
            raise ValueError("channels must be 0 (sync), 1 or 2")
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "times_ps", times)

    def __len__(self) -> int:
        return self.times_ps.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeTagStream):
            return NotImplemented
        return np.array_equal(self.channels, other.channels) and np.array_equal(
            self.times_ps, other.times_ps
        )

    @classmethod
    def from_records(cls, records: Sequence[tuple[int, int]]) -> "TimeTagStream":
        if not records:
            return cls(np.empty(0, dtype=np.uint8), np.empty(0, dtype=np.int64))
        arr = np.asarray(records, dtype=np.int64)
        return cls(arr[:, 0].astype(np.uint8), arr[:, 1])


@dataclass
class CoincidenceHistogram:
    """Binned counts of detector-pair time differences tau = t2 - t1.

    Bin i covers [tau_min + i*w, tau_min + (i+1)*w). Counts are float so
    the renormalized moving average stays sum-preserving; unsmoothed
    histograms hold exact integers.
    """

    bin_width: float
    tau_min: float
    tau_max: float
    counts: np.ndarray = field(repr=False)
    smoothing: int = 1

    def __post_init__(self):
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")
        n_bins = int(round((self.tau_max - self.tau_min) / self.bin_width))
        if n_bins < 1:
            raise ValueError("histogram must have at least one bin")
        self.counts = np.asarray(self.counts, dtype=float)
        if self.counts.size != n_bins:
            raise ValueError(f"expected {n_bins} bins, got {self.counts.size}")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def n_bins(self) -> int:
        return self.counts.size

    @property
    def bin_centers(self) -> np.ndarray:
        return self.tau_min + (np.arange(self.n_bins) + 0.5) * self.bin_width

    @property
    def total(self) -> float:
        return float(self.counts.sum())


@dataclass(frozen=True)
class PeakAreas:
    """Integrated counts of the five coincidence peaks."""

    center: float
    side_minus: float
    side_plus: float
    outer_minus: float
    outer_plus: float

    def __post_init__(self):
        if min(self.center, self.side_minus, self.side_plus, self.outer_minus, self.outer_plus) < 0:
            raise ValueError("peak areas must be non-negative")

    @property
    def side_sum(self) -> float:
        return self.side_minus + self.side_plus

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.outer_minus, self.side_minus, self.center, self.side_plus, self.outer_plus)


def gate_relative_times(tags: TimeTagStream) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Detector click times relative to the most recent sync tick.

    Returns (channels, absolute times ps, relative times ns) for the
    detector clicks only.
    """
    if tags.times_ps.size and np.any(np.diff(tags.times_ps) < 0):
        raise ValueError("stream is not time-ordered")
    sync_mask = tags.channels == SYNC_CHANNEL
    if not np.any(sync_mask):
        raise ValueError("stream contains no sync channel (0) records")
    sync_times = tags.times_ps[sync_mask]
    det_mask = ~sync_mask
    det_channels = tags.channels[det_mask]
    det_times = tags.times_ps[det_mask]
    idx = np.searchsorted(sync_times, det_times, side="right") - 1
    if np.any(idx < 0):
        raise ValueError("detector click precedes the first sync record")
    rel_ns = (det_times - sync_times[idx]) / PS_PER_NS
    return det_channels, det_times, rel_ns


def gate_stream(tags: TimeTagStream, gate: GateWindow) -> TimeTagStream:
    """Drop detector clicks outside the gate; sync records are kept.

    Idempotent: gating an already-gated stream with the same window
    changes nothing.
    """
    det_channels, det_times, rel_ns = gate_relative_times(tags)
    keep = (rel_ns >= gate.t_start) & (rel_ns <= gate.t_stop)
    sync_mask = tags.channels == SYNC_CHANNEL
    channels = np.concatenate([tags.channels[sync_mask], det_channels[keep]])
    times = np.concatenate([tags.times_ps[sync_mask], det_times[keep]])
    order = np.lexsort((channels, times))
    return TimeTagStream(channels[order], times[order])


def build_coincidence_histogram(
    tags: TimeTagStream,
    gate: GateWindow,
    bin_width: float,
    smoothing: int = 1,
    tau_min: float = -120.0,
    tau_max: float = 120.0,
) -> CoincidenceHistogram:
    """Histogram of t(D2) - t(D1) over all gated detector-click pairs.

    Every D1 click is paired with every D2 click whose time difference
    falls inside [tau_min, tau_max] (not only nearest neighbours), after
    both clicks pass the gate relative to their own sync tick.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    gated = gate_stream(tags, gate)
    det_mask = gated.channels != SYNC_CHANNEL
    channels = gated.channels[det_mask]
    times = gated.times_ps[det_mask]
    t1 = times[channels == DET1_CHANNEL]
    t2 = times[channels == DET2_CHANNEL]

    n_bins = int(round((tau_max - tau_min) / bin_width))
    if n_bins < 1:
        raise ValueError("tau range shorter than one bin")
    edges = tau_min + bin_width * np.arange(n_bins + 1)
    counts = np.zeros(n_bins)

    if t1.size and t2.size:
        lo_ps = int(math.floor(tau_min * PS_PER_NS))
        hi_ps = int(math.ceil(tau_max * PS_PER_NS))
        lo = np.searchsorted(t2, t1 + lo_ps, side="left")
        hi = np.searchsorted(t2, t1 + hi_ps, side="right")
        n_per = hi - lo
        total = int(n_per.sum())
        if total:
            first = np.repeat(t1, n_per)
            offsets = np.arange(total) - np.repeat(np.cumsum(n_per) - n_per, n_per)
            second = t2[np.repeat(lo, n_per) + offsets]
            tau_ns = (second - first) / PS_PER_NS
            counts, _ = np.histogram(tau_ns, bins=edges)
            counts = counts.astype(float)

    if smoothing > 1:
        counts = moving_average(counts, smoothing)
    return CoincidenceHistogram(
        bin_width=bin_width,
        tau_min=tau_min,
        tau_max=edges[-1],
        counts=counts,
        smoothing=smoothing,
    )


def _window_sum(h: CoincidenceHistogram, center: float, halfwidth: float) -> float:
    centers = h.bin_centers
    mask = np.abs(centers - center) <= halfwidth + 1e-9
    return float(h.counts[mask].sum())


def extract_peak_areas(
    h: CoincidenceHistogram, delta_t: float, halfwidth: float = 20.0
) -> PeakAreas:
    """Sum counts in +-halfwidth windows around the five peak centers."""
    if halfwidth <= 0:
        raise ValueError("halfwidth must be positive")
    if halfwidth >= delta_t / 2.0:
        raise ValueError("integration windows overlap: halfwidth >= delta_t/2")
    if h.tau_min > -(2.0 * delta_t + halfwidth) or h.tau_max < 2.0 * delta_t + halfwidth:
        raise ValueError("histogram does not span the five-peak pattern")
    return PeakAreas(
        center=_window_sum(h, 0.0, halfwidth),
        side_minus=_window_sum(h, -delta_t, halfwidth),
        side_plus=_window_sum(h, delta_t, halfwidth),
        outer_minus=_window_sum(h, -2.0 * delta_t, halfwidth),
        outer_plus=_window_sum(h, 2.0 * delta_t, halfwidth),
    )


def raw_visibility(areas: PeakAreas) -> Measurement:
    """Raw HOM visibility V0 = 1 - 2*A0/(A- + A+), Poisson uncertainty.

    Each area's variance is the area itself (counting statistics).
    """
    s = areas.side_sum
    if s <= 0:
        raise ValueError("side-peak areas vanish; visibility undefined")
    a0 = areas.center
    value = 1.0 - 2.0 * a0 / s
    var = 4.0 * a0 / s**2 + 4.0 * a0**2 / s**3
    return Measurement(value, math.sqrt(var))


def g2_zero(
    h: CoincidenceHistogram,
    repetition_period: float,
    pulse_spacing: float,
    halfwidth: float = 20.0,
) -> Measurement:
    """Center-peak area over the mean uncorrelated side-peak area.

    Side-peak centers are m*period and m*period +- spacing (m integer),
    excluding zero; for a uniform pulse train (spacing = period) this is
    simply the multiples of the period. Requires at least two side peaks
    fully inside the histogram range.
    """
    if halfwidth <= 0 or halfwidth >= pulse_spacing / 2.0:
        raise ValueError("halfwidth must be positive and below pulse_spacing/2")
    centers = set()
    m_max = int(math.ceil((h.tau_max + repetition_period) / repetition_period)) + 1
    for m in range(-m_max, m_max + 1):
        for s in (-pulse_spacing, 0.0, pulse_spacing):
            c = m * repetition_period + s
            if abs(c) < 1e-9:
                continue
            if h.tau_min <= c - halfwidth and c + halfwidth <= h.tau_max:
                centers.add(round(c, 9))
    if len(centers) < 2:
        raise ValueError("fewer than two uncorrelated side peaks resolvable")
    side_areas = np.array([_window_sum(h, c, halfwidth) for c in sorted(centers)])
    mean_side = side_areas.mean()
    if mean_side <= 0:
        raise ValueError("side peaks empty; normalization undefined")
    a0 = _window_sum(h, 0.0, halfwidth)
    value = a0 / mean_side
    var_mean = side_areas.sum() / side_areas.size**2
    var = max(a0, 1.0) / mean_side**2 + (a0 / mean_side**2) ** 2 * var_mean
    return Measurement(value, math.sqrt(var))


def predict_peak_areas(
    noise: NoiseModel,
    ifm: InterferometerParams,
    g: float,
    v: float,
    n_repetitions: float,
) -> PeakAreas:
    """Closed-form expected areas of the five peaks.

    ``v`` is the effective two-photon overlap (dephasing and arrival
    jitter folded in); ``g`` the two-photons-per-pulse parameter. The
    central-peak noise term enters with weight g*(T1^2+R1^2)*T2*R2 so the
    area model is the exact inverse of correct_visibility; the side-peak
    noise terms carry 2g.
    """
    if not 0.0 <= v <= 1.0:
        raise ValueError("overlap v must lie in [0, 1]")
    if g < 0:
        raise ValueError("g must be non-negative")
    c = noise.mean_photons**2 * ifm.eta1 * ifm.eta2 * n_repetitions
    t1, r1, t2, r2 = ifm.t1, ifm.r1, ifm.t2, ifm.r2
    sf2 = noise.signal_fraction**2
    contrast2 = (1.0 - ifm.fringe_deficit) ** 2
    center = c * (
        t1 * r1 * ((t2**2 + r2**2) - 2.0 * sf2 * contrast2 * t2 * r2 * v)
        + g * (t1**2 + r1**2) * t2 * r2
    )
    side_plus = c * ((t1**2 + r1**2) * t2 * r2 + 2.0 * g * t1 * r1 * t2**2)
    side_minus = c * ((t1**2 + r1**2) * t2 * r2 + 2.0 * g * t1 * r1 * r2**2)
    outer_plus = c * t1 * r1 * t2**2
    outer_minus = c * t1 * r1 * r2**2
    return PeakAreas(
        center=center,
        side_minus=side_minus,
        side_plus=side_plus,
        outer_minus=outer_minus,
        outer_plus=outer_plus,
    )


def predict_peak_shape(
    noise: NoiseModel,
    ifm: InterferometerParams,
    cp: CoherenceParams,
    gate: GateWindow,
    n_repetitions: float,
    bin_width: float,
    tau_min: float = -120.0,
    tau_max: float = 120.0,
    g: Optional[float] = None,
    flip_prob: float = 0.0,
    smoothing: int = 1,
    lifetime: Optional[float] = None,
) -> CoincidenceHistogram:
    """Expected coincidence histogram of the five-peak pattern.

    Combines the peak-area algebra with the gate-integrated pair kernels:
    every peak shares the non-interfering kernel, the central peak's
    interference deficit uses the same-line kernel (weight 1 - flip_prob)
    and the beating kernel (weight flip_prob). Counts are absolute and
    include the gate acceptance loss. All kernels are convolved with a
    Gaussian of width sqrt(sigma_arrival^2 + 2*sigma_det^2); the
    arrival-jitter overlap loss is applied as the scalar factor beta, which
    is exact when sigma_arrival = 0.
    """
    if g is None:
        g = noise.g_same_pulse
    if lifetime is None:
        lifetime = 1.0 / cp.decay_rate
    beta = jitter_factor(ifm.sigma_arrival, lifetime)
    c = noise.mean_photons**2 * ifm.eta1 * ifm.eta2 * n_repetitions
    t1, r1, t2, r2 = ifm.t1, ifm.r1, ifm.t2, ifm.r2
    sf2 = noise.signal_fraction**2
    contrast2 = (1.0 - ifm.fringe_deficit) ** 2
    delta = ifm.path_delay

    weights = {
        0.0: (
            c * (t1 * r1 * (t2**2 + r2**2) + g * (t1**2 + r1**2) * t2 * r2),
            c * t1 * r1 * 2.0 * sf2 * contrast2 * t2 * r2 * beta,
        ),
        delta: (c * ((t1**2 + r1**2) * t2 * r2 + 2.0 * g * t1 * r1 * t2**2), 0.0),
        -delta: (c * ((t1**2 + r1**2) * t2 * r2 + 2.0 * g * t1 * r1 * r2**2), 0.0),
        2.0 * delta: (c * t1 * r1 * t2**2, 0.0),
        -2.0 * delta: (c * t1 * r1 * r2**2, 0.0),
    }

    def density(tau):
        out = np.zeros_like(tau)
        for center, (flux, deficit) in weights.items():
            u = np.abs(tau - center)
            base = beat_integrated(u, cp, gate, "noise")
            out += flux * base
            if deficit:
                interfering = (1.0 - flip_prob) * (
                    base - beat_integrated(u, cp, gate, "same-line")
                ) + flip_prob * (base - beat_integrated(u, cp, gate, "beating"))
                out -= deficit * interfering
        return out

    n_bins = int(round((tau_max - tau_min) / bin_width))
    centers = tau_min + (np.arange(n_bins) + 0.5) * bin_width
    sigma_tau = math.sqrt(ifm.sigma_arrival**2 + 2.0 * ifm.sigma_det**2)
    counts = convolve_and_bin(density, centers, bin_width, sigma_tau, smoothing=smoothing)
    counts = np.clip(counts, 0.0, None)
    return CoincidenceHistogram(
        bin_width=bin_width,
        tau_min=tau_min,
        tau_max=tau_min + n_bins * bin_width,
        counts=counts,
        smoothing=smoothing,
    )


def saturation_intensity(energy, saturation_energy: float, i_max: float):
    """Pulsed-excitation count rate I_max * (1 - exp(-E/E0))."""
    return i_max * excitation_probability(energy, saturation_energy)


def excitation_probability(energy, saturation_energy: float):
    """Excitation probability per pulse, 1 - exp(-E/E0); accepts arrays."""
    energy = np.asarray(energy, dtype=float)
    if np.any(energy < 0):
        raise ValueError("pulse energy must be non-negative")
    if saturation_energy <= 0:
        raise ValueError("saturation energy must be positive")
    result = -np.expm1(-energy / saturation_energy)
    return float(result) if result.ndim == 0 else result


def deconvolve_lorentzian(
    measured_fwhm: float,
    instrument_fwhm: float,
    sigma_measured: float = 0.0,
    sigma_instrument: float = 0.0,
) -> Measurement:
    """Remove a Lorentzian instrument response from a measured FWHM.

    Lorentzian convolution adds widths, so the true width is
    measured - instrument; uncertainties add in quadrature.
    """
    if instrument_fwhm < 0:
        raise ValueError("instrument width must be non-negative")
    if measured_fwhm < instrument_fwhm:
        raise ValueError("measured width below instrument width: unphysical input")
    return Measurement(
        measured_fwhm - instrument_fwhm, math.hypot(sigma_measured, sigma_instrument)
    )
