"""Seeded stochastic simulation of the full two-pulse interference experiment.

Every cycle fires two excitation pulses through the unbalanced
interferometer; photons carry their spin-tagged color, route through the
splitters, and pairs meeting at the output splitter from opposite ports
draw a split-vs-bunch outcome from the two-photon amplitude rule. The
emitted stream reproduces the analytic five-peak algebra and the gated
visibility law by construction.

Reproducibility: cycles are processed in fixed 65536-cycle blocks, each
driven by its own counter-based Philox substream keyed by (seed, block).
The draw order inside a block is a fixed sequence of whole-array calls,
so identical seed and config give a bit-identical stream for any worker
count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    CoincidenceHistogram,
    TimeTagStream,
    build_coincidence_histogram,
    extract_peak_areas,
    predict_peak_shape,
)
from .corrections import NoiseModel
from .correlation import CoherenceParams
from .params import EmitterParams, GateWindow, InterferometerParams
from .spin import SpinParams, flipped_population
from .units import TWO_PI, ns_to_ps

CHUNK_CYCLES = 1 << 16

_COLOR_NOISE = 2


class UndersampledError(RuntimeError):
    """Raised when a comparison run has too few cycles; carries an estimate."""

    def __init__(self, message: str, required_cycles: int):
        super().__init__(message)
        self.required_cycles = required_cycles


@dataclass(frozen=True)
class RFPulse:
    """Spin-control pulse between the two excitations of a cycle."""

    duration: float = 19.0
    delay: float = 18.0
    flip_prob: Optional[float] = None

    def __post_init__(self):
        if self.duration < 0 or self.delay < 0:
            raise ValueError("duration and delay must be non-negative")
        if self.flip_prob is not None and not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must lie in [0, 1]")


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one simulated run."""

    emitter: EmitterParams
    interferometer: InterferometerParams
    noise: NoiseModel
    spin: SpinParams = field(default_factory=SpinParams)
    rf: Optional[RFPulse] = None
    pulse_energy: float = 5.5
    n_cycles: int = 100_000
    seed: int = 0
    mode: str = "hom"
    repetition_periods: int = 10

    def __post_init__(self):
        if self.mode not in ("hom", "hbt"):
            raise ValueError("mode must be 'hom' or 'hbt'")
        if self.n_cycles < 1:
            raise ValueError("n_cycles must be at least 1")
        if self.pulse_energy < 0:
            raise ValueError("pulse_energy must be non-negative")
        min_periods = 3 if self.mode == "hom" else 1
        if self.repetition_periods < min_periods:
            raise ValueError(
                f"repetition_periods must be >= {min_periods} so cycles do not overlap"
            )
        if self.rf is not None and self.rf.delay + self.rf.duration > self.interferometer.path_delay:
            raise ValueError("RF pulse must end before the second excitation")

    @property
    def period(self) -> float:
        """Cycle repetition period in ns."""
        return self.repetition_periods * self.interferometer.path_delay

    @property
    def excitation_probability(self) -> float:
        return -math.expm1(-self.pulse_energy / self.emitter.saturation_energy)

    @property
    def coherence(self) -> CoherenceParams:
        """Coherence constants at this interferometer's path delay."""
        return CoherenceParams.from_components(
            decay_rate=self.emitter.decay_rate,
            diffusion_amplitude=self.emitter.diffusion_amplitude,
            diffusion_time=self.emitter.diffusion_time,
            pure_dephasing=self.emitter.pure_dephasing,
            path_delay=self.interferometer.path_delay,
            splitting=self.emitter.splitting,
        )


def resolve_flip_prob(cfg: ExperimentConfig) -> float:
    """RF-induced subspace flip probability for this configuration.

    Uses the explicit override when given, otherwise the phase-averaged
    spin dynamics at the configured pulse duration, averaged over both
    initial subspaces.
    """
    if cfg.rf is None:
        return 0.0
    if cfg.rf.flip_prob is not None:
        return cfg.rf.flip_prob
    flip_a = flipped_population(cfg.spin, [cfg.rf.duration], start_half=True)[0]
    flip_b = flipped_population(cfg.spin, [cfg.rf.duration], start_half=False)[0]
    return 0.5 * float(flip_a + flip_b)


def _pair_outcome(
    rng: np.random.Generator,
    mask: np.ndarray,
    start_a: np.ndarray,
    det_a: np.ndarray,
    start_b: np.ndarray,
    det_b: np.ndarray,
    port_a: np.ndarray,
    m_factor: np.ndarray,
    ifm: InterferometerParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Detector assignment for opposite-port pairs (a on port_a, b on the other).

    When the earlier detection falls after both wavepacket starts the
    photons are indistinguishable from that moment on and the amplitude
    rule applies with interference term ``m_factor``; otherwise the pair
    routes by identity (transmit/transmit or reflect/reflect orderings).
    Returns detectors (1 or 2) for photons a and b; 0 where masked out.
    """
    n = mask.size
    u = rng.random(n)
    t2, r2 = ifm.t2, ifm.r2
    contrast2 = (1.0 - ifm.fringe_deficit) ** 2

    first_is_a = det_a <= det_b
    overlap = np.minimum(det_a, det_b) >= np.maximum(start_a, start_b)
    m_eff = np.where(overlap, contrast2 * m_factor, 0.0)

    # Outcome probabilities for [first->D1,second->D2], [first->D2,second->D1],
    # [both->D1], [both->D2].
    p_split = 0.5 * (t2**2 + r2**2) - t2 * r2 * m_eff
    p_s1 = np.where(overlap, p_split, 0.0)
    p_s2 = p_s1.copy()
    # identity routing: the port-0 photon transmits to D1, the port-1 photon to D2
    first_is_port0 = np.where(first_is_a, port_a == 0, port_a == 1)
    p_s1 = np.where(overlap, p_s1, np.where(first_is_port0, t2**2, r2**2))
    p_s2 = np.where(overlap, p_s2, np.where(first_is_port0, r2**2, t2**2))
    p_b1 = np.where(overlap, t2 * r2 * (1.0 + m_eff), t2 * r2)

    det_first = np.zeros(n, dtype=np.uint8)
    det_second = np.zeros(n, dtype=np.uint8)
    c1 = p_s1
    c2 = c1 + p_s2
    c3 = c2 + p_b1
    det_first[mask & (u < c1)] = 1
    det_second[mask & (u < c1)] = 2
    sel = mask & (u >= c1) & (u < c2)
    det_first[sel] = 2
    det_second[sel] = 1
    sel = mask & (u >= c2) & (u < c3)
    det_first[sel] = 1
    det_second[sel] = 1
    sel = mask & (u >= c3)
    det_first[sel] = 2
    det_second[sel] = 2

    out_a = np.where(first_is_a, det_first, det_second)
    out_b = np.where(first_is_a, det_second, det_first)
    return np.where(mask, out_a, 0).astype(np.uint8), np.where(mask, out_b, 0).astype(np.uint8)


def _same_port_pair_outcome(
    rng: np.random.Generator,
    mask: np.ndarray,
    det_a: np.ndarray,
    det_b: np.ndarray,
    port: np.ndarray,
    ifm: InterferometerParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Detector assignment for same-slot pairs arriving on one port.

    Coincidence (split) outcomes are drawn at half the independent-routing
    rate, T2*R2 total, which keeps the simulated central-peak noise term
    consistent with the visibility-correction algebra; the removed weight
    goes to the bunched outcomes.
    """
    n = mask.size
    u = rng.random(n)
    t2, r2 = ifm.t2, ifm.r2
    p_split_each = 0.5 * t2 * r2
    # both photons transmitting bunches them on this port's transmit detector
    p_bunch_transmit = t2**2
    det_first = np.zeros(n, dtype=np.uint8)
    det_second = np.zeros(n, dtype=np.uint8)
    first_is_a = det_a <= det_b

    c1 = p_split_each
    c2 = 2.0 * p_split_each
    c3 = c2 + p_bunch_transmit + p_split_each
    transmit_det = np.where(port == 0, 1, 2).astype(np.uint8)
    reflect_det = np.where(port == 0, 2, 1).astype(np.uint8)

    sel = mask & (u < c1)
    det_first[sel] = 1
    det_second[sel] = 2
    sel = mask & (u >= c1) & (u < c2)
    det_first[sel] = 2
    det_second[sel] = 1
    sel = mask & (u >= c2) & (u < c3)
    det_first[sel] = transmit_det[sel]
    det_second[sel] = transmit_det[sel]
    sel = mask & (u >= c3)
    det_first[sel] = reflect_det[sel]
    det_second[sel] = reflect_det[sel]

    out_a = np.where(first_is_a, det_first, det_second)
    out_b = np.where(first_is_a, det_second, det_first)
    return np.where(mask, out_a, 0).astype(np.uint8), np.where(mask, out_b, 0).astype(np.uint8)


def _interference_factor(
    color_a: np.ndarray,
    color_b: np.ndarray,
    tau: np.ndarray,
    gamma: float,
    splitting: float,
) -> np.ndarray:
    """Pairwise coherence factor M(tau): noise kills it, opposite colors beat."""
    noise_involved = (color_a == _COLOR_NOISE) | (color_b == _COLOR_NOISE)
    decay = np.exp(-gamma * np.abs(tau))
    beat = np.cos(TWO_PI * splitting * tau)
    same = color_a == color_b
    m = np.where(same, decay, beat * decay)
    return np.where(noise_involved, 0.0, m)


def _simulate_chunk(
    cfg: ExperimentConfig,
    flip_prob: float,
    run_label: int,
    start_cycle: int,
    n: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate cycles [start_cycle, start_cycle + n) into (channels, times_ns)."""
    chunk_index = start_cycle // CHUNK_CYCLES
    key = np.array([cfg.seed & 0xFFFFFFFFFFFFFFFF, 1 + chunk_index], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))

    ifm = cfg.interferometer
    em = cfg.emitter
    delta = ifm.path_delay
    period = cfg.period
    base = (1.0 + start_cycle + np.arange(n)) * period
    hbt = cfg.mode == "hbt"
    p_exc = cfg.excitation_probability
    q = cfg.noise.q
    gamma = cfg.coherence.gamma
    sigma_phot = ifm.sigma_arrival / math.sqrt(2.0)

    # Fixed draw order: excitation/shelving, noise, emission, jitter, labels,
    # paths, pair outcomes, thinning, detector jitter.
    exc1 = rng.random(n) < p_exc
    isc1 = exc1 & (rng.random(n) < em.isc_probability)
    dwell1 = rng.exponential(em.metastable_lifetime, n)
    sig1 = exc1 & ~isc1
    blocked2 = isc1 & (dwell1 > delta)
    if hbt:
        blocked2[:] = True  # single pulse per cycle
    exc2 = ~blocked2 & (rng.random(n) < p_exc)
    isc2 = exc2 & (rng.random(n) < em.isc_probability)
    sig2 = exc2 & ~isc2

    ns1 = rng.random(n) < q
    ns2 = rng.random(n) < q
    if hbt:
        ns2[:] = False

    emit = {k: rng.exponential(em.lifetime, n) for k in ("s1", "n1", "s2", "n2")}
    jit = {k: rng.normal(0.0, sigma_phot, n) if sigma_phot > 0 else np.zeros(n)
           for k in ("s1", "n1", "s2", "n2")}

    label0 = rng.integers(0, 2, n).astype(np.uint8)
    if em.isc_probability == 0.0:
        label0[:] = run_label
    relabel = rng.integers(0, 2, n).astype(np.uint8)
    rerand = isc1 & ~blocked2
    label_mid = np.where(rerand, relabel, label0)
    flips = rng.random(n) < flip_prob
    label2 = np.where(flips, 1 - label_mid, label_mid).astype(np.uint8)

    exists = {"s1": sig1, "n1": ns1, "s2": sig2, "n2": ns2}
    color = {
        "s1": label0.astype(np.int8),
        "s2": label2.astype(np.int8),
        "n1": np.full(n, _COLOR_NOISE, dtype=np.int8),
        "n2": np.full(n, _COLOR_NOISE, dtype=np.int8),
    }
    pulse_offset = {"s1": 0.0, "n1": 0.0, "s2": delta, "n2": delta}

    path = {}
    for k in ("s1", "n1", "s2", "n2"):
        u = rng.random(n)
        path[k] = np.where(u < ifm.t1, 0, 1).astype(np.uint8)  # 0 = short, 1 = long
        if hbt:
            path[k][:] = 0

    start = {}
    detect = {}
    for k in ("s1", "n1", "s2", "n2"):
        arm = 0.0 if hbt else path[k] * delta
        start[k] = pulse_offset[k] + arm + jit[k]
        detect[k] = start[k] + emit[k]

    detector = {k: np.zeros(n, dtype=np.uint8) for k in ("s1", "n1", "s2", "n2")}
    consumed = {k: np.zeros(n, dtype=bool) for k in ("s1", "n1", "s2", "n2")}
    partner_det = {k: np.zeros(n, dtype=np.uint8) for k in ("s1", "n1", "s2", "n2")}

    if not hbt:
        # Aligned opposite-port pairs: pulse-1 photon through the long arm
        # meets the pulse-2 photon through the short arm at the output.
        for a, b in (("s1", "s2"), ("s1", "n2"), ("n1", "s2"), ("n1", "n2")):
            mask = (
                exists[a]
                & exists[b]
                & (path[a] == 1)
                & (path[b] == 0)
                & ~consumed[a]
                & ~consumed[b]
            )
            tau = detect[b] - detect[a]
            m = _interference_factor(color[a], color[b], tau, gamma, em.splitting)
            da, db = _pair_outcome(
                rng, mask, start[a], detect[a], start[b], detect[b],
                np.full(n, 1, dtype=np.uint8), m, ifm,
            )
            detector[a] = np.where(mask, da, detector[a])
            detector[b] = np.where(mask, db, detector[b])
            partner_det[a] = np.where(mask, db, partner_det[a])
            partner_det[b] = np.where(mask, da, partner_det[b])
            consumed[a] |= mask
            consumed[b] |= mask

        # Same-pulse, same-path pairs arrive together on one port.
        for a, b in (("s1", "n1"), ("s2", "n2")):
            mask = (
                exists[a]
                & exists[b]
                & (path[a] == path[b])
                & ~consumed[a]
                & ~consumed[b]
            )
            da, db = _same_port_pair_outcome(rng, mask, detect[a], detect[b], path[a], ifm)
            detector[a] = np.where(mask, da, detector[a])
            detector[b] = np.where(mask, db, detector[b])
            consumed[a] |= mask
            consumed[b] |= mask

        # A same-pulse same-path partner whose mate was consumed by an
        # aligned draw coincides with *both* members of that couple. When
        # the couple bunched, route the partner so the cycle's expected
        # coincidences equal the pairwise algebra's total (halved split
        # against the mate plus plain flux against the mate's partner);
        # when the couple split, any routing yields exactly one
        # coincidence, so the photon stays independent.
        t2, r2 = ifm.t2, ifm.r2
        p_vs_bunched = 0.5 * (t2 * r2 + t2**2 + r2**2)
        for a, b in (("s1", "n1"), ("s2", "n2")):
            u = rng.random(n)
            for taken, orphan in ((a, b), (b, a)):
                mask = (
                    exists[taken]
                    & exists[orphan]
                    & (path[taken] == path[orphan])
                    & consumed[taken]
                    & ~consumed[orphan]
                    & (partner_det[taken] == detector[taken])
                )
                mate = detector[taken]
                other = np.where(mate == 1, 2, 1).astype(np.uint8)
                chosen = np.where(u < p_vs_bunched, other, mate)
                detector[orphan] = np.where(mask, chosen, detector[orphan])
                consumed[orphan] |= mask

    # Everything else routes independently: transmit side of port 0 is D1,
    # of port 1 is D2.
    for k in ("s1", "n1", "s2", "n2"):
        u = rng.random(n)
        transmit = u < ifm.t2
        port = path[k]
        det_independent = np.where(
            port == 0,
            np.where(transmit, 1, 2),
            np.where(transmit, 2, 1),
        ).astype(np.uint8)
        detector[k] = np.where(exists[k] & ~consumed[k], det_independent, detector[k])

    channels = []
    times = []
    for k in ("s1", "n1", "s2", "n2"):
        det = detector[k]
        keep = exists[k] & (det > 0)
        u = rng.random(n)
        eta = np.where(det == 1, ifm.eta1, ifm.eta2)
        keep &= u < eta
        tjit = rng.normal(0.0, ifm.sigma_det, n) if ifm.sigma_det > 0 else np.zeros(n)
        t_abs = base + detect[k] + tjit
        channels.append(det[keep])
        times.append(t_abs[keep])

    # Laser-clock sync ticks covering every slot photons can occupy.
    ticks = [0.0] if hbt else [0.0, delta, 2.0 * delta]
    sync_times = (base[:, None] + np.asarray(ticks)[None, :]).ravel()
    if start_cycle == 0:
        sync_times = np.concatenate([[base[0] - (period if hbt else delta)], sync_times])
    channels.append(np.zeros(sync_times.size, dtype=np.uint8))
    times.append(sync_times)

    ch = np.concatenate(channels)
    tt = np.concatenate(times)
    return ch, tt


def simulate_timetags(cfg: ExperimentConfig) -> TimeTagStream:
    """Run the configured experiment and return the merged time-tag stream."""
    flip_prob = resolve_flip_prob(cfg)
    rng0 = np.random.Generator(
        np.random.Philox(key=np.array([cfg.seed & 0xFFFFFFFFFFFFFFFF, 0], dtype=np.uint64))
    )
    run_label = int(rng0.integers(0, 2))

    starts = list(range(0, cfg.n_cycles, CHUNK_CYCLES))
    jobs = [(s, min(CHUNK_CYCLES, cfg.n_cycles - s)) for s in starts]

    def worker(job):
        s, n = job
        return _simulate_chunk(cfg, flip_prob, run_label, s, n)

    threads = int(os.environ.get("HOMSIM_THREADS", "1") or 1)
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(worker, jobs))
    else:
        results = [worker(job) for job in jobs]

    channels = np.concatenate([r[0] for r in results])
    times_ns = np.concatenate([r[1] for r in results])
    times_ps = ns_to_ps(times_ns)
    order = np.lexsort((channels, times_ps))
    return TimeTagStream(channels[order], times_ps[order])


@dataclass
class DivergenceReport:
    """Per-bin and per-peak agreement between a run and its analytic model."""

    reduced_chi2: Optional[float]
    dof: int
    n_bins_used: int
    per_peak_chi2: dict
    peak_area_z: dict
    total_observed: float
    total_expected: float
    degenerate: bool = False
    message: str = ""
    histogram: Optional[CoincidenceHistogram] = field(default=None, repr=False)
    expected: Optional[CoincidenceHistogram] = field(default=None, repr=False)


def mc_vs_analytic_report(
    cfg: ExperimentConfig,
    gate: GateWindow,
    bin_width: float = 0.1,
    halfwidth: float = 20.0,
    min_expected: float = 10.0,
    gamma_override: Optional[float] = None,
) -> DivergenceReport:
    """Chi-squared comparison of a simulated run against the analytic model.

    The analytic expectation is the five-peak shape model with this
    configuration's noise, splitter, coherence and flip parameters,
    scaled to the same total count; ``gamma_override`` substitutes a
    different coherence decay in the expectation (sensitivity checks).
    Refuses runs whose expected side-peak counts fall below 100.
    """
    realized_p = cfg.excitation_probability * (1.0 - cfg.emitter.isc_probability)
    if realized_p == 0.0 and cfg.noise.q == 0.0:
        return DivergenceReport(
            reduced_chi2=None,
            dof=0,
            n_bins_used=0,
            per_peak_chi2={},
            peak_area_z={},
            total_observed=0.0,
            total_expected=0.0,
            degenerate=True,
            message="degenerate input: no signal and no noise photons configured",
        )

    # the expectation uses the signal probability the simulator realizes
    # (pulse energy and shelving), not the configured nominal p
    realized = NoiseModel(p=realized_p, q=cfg.noise.q)

    delta = cfg.interferometer.path_delay
    span = 2.0 * delta + halfwidth + 5.0
    cp = cfg.coherence
    if gamma_override is not None:
        cp = CoherenceParams(
            decay_rate=cp.decay_rate, gamma=gamma_override, splitting=cp.splitting
        )
    flip_prob = resolve_flip_prob(cfg)
    expected = predict_peak_shape(
        realized,
        cfg.interferometer,
        cp,
        gate,
        n_repetitions=cfg.n_cycles,
        bin_width=bin_width,
        tau_min=-span,
        tau_max=span,
        flip_prob=flip_prob,
        lifetime=cfg.emitter.lifetime,
    )
    exp_areas = extract_peak_areas(expected, delta, halfwidth)
    min_side = min(exp_areas.side_minus, exp_areas.side_plus)
    if min_side < 100.0:
        per_cycle = min_side / cfg.n_cycles
        required = math.inf if per_cycle == 0 else int(math.ceil(100.0 / per_cycle))
        raise UndersampledError(
            f"expected side-peak counts {min_side:.1f} < 100; "
            f"need at least {required} cycles",
            required,
        )

    tags = simulate_timetags(cfg)
    hist = build_coincidence_histogram(
        tags, gate, bin_width, tau_min=-span, tau_max=span
    )
    obs_areas = extract_peak_areas(hist, delta, halfwidth)

    scale = hist.total / expected.total if expected.total > 0 else 1.0
    e = expected.counts * scale
    o = hist.counts
    used = e >= min_expected
    chi2_bins = np.zeros_like(e)
    chi2_bins[used] = (o[used] - e[used]) ** 2 / e[used]
    n_used = int(used.sum())
    dof = max(n_used - 1, 1)
    reduced = float(chi2_bins[used].sum() / dof) if n_used else None

    centers = hist.bin_centers
    per_peak = {}
    peak_z = {}
    names = {
        "outer_minus": -2.0 * delta,
        "side_minus": -delta,
        "center": 0.0,
        "side_plus": delta,
        "outer_plus": 2.0 * delta,
    }
    for name, c in names.items():
        window = used & (np.abs(centers - c) <= halfwidth)
        n_win = int(window.sum())
        per_peak[name] = float(chi2_bins[window].sum() / max(n_win, 1)) if n_win else None
        e_area = getattr(exp_areas, name) * scale
        o_area = getattr(obs_areas, name)
        peak_z[name] = float((o_area - e_area) / math.sqrt(max(e_area, 1.0)))

    return DivergenceReport(
        reduced_chi2=reduced,
        dof=dof,
        n_bins_used=n_used,
        per_peak_chi2=per_peak,
        peak_area_z=peak_z,
        total_observed=hist.total,
        total_expected=float(expected.total * scale),
        histogram=hist,
        expected=CoincidenceHistogram(
            bin_width=expected.bin_width,
            tau_min=expected.tau_min,
            tau_max=expected.tau_max,
            counts=e,
            smoothing=expected.smoothing,
        ),
    )
