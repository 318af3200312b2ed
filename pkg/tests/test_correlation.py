"""Coincidence densities, the gated-visibility law and the beat model."""

import math

import numpy as np
import pytest
from scipy import integrate

from homsim.correlation import (
    BeatCoefficients,
    CoherenceParams,
    beat_density,
    beat_integrated,
    beat_pattern,
    g2_density,
    gated_visibility,
    moving_average,
)
from homsim.params import GateWindow
from homsim.units import mhz_to_rate

DECAY = 1.0 / 6.0


def quad_visibility(decay, gamma, width):
    """Independent oracle: double quadrature of the correlation densities."""
    num, err_n = integrate.dblquad(
        lambda tau, td: decay**2 * (1 - math.exp(-gamma * tau)) * math.exp(-decay * (2 * td + tau)),
        0.0,
        width,
        0.0,
        lambda td: width - td,
        epsabs=1e-13,
        epsrel=1e-13,
    )
    den, err_d = integrate.dblquad(
        lambda tau, td: decay**2 * math.exp(-decay * (2 * td + tau)),
        0.0,
        width,
        0.0,
        lambda td: width - td,
        epsabs=1e-13,
        epsrel=1e-13,
    )
    assert max(err_n, err_d) < 1e-10
    return 1.0 - num / den


class TestCoherenceParams:
    def test_components_compose(self):
        cp = CoherenceParams.from_components(
            decay_rate=DECAY,
            diffusion_amplitude=0.2,
            diffusion_time=100.0,
            pure_dephasing=0.02,
            path_delay=48.7,
        )
        expected = 0.2 * -math.expm1(-((48.7 / 100.0) ** 2)) + 0.04
        assert math.isclose(cp.gamma, expected, rel_tol=1e-12)

    def test_inconsistent_components_rejected(self):
        with pytest.raises(ValueError, match="inconsistent"):
            CoherenceParams(
                decay_rate=DECAY,
                gamma=0.5,
                diffusion_amplitude=0.2,
                diffusion_time=100.0,
                pure_dephasing=0.02,
                path_delay=48.7,
            )

    def test_partial_components_rejected(self):
        with pytest.raises(ValueError, match="all"):
            CoherenceParams(decay_rate=DECAY, gamma=0.1, diffusion_amplitude=0.2)


class TestG2Density:
    def test_zero_separation_vanishes(self):
        cp = CoherenceParams(decay_rate=DECAY, gamma=0.05)
        assert g2_density(1.0, 0.0, cp) == 0.0

    def test_distinguishable_limit_equals_normalization(self):
        cp = CoherenceParams(decay_rate=DECAY, gamma=1e9)
        t_d, tau = 2.0, 1.5
        assert math.isclose(
            float(g2_density(t_d, tau, cp)),
            float(g2_density(t_d, tau, cp, normalization=True)),
            rel_tol=1e-12,
        )

    def test_gate_integral_matches_gated_visibility(self):
        gamma = mhz_to_rate(6.4)
        cp = CoherenceParams(decay_rate=DECAY, gamma=gamma)
        width = 16.5
        oracle = quad_visibility(DECAY, gamma, width)
        assert abs(gated_visibility(cp, width) - oracle) < 1e-6


class TestGatedVisibility:
    def test_no_dephasing_is_unity(self):
        cp = CoherenceParams(decay_rate=DECAY, gamma=0.0)
        for width in (0.5, 4.0, 50.0):
            assert math.isclose(gated_visibility(cp, width), 1.0, rel_tol=1e-12)

    def test_wide_gate_limit(self):
        gamma = mhz_to_rate(6.4)
        cp = CoherenceParams(decay_rate=DECAY, gamma=gamma)
        assert abs(gated_visibility(cp, 200.0) - DECAY / (DECAY + gamma)) < 1e-6

    def test_reference_windows(self):
        cp = CoherenceParams(decay_rate=DECAY, gamma=mhz_to_rate(6.4))
        assert abs(gated_visibility(cp, 4.0) - 0.949) < 1e-3
        assert abs(gated_visibility(cp, 16.5) - 0.846) < 1e-3

    @pytest.mark.parametrize("gamma_mhz", [1.0, 6.4, 20.0, 119.0])
    @pytest.mark.parametrize("width", [0.5, 4.0, 16.5, 100.0])
    def test_against_quadrature_grid(self, gamma_mhz, width):
        gamma = mhz_to_rate(gamma_mhz)
        cp = CoherenceParams(decay_rate=DECAY, gamma=gamma)
        assert abs(gated_visibility(cp, width) - quad_visibility(DECAY, gamma, width)) < 1e-6

    @pytest.mark.parametrize("width", [0.5, 4.0, 16.5])
    def test_series_branch_against_quadrature(self, width):
        for gamma in (DECAY, DECAY * (1 + 1e-7), DECAY * (1 - 1e-7)):
            cp = CoherenceParams(decay_rate=DECAY, gamma=gamma)
            assert abs(gated_visibility(cp, width) - quad_visibility(DECAY, gamma, width)) < 1e-9

    def test_series_branch_continuity(self):
        v_exact = gated_visibility(CoherenceParams(decay_rate=DECAY, gamma=DECAY), 10.0)
        for factor in (1 - 1e-7, 1 + 1e-7):
            v = gated_visibility(CoherenceParams(decay_rate=DECAY, gamma=DECAY * factor), 10.0)
            assert abs(v - v_exact) < 1e-7

    def test_strictly_decreasing_in_gamma_and_width(self):
        gammas = mhz_to_rate(np.array([1.0, 3.0, 6.4, 20.0, 119.0]))
        values = [gated_visibility(CoherenceParams(DECAY, g), 10.0) for g in gammas]
        assert all(a > b for a, b in zip(values, values[1:]))
        cp = CoherenceParams(decay_rate=DECAY, gamma=mhz_to_rate(6.4))
        widths = [0.5, 2.0, 4.0, 16.5, 60.0]
        values = [gated_visibility(cp, w) for w in widths]
        assert all(a > b for a, b in zip(values, values[1:]))

    @pytest.mark.parametrize("gamma_mhz", [6.4, 13.4, 33.2])
    def test_short_gate_approaches_unity(self, gamma_mhz):
        cp = CoherenceParams(decay_rate=DECAY, gamma=mhz_to_rate(gamma_mhz))
        assert gated_visibility(cp, 0.01) > 0.999

    def test_rejects_nonpositive_window(self):
        cp = CoherenceParams(decay_rate=DECAY, gamma=0.01)
        with pytest.raises(ValueError):
            gated_visibility(cp, 0.0)


class TestBeatDensity:
    def test_beating_vanishes_at_zero(self):
        cp = CoherenceParams(decay_rate=DECAY, gamma=0.0, splitting=0.966)
        assert abs(float(beat_density(1.0, 0.0, cp, "beating"))) < 1e-15

    def test_constructive_fringe_doubles_noise(self):
        cp = CoherenceParams(decay_rate=DECAY, gamma=0.0, splitting=0.966)
        tau = 1.0 / (2.0 * 0.966)
        beating = float(beat_density(0.7, tau, cp, "beating"))
        noise = float(beat_density(0.7, tau, cp, "noise"))
        assert math.isclose(beating, 2.0 * noise, rel_tol=1e-9)

    def test_same_line_is_zero_splitting_case(self):
        cp = CoherenceParams(decay_rate=DECAY, gamma=0.3, splitting=0.0)
        t_d, tau = 1.2, 2.3
        assert math.isclose(
            float(beat_density(t_d, tau, cp, "beating")),
            float(beat_density(t_d, tau, cp, "same-line")),
            rel_tol=1e-12,
        )

    @pytest.mark.parametrize("kind", ["beating", "same-line", "noise"])
    def test_gate_integration_matches_quadrature(self, kind):
        cp = CoherenceParams(decay_rate=DECAY, gamma=0.7477, splitting=0.966)
        gate = GateWindow(1.5, 18.0)
        for tau in (0.3, 1.7, 6.5, 15.9):
            oracle, err = integrate.quad(
                lambda td: float(beat_density(td, tau, cp, kind)),
                gate.t_start,
                gate.t_stop - tau,
                epsabs=1e-13,
                epsrel=1e-13,
                limit=200,
            )
            assert err < 1e-12
            value = float(beat_integrated(tau, cp, gate, kind))
            assert abs(value - oracle) <= 1e-9 * max(abs(oracle), 1e-30)

    def test_integrated_outside_gate_is_zero(self):
        cp = CoherenceParams(decay_rate=DECAY, gamma=0.1, splitting=0.966)
        gate = GateWindow(1.5, 18.0)
        assert float(beat_integrated(17.0, cp, gate, "noise")) == 0.0

    def test_fringes_average_out_over_one_period(self):
        # with gamma = 0, one fringe period of the beating density integrates
        # to the noise density up to the exponential-envelope residual
        cp = CoherenceParams(decay_rate=DECAY, gamma=0.0, splitting=0.966)
        period = 1.0 / 0.966
        t_d = 0.5
        beating, _ = integrate.quad(lambda tau: float(beat_density(t_d, tau, cp, "beating")), 2.0, 2.0 + period)
        noise, _ = integrate.quad(lambda tau: float(beat_density(t_d, tau, cp, "noise")), 2.0, 2.0 + period)
        assert abs(beating - noise) / noise < DECAY / (2.0 * math.pi * 0.966) * 1.1


class TestBeatPattern:
    GATE = GateWindow(1.5, 18.0)

    def grid(self, half=17.0, width=0.1):
        n = int(round(2 * half / width))
        return -half + (np.arange(n) + 0.5) * width

    def test_pure_envelope_case(self):
        cp = CoherenceParams(decay_rate=DECAY, gamma=0.0, splitting=0.966)
        bc = BeatCoefficients(c1=100.0, c2=0.0, c3=0.0, t0=0.0, sigma_det=0.0)
        centers = self.grid()
        counts = beat_pattern(centers, cp, bc, self.GATE, 0.1)
        # per-bin quadrature of the envelope formula is the oracle
        for i in range(5, centers.size - 5, 11):
            lo, hi = centers[i] - 0.05, centers[i] + 0.05
            oracle, _ = integrate.quad(
                lambda tau: 100.0 * float(beat_integrated(abs(tau), cp, self.GATE, "beating")),
                lo,
                hi,
                epsabs=1e-13,
            )
            # 10x-oversampled binning is exact to ~1% at the cusp bins and
            # much better elsewhere
            assert abs(counts[i] - oracle) < 1.2e-2 * abs(oracle) + 1e-6

    def test_reference_fringe_spacing(self):
        # minimum at tau = t0 = 0, first maximum half a fringe later
        cp = CoherenceParams(decay_rate=DECAY, gamma=0.7477, splitting=0.966)
        bc = BeatCoefficients(c1=739.0, c2=739.0 * 1.55, c3=739.0 * 0.60, t0=0.0, sigma_det=0.16)
        centers = self.grid(width=0.02)
        counts = beat_pattern(centers, cp, bc, self.GATE, 0.02)
        window = (centers > 0.15) & (centers < 0.9)
        first_max = centers[window][np.argmax(counts[window])]
        assert abs(first_max - 1.0 / (2.0 * 0.966)) < 0.05
        dip = counts[np.abs(centers) < 0.05].mean()
        assert dip < counts[window].max()

    def test_detector_response_flattens_fringe(self):
        cp = CoherenceParams(decay_rate=DECAY, gamma=0.0, splitting=1.0)
        centers = self.grid()
        sharp = beat_pattern(
            centers, cp, BeatCoefficients(c1=1.0, c2=0.0, c3=1.0, sigma_det=0.0), self.GATE, 0.1
        )
        blurred = beat_pattern(
            centers, cp, BeatCoefficients(c1=1.0, c2=0.0, c3=1.0, sigma_det=0.4), self.GATE, 0.1
        )

        def contrast(counts):
            window = (np.abs(centers) > 0.6) & (np.abs(centers) < 2.7)
            sub = counts[window]
            return (sub.max() - sub.min()) / (sub.max() + sub.min())

        expected_suppression = math.exp(-2.0 * math.pi**2 * 1.0**2 * 0.4**2)
        assert contrast(blurred) < 4.0 * expected_suppression + 0.02
        assert contrast(sharp) > 0.2

    def test_symmetric_about_offset(self):
        cp = CoherenceParams(decay_rate=DECAY, gamma=0.3, splitting=0.966)
        bc = BeatCoefficients(c1=10.0, c2=5.0, c3=3.0, t0=0.0, sigma_det=0.1)
        centers = self.grid()
        counts = beat_pattern(centers, cp, bc, self.GATE, 0.1)
        assert np.allclose(counts, counts[::-1], rtol=1e-9, atol=1e-12)


class TestMovingAverage:
    def test_order_one_is_identity(self):
        x = np.array([1.0, 2.0, 3.0])
        assert np.array_equal(moving_average(x, 1), x)

    def test_sum_preserved(self):
        rng = np.random.default_rng(0)
        x = rng.poisson(20.0, 101).astype(float)
        smoothed = moving_average(x, 3)
        assert math.isclose(smoothed.sum(), x.sum(), rel_tol=1e-12)

    def test_rejects_even_order(self):
        with pytest.raises(ValueError):
            moving_average(np.ones(5), 2)
