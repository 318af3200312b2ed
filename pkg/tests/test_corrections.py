"""Imperfection-correction algebra: bounds, factors and inversions."""

import math

import numpy as np
import pytest
from scipy import integrate

from homsim.corrections import (
    CorrectionInputs,
    NoiseModel,
    beat_coefficient_ratios,
    characterize_beamsplitters,
    correct_visibility,
    g_lower_bound,
    jitter_factor,
    max_raw_visibility,
    normalized_visibility,
)
from homsim.core import predict_peak_areas, raw_visibility
from homsim.params import InterferometerParams, Measurement
from homsim.presets import reference_interferometer


class TestNoiseModel:
    def test_photon_number_probabilities_sum_to_one(self):
        nm = NoiseModel(p=0.747, q=0.0267)
        assert abs(nm.p0 + nm.p1 + nm.p2 - 1.0) < 1e-12

    def test_sn_and_signal_fraction(self):
        nm = NoiseModel.from_sn(28.0, 0.747)
        assert math.isclose(nm.sn, 28.0, rel_tol=1e-12)
        assert math.isclose(nm.signal_fraction, 28.0 / 29.0, rel_tol=1e-12)

    def test_g_same_pulse_matches_lower_bound(self):
        nm = NoiseModel.from_sn(28.0, 0.5)
        assert math.isclose(nm.g_same_pulse, g_lower_bound(28.0), rel_tol=1e-12)

    def test_invalid_probabilities_rejected(self):
        with pytest.raises(ValueError):
            NoiseModel(p=1.2, q=0.0)


class TestGLowerBound:
    def test_infinite_sn(self):
        assert g_lower_bound(math.inf) == 0.0

    def test_sn_one(self):
        assert g_lower_bound(1.0) == 0.5

    def test_sn_28(self):
        # 2*28/29^2
        assert abs(g_lower_bound(28.0) - 0.0665874) < 1e-6
        assert abs(g_lower_bound(28.0) - 0.06659) < 1e-4

    def test_minimized_by_pure_noise_mechanism(self):
        # any double-excitation admixture raises g at fixed SN
        for sn in (5.0, 28.0, 100.0):
            base = g_lower_bound(sn)
            nm = NoiseModel.from_sn(sn, 0.6)
            p2_extra = nm.p2 + 0.01  # double excitation adds to p2
            g_ext = 2.0 * p2_extra / (nm.p + nm.q) ** 2
            assert g_ext > base


class TestJitterFactor:
    def test_zero_jitter(self):
        assert jitter_factor(0.0, 6.0) == 1.0

    def test_reference_value(self):
        # 60 ps relative jitter on a 6 ns lifetime: 0.8% overlap loss
        value = jitter_factor(0.06, 6.0)
        assert abs(value - 0.9921) < 2e-4

    def test_against_convolution_quadrature(self):
        # oracle: average exp(-|dt|/tau) over a centred Gaussian of width sigma
        sigma, tau = 6.0, 6.0

        def integrand(x):
            return (
                math.exp(-abs(x) / tau)
                * math.exp(-0.5 * (x / sigma) ** 2)
                / (sigma * math.sqrt(2.0 * math.pi))
            )

        oracle, err = integrate.quad(
            integrand, -12.0 * sigma, 12.0 * sigma, points=[0.0], limit=400, epsabs=1e-14
        )
        assert err < 1e-12
        assert abs(jitter_factor(sigma, tau) - oracle) < 1e-10


class TestCorrectVisibility:
    def test_ideal_inputs_identity(self):
        res = correct_visibility(CorrectionInputs(v0=0.37, sn=math.inf))
        assert math.isclose(res.value, 0.37, rel_tol=1e-12)
        assert res.warning is None

    def test_reference_gated_point(self):
        ifm = reference_interferometer()
        res = correct_visibility(
            CorrectionInputs(
                v0=0.85,
                sn=28.0,
                alpha1=ifm.alpha1,
                alpha2=ifm.alpha2,
                epsilon=ifm.fringe_deficit,
                beta_jitter=0.992,
                sigma_v0=0.04,
            )
        )
        assert abs(res.value - 0.99) < 0.03

    @pytest.mark.parametrize("v_true", [0.1, 0.5, 0.9])
    def test_forward_inverse_roundtrip(self, v_true):
        ifm = reference_interferometer()
        nm = NoiseModel.from_sn(28.0, 0.747)
        areas = predict_peak_areas(nm, ifm, g=nm.g_same_pulse, v=v_true, n_repetitions=1.0)
        v0 = raw_visibility(areas).value
        res = correct_visibility(
            CorrectionInputs(
                v0=v0,
                sn=28.0,
                alpha1=ifm.alpha1,
                alpha2=ifm.alpha2,
                epsilon=ifm.fringe_deficit,
            )
        )
        assert abs(res.value - v_true) < 1e-6

    def test_overcorrection_warns(self):
        res = correct_visibility(CorrectionInputs(v0=0.99, sn=5.0))
        assert res.value > 1.0
        assert res.warning is not None

    def test_full_chain_forward_reproduces_reference_raw_visibility(self):
        # ungated reference conditions: dephasing-limited overlap times the
        # jitter factor, pushed through the five-peak algebra
        from homsim.units import mhz_to_rate

        gamma = mhz_to_rate(6.4)
        decay = 1.0 / 6.0
        overlap = decay / (decay + gamma) * jitter_factor(0.06, 6.0)
        ifm = reference_interferometer()
        nm = NoiseModel.from_sn(28.0, 0.747)
        areas = predict_peak_areas(nm, ifm, g=nm.g_same_pulse, v=overlap, n_repetitions=1.0)
        v0 = raw_visibility(areas)
        assert abs(v0.value - 0.69) < 0.03


class TestMaxRawVisibility:
    def test_ideal_limit(self):
        assert math.isclose(max_raw_visibility(math.inf), 1.0, rel_tol=1e-12)

    def test_sn_28_ideal(self):
        assert abs(max_raw_visibility(28.0) - 0.874) < 0.002

    def test_sn_28_measured_setup(self):
        ifm = reference_interferometer()
        beta = jitter_factor(0.06, 6.0)
        assert abs(max_raw_visibility(28.0, ifm, beta) - 0.86) < 0.01

    def test_monotonicity(self):
        ifm = reference_interferometer()
        assert max_raw_visibility(50.0) > max_raw_visibility(10.0)
        worse = InterferometerParams.from_ratios(1.129, 1.046, fringe_deficit=0.02)
        assert max_raw_visibility(28.0, ifm) > max_raw_visibility(28.0, worse)
        # output-splitter skew lowers the bound, as does skewing both
        # splitters together; input-splitter skew alone does not (it
        # suppresses the interfering path combination faster than the
        # side peaks), so only these two directions are monotone
        skew_out = InterferometerParams.from_ratios(1.129, 1.4, fringe_deficit=0.005)
        assert max_raw_visibility(28.0, ifm) > max_raw_visibility(28.0, skew_out)
        skew_both = InterferometerParams.from_ratios(1.5, 1.4, fringe_deficit=0.005)
        balanced = InterferometerParams.from_ratios(1.0, 1.0, fringe_deficit=0.005)
        assert max_raw_visibility(28.0, balanced) > max_raw_visibility(28.0, skew_both)


class TestNormalizedVisibility:
    def test_equal_is_unity(self):
        res = normalized_visibility(Measurement(0.5, 0.0), Measurement(0.5, 0.0))
        assert res.value == 1.0

    def test_half_pi_point(self):
        res = normalized_visibility(Measurement(0.3965, 0.059), Measurement(0.65, 0.05))
        assert abs(res.value - 0.61) < 0.005
        assert 0.07 < res.sigma < 0.13

    def test_quarter_pi_point(self):
        res = normalized_visibility(Measurement(0.5785, 0.05), Measurement(0.65, 0.05))
        assert abs(res.value - 0.89) < 0.005
        assert 0.07 < res.sigma < 0.13

    def test_rejects_nonpositive_reference(self):
        with pytest.raises(ValueError):
            normalized_visibility(Measurement(0.5, 0.0), Measurement(0.0, 0.0))


class TestBeatCoefficientRatios:
    def test_half_transfer(self):
        c21, _ = beat_coefficient_ratios(0.5, 28.0, 0.0666, 0.005, 1.007, 1.001)
        assert c21.value == 1.0

    def test_reference_transfer(self):
        c21, _ = beat_coefficient_ratios(0.61, 28.0, 0.0666, 0.005, 1.007, 1.001, sigma_v_norm=0.10)
        assert abs(c21.value - 1.5641) < 1e-3
        assert 0.3 < c21.sigma < 0.9

    def test_noise_pedestal_ratio(self):
        ifm = reference_interferometer()
        _, c31 = beat_coefficient_ratios(
            0.61, 28.0, 0.0666, ifm.fringe_deficit, ifm.alpha1, ifm.alpha2
        )
        assert abs(c31.value - 0.60) < 0.12

    def test_rejects_full_transfer(self):
        with pytest.raises(ValueError):
            beat_coefficient_ratios(1.0, 28.0, 0.0666, 0.005, 1.0, 1.0)


class TestCharacterizeBeamsplitters:
    def test_equal_counts(self):
        r1, r2, bound = characterize_beamsplitters(10.0, 10.0, 10.0, 10.0)
        assert r1 == r2 == 1.0
        assert bound == 1.0

    def test_forward_synthesis_with_unequal_efficiencies(self):
        t1, t2 = 1.129 / 2.129, 1.046 / 2.046
        r1, r2 = 1.0 - t1, 1.0 - t2
        eta1, eta2, n0 = 0.43, 0.81, 1e6
        n11 = eta1 * t1 * r2 * n0
        n12 = eta1 * r1 * t2 * n0
        n21 = eta2 * t1 * t2 * n0
        n22 = eta2 * r1 * r2 * n0
        ratio1, ratio2, _ = characterize_beamsplitters(n11, n12, n21, n22)
        assert abs(ratio1 - 1.129) < 1e-12
        assert abs(ratio2 - 1.046) < 1e-12

    def test_reference_bound(self):
        t1, t2 = 1.129 / 2.129, 1.046 / 2.046
        n11, n12 = t1 * (1 - t2), (1 - t1) * t2
        n21, n22 = t1 * t2, (1 - t1) * (1 - t2)
        _, _, bound = characterize_beamsplitters(n11, n12, n21, n22)
        assert abs(bound - 0.9965) < 2e-4

    def test_scaling_invariance(self):
        base = characterize_beamsplitters(3.0, 2.5, 4.1, 3.3)
        scaled = characterize_beamsplitters(30.0, 25.0, 41.0, 33.0)
        rows = characterize_beamsplitters(3.0 * 7, 2.5 * 7, 4.1 * 0.2, 3.3 * 0.2)
        assert np.allclose(base, scaled)
        assert np.allclose(base, rows)

    def test_rejects_zero_counts(self):
        with pytest.raises(ValueError):
            characterize_beamsplitters(1.0, 0.0, 1.0, 1.0)
