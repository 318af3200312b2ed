"""Two-photon interference simulator and parameter-estimation toolkit.

Models a spin-3/2 solid-state single-photon emitter with spin-tagged
optical transitions behind an unbalanced Mach-Zehnder interferometer:
coincidence histograms and time gating, the five-peak visibility algebra
with its imperfection corrections, gated-visibility and quantum-beat
coherence models, temperature-dependent dephasing, non-RWA spin dynamics,
a seeded Monte Carlo of the full experiment, and least-squares estimators
binding the forward models to data.
"""

from .core import (
    CoincidenceHistogram,
    PeakAreas,
    TimeTagStream,
    build_coincidence_histogram,
    deconvolve_lorentzian,
    excitation_probability,
    extract_peak_areas,
    g2_zero,
    gate_stream,
    predict_peak_areas,
    predict_peak_shape,
    raw_visibility,
    saturation_intensity,
)
from .corrections import (
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
from .correlation import (
    BeatCoefficients,
    CoherenceParams,
    beat_density,
    beat_integrated,
    beat_pattern,
    g2_density,
    gated_visibility,
)
from .dephasing import (
    VibronicParams,
    critical_temperature,
    dephasing_rate,
    extract_dephasing_limited,
    extract_diffusion_limited,
    linewidth,
)
from .fitting import (
    FitResult,
    fit_beat,
    fit_gamma_from_visibility,
    fit_least_squares,
    fit_lorentzian_lines,
    fit_rabi,
    fit_saturation,
    fit_vibronic_prefactor,
)
from .montecarlo import (
    DivergenceReport,
    ExperimentConfig,
    RFPulse,
    UndersampledError,
    mc_vs_analytic_report,
    resolve_flip_prob,
    simulate_timetags,
)
from .params import EmitterParams, GateWindow, InterferometerParams, Measurement
from .spin import (
    SpinParams,
    build_static_hamiltonian,
    calibrate_pulse,
    phase_averaged_populations,
    propagate,
    rho_half,
    rho_three_half,
)

__version__ = "0.1.0"
