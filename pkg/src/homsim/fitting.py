"""Nonlinear least-squares estimation binding forward models to data."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from .core import CoincidenceHistogram, deconvolve_lorentzian, saturation_intensity
from .correlation import BeatCoefficients, CoherenceParams, beat_pattern, gated_visibility
from .params import GateWindow, Measurement
from .spin import SpinParams, flip_curves
from .units import K_BOLTZMANN_MEV


@dataclass
class FitResult:
    """Parameter estimates with curvature-based one-sigma uncertainties."""

    params: np.ndarray
    sigmas: Optional[np.ndarray]
    objective: float
    reduced_chisq: float
    converged: bool
    n_evaluations: int
    message: str = ""
    covariance: Optional[np.ndarray] = None
    warning: Optional[str] = None


def fit_least_squares(
    model: Callable[[np.ndarray, Sequence[float]], np.ndarray],
    x: np.ndarray,
    y: np.ndarray,
    sigma_y: np.ndarray,
    init: Sequence[float],
    bounds: Optional[tuple] = None,
    max_nfev: int = 2000,
) -> FitResult:
    """Minimize sum(((y - model(x, p)) / sigma_y)^2) from ``init``.

    Trust-region least squares with a central-difference jacobian;
    uncertainties are the square roots of the inverse-curvature diagonal
    scaled by the reduced chi-square. Non-convergence returns the
    best-so-far parameters with ``converged=False``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sigma_y = np.broadcast_to(np.asarray(sigma_y, dtype=float), y.shape)
    if np.any(sigma_y <= 0):
        raise ValueError("sigma_y must be positive")
    init = np.asarray(init, dtype=float)
    if y.size < init.size:
        raise ValueError("need at least as many points as free parameters")

    def residual(p):
        return (np.asarray(model(x, p), dtype=float) - y) / sigma_y

    if bounds is None:
        bounds = (-np.inf, np.inf)
    res = least_squares(
        residual, init, jac="3-point", bounds=bounds, method="trf", max_nfev=max_nfev
    )
    objective = float(2.0 * res.cost)
    dof = max(y.size - init.size, 1)
    reduced = objective / dof
    converged = bool(res.success)

    covariance = None
    sigmas = None
    warning = None
    if converged:
        jtj = res.jac.T @ res.jac
        try:
            covariance = np.linalg.inv(jtj) * reduced
        except np.linalg.LinAlgError:
            covariance = np.linalg.pinv(jtj) * reduced
            warning = "singular curvature; covariance from pseudo-inverse"
        sigmas = np.sqrt(np.clip(np.diag(covariance), 0.0, None))
    return FitResult(
        params=res.x,
        sigmas=sigmas,
        objective=objective,
        reduced_chisq=reduced,
        converged=converged,
        n_evaluations=int(res.nfev),
        message=str(res.message),
        covariance=covariance,
        warning=warning,
    )


def chi_square(model, x, y, sigma_y, params) -> float:
    """The scalar least-squares objective at ``params``."""
    r = (np.asarray(model(x, params), dtype=float) - np.asarray(y, dtype=float)) / sigma_y
    return float(np.sum(r * r))


def chi_square_gradient(model, x, y, sigma_y, params, rel_step: float = 1e-6) -> np.ndarray:
    """Central-finite-difference gradient of the objective."""
    params = np.asarray(params, dtype=float)
    grad = np.empty_like(params)
    for i in range(params.size):
        h = rel_step * max(abs(params[i]), 1.0)
        up = params.copy()
        dn = params.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (chi_square(model, x, y, sigma_y, up) - chi_square(model, x, y, sigma_y, dn)) / (
            2.0 * h
        )
    return grad


def fit_saturation(energies, intensities, sigma=None) -> FitResult:
    """Fit I_max and the saturation energy to pulsed count rates."""
    energies = np.asarray(energies, dtype=float)
    intensities = np.asarray(intensities, dtype=float)
    if sigma is None:
        sigma = np.full_like(intensities, max(intensities.max() * 0.01, 1e-12))

    def model(x, p):
        return saturation_intensity(x, max(p[1], 1e-12), p[0])

    init = [intensities.max(), max(energies.mean(), 1e-6)]
    return fit_least_squares(model, energies, intensities, sigma, init, bounds=([0, 1e-9], np.inf))


def fit_gamma_from_visibility(
    windows, visibilities, sigma_v, decay_rate: float
) -> FitResult:
    """Single-parameter fit of the gated-visibility law to (window, V) data."""
    windows = np.asarray(windows, dtype=float)
    visibilities = np.asarray(visibilities, dtype=float)
    if windows.size < 2:
        raise ValueError("need at least two gating points")
    if np.any(visibilities <= 0) or np.any(visibilities > 1.0 + 1e-9):
        raise ValueError("visibilities must lie in (0, 1]")
    if np.all(visibilities >= 1.0 - 1e-12):
        return FitResult(
            params=np.array([0.0]),
            sigmas=np.array([0.0]),
            objective=0.0,
            reduced_chisq=0.0,
            converged=True,
            n_evaluations=0,
            message="all visibilities are unity; dephasing-free",
        )

    def model(x, p):
        cp = CoherenceParams(decay_rate=decay_rate, gamma=max(p[0], 0.0))
        return np.array([gated_visibility(cp, dt) for dt in np.atleast_1d(x)])

    v_tail = visibilities[np.argmax(windows)]
    gamma0 = decay_rate * max(1.0 / min(v_tail, 0.999) - 1.0, 1e-6)
    return fit_least_squares(
        model, windows, visibilities, sigma_v, [gamma0], bounds=([0.0], [np.inf])
    )


def vibronic_basis(temperatures, gap: float = 4.4) -> np.ndarray:
    """gap^3 * Bose-occupation basis the dephasing prefactor multiplies."""
    t = np.asarray(temperatures, dtype=float)
    return gap**3 / np.expm1(gap / (K_BOLTZMANN_MEV * t))


def fit_vibronic_prefactor(
    temperatures, rates, sigma=None, gap: float = 4.4, weighted: bool = False
) -> FitResult:
    """Closed-form linear least squares for the dephasing prefactor.

    ``rates`` are pure-dephasing rates in ns^-1; the returned parameter is
    the prefactor in rad/ns per meV^3 units consistent with
    ``dephasing_rate``. ``weighted=True`` applies 1/sigma^2 weights.
    """
    t = np.asarray(temperatures, dtype=float)
    y = np.asarray(rates, dtype=float)
    f = vibronic_basis(t, gap)
    if weighted:
        if sigma is None:
            raise ValueError("weighted fit needs uncertainties")
        w = 1.0 / np.asarray(sigma, dtype=float) ** 2
    else:
        w = np.ones_like(y)
    denom = float(np.sum(w * f * f))
    if denom <= 0:
        raise ValueError("degenerate basis; cannot fit")
    a = float(np.sum(w * f * y)) / denom
    residual = y - a * f
    dof = max(y.size - 1, 1)
    chi2 = float(np.sum(w * residual**2))
    reduced = chi2 / dof
    sigma_a = math.sqrt(max(reduced, np.finfo(float).tiny) / denom)
    return FitResult(
        params=np.array([a]),
        sigmas=np.array([sigma_a]),
        objective=chi2,
        reduced_chisq=reduced,
        converged=True,
        n_evaluations=1,
        message="closed-form linear least squares",
    )


def _normalize_curve(curve: np.ndarray) -> np.ndarray:
    peak = float(np.max(curve))
    if peak < 1e-9:
        return np.zeros_like(curve)
    return curve / peak


def fit_rabi(
    durations_half,
    pops_half,
    durations_three_half,
    pops_three_half,
    spin_base: SpinParams,
    init: Optional[tuple[float, float]] = None,
    sigma: float = 0.02,
) -> FitResult:
    """Joint two-parameter (Omega, B_z) fit of both amplitude-normalized curves.

    Both the data and the model are peak-normalized, mirroring how the
    measured oscillation amplitudes are calibrated out.
    """
    d_a = np.asarray(durations_half, dtype=float)
    d_b = np.asarray(durations_three_half, dtype=float)
    y = np.concatenate([_normalize_curve(np.asarray(pops_half, float)),
                        _normalize_curve(np.asarray(pops_three_half, float))])
    if np.ptp(y) < 1e-6:
        return FitResult(
            params=np.array([0.0, spin_base.b_z]),
            sigmas=None,
            objective=float("nan"),
            reduced_chisq=float("nan"),
            converged=False,
            n_evaluations=0,
            message="degenerate flat curves; Rabi drive unresolvable",
        )

    def model(_, p):
        sp = replace(spin_base, omega=max(p[0], 0.0), b_z=p[1])
        if np.array_equal(d_a, d_b):
            curve_a, curve_b = flip_curves(sp, d_a)
        else:
            curve_a, _ = flip_curves(sp, d_a)
            _, curve_b = flip_curves(sp, d_b)
        return np.concatenate([_normalize_curve(curve_a), _normalize_curve(curve_b)])

    if init is None:
        init = (spin_base.omega, spin_base.b_z)
    x_dummy = np.zeros(y.size)
    return fit_least_squares(
        model, x_dummy, y, sigma, list(init),
        bounds=([0.0, 0.0], [np.inf, np.inf]), max_nfev=400,
    )


def fit_beat(
    hist: CoincidenceHistogram,
    decay_rate: float,
    gamma: float,
    c2_over_c1: float,
    c3_over_c1: float,
    gate: GateWindow,
    init: Optional[Sequence[float]] = None,
    splitting_grid: Optional[np.ndarray] = None,
) -> FitResult:
    """Four-parameter beat fit: (c1, t0, splitting, sigma_det).

    gamma and the coefficient ratios are held fixed. The splitting is
    multi-started on a grid (default 0.5-1.5 GHz, step 0.05) because a
    bad initialization aliases onto neighbouring fringes; the best
    objective wins. The model reproduces the measurement pipeline's
    binning and smoothing.
    """
    centers = hist.bin_centers
    y = hist.counts
    sigma = np.sqrt(np.clip(y, 1.0, None))

    def model(_, p):
        c1, t0, dnu, sdet = p
        cp = CoherenceParams(decay_rate=decay_rate, gamma=gamma, splitting=max(dnu, 1e-6))
        bc = BeatCoefficients(
            c1=max(c1, 1e-12),
            c2=max(c1, 1e-12) * c2_over_c1,
            c3=max(c1, 1e-12) * c3_over_c1,
            t0=t0,
            sigma_det=max(sdet, 0.0),
        )
        return beat_pattern(centers, cp, bc, gate, hist.bin_width, smoothing=hist.smoothing)

    if init is None:
        # the pattern total is c1*(1 + c2/c1 + c3/c1) times the two-sided
        # gate acceptance of the shared kernel, up to the fringe average
        gate_factor = math.exp(-2.0 * decay_rate * gate.t_start) * (
            -math.expm1(-decay_rate * gate.width)
        ) ** 2
        weight = (1.0 + c2_over_c1 + c3_over_c1) * gate_factor
        c1_init = float(y.sum()) / max(weight, 1e-12) if y.size else 1.0
        init = [max(c1_init, 1.0), 0.0, 1.0, 0.15]
    if splitting_grid is None:
        splitting_grid = np.arange(0.5, 1.5001, 0.05)

    x_dummy = np.zeros(y.size)
    bounds = ([1e-9, -2.0, 0.1, 0.0], [np.inf, 2.0, 3.0, 2.0])
    best: Optional[FitResult] = None
    for dnu0 in splitting_grid:
        start = [init[0], init[1], float(dnu0), init[3]]
        result = fit_least_squares(model, x_dummy, y, sigma, start, bounds=bounds, max_nfev=400)
        better = best is None or (
            result.converged and (not best.converged or result.objective < best.objective)
        )
        if better:
            best = result
    return best


@dataclass
class LorentzianLine:
    """One fitted spectral line with raw and instrument-corrected widths."""

    center: Measurement
    fwhm: Measurement
    amplitude: Measurement
    deconvolved_fwhm: Optional[Measurement]


@dataclass
class LineFitResult:
    """Sum-of-Lorentzians fit: per-line values plus the optimizer record."""

    lines: list
    background: float
    fit: FitResult
    warning: Optional[str] = None


def _lorentz_sum(freq, params):
    n = (len(params) - 1) // 3
    out = np.full_like(np.asarray(freq, dtype=float), params[0])
    for i in range(n):
        a, c, w = params[1 + 3 * i : 4 + 3 * i]
        hw = max(w, 1e-12) / 2.0
        out = out + a * hw**2 / ((freq - c) ** 2 + hw**2)
    return out


def _initial_lines(freq, counts, n_lines):
    """Greedy peak picking with an exclusion radius."""
    span = freq[-1] - freq[0]
    radius = span / (2.0 * (n_lines + 1))
    work = counts.astype(float).copy()
    base = float(np.min(counts))
    centers = []
    for _ in range(n_lines):
        i = int(np.argmax(work))
        centers.append(freq[i])
        work[np.abs(freq - freq[i]) <= radius] = -np.inf
    width0 = max(span / 20.0, np.median(np.diff(freq)) * 3.0)
    params = [base]
    for c in centers:
        amp = float(np.interp(c, freq, counts) - base)
        params.extend([max(amp, 1e-9), float(c), width0])
    return params


def fit_lorentzian_lines(
    freq,
    counts,
    n_lines: int,
    instrument_fwhm: float = 0.0,
    sigma_instrument: float = 0.0,
    sigma=None,
    init: Optional[Sequence[float]] = None,
) -> LineFitResult:
    """Sum-of-Lorentzians plus constant background, with deconvolved widths.

    Lines whose fitted width falls below the instrument width get no
    deconvolved value (unphysical); overlapping lines are flagged and the
    quoted uncertainties carry the covariance inflation that follows.
    """
    freq = np.asarray(freq, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if n_lines < 1:
        raise ValueError("n_lines must be at least 1")
    if np.any(np.diff(freq) <= 0):
        raise ValueError("frequency grid must be strictly increasing")
    if sigma is None:
        sigma = np.sqrt(np.clip(counts, 1.0, None))
    if init is None:
        init = _initial_lines(freq, counts, n_lines)

    n_params = 1 + 3 * n_lines
    lo = [-np.inf] + [0.0, -np.inf, 1e-9] * n_lines
    hi = [np.inf] * n_params
    fit = fit_least_squares(_lorentz_sum, freq, counts, sigma, init, bounds=(lo, hi))

    lines = []
    warning = None
    p = fit.params
    s = fit.sigmas if fit.sigmas is not None else np.zeros_like(p)
    for i in range(n_lines):
        a, c, w = p[1 + 3 * i : 4 + 3 * i]
        sa, sc, sw = s[1 + 3 * i : 4 + 3 * i]
        deconv = None
        if w >= instrument_fwhm:
            deconv = deconvolve_lorentzian(w, instrument_fwhm, sw, sigma_instrument)
        lines.append(
            LorentzianLine(
                center=Measurement(float(c), float(sc)),
                fwhm=Measurement(float(w), float(sw)),
                amplitude=Measurement(float(a), float(sa)),
                deconvolved_fwhm=deconv,
            )
        )
    step = float(np.median(np.diff(freq)))
    peak_amp = max(line.amplitude.value for line in lines)
    for i in range(n_lines):
        for j in range(i + 1, n_lines):
            ci, wi = lines[i].center.value, lines[i].fwhm.value
            cj, wj = lines[j].center.value, lines[j].fwhm.value
            if abs(ci - cj) < 0.5 * (wi + wj):
                warning = "overlapping lines; parameter covariance inflated"
    for line in lines:
        degenerate = line.fwhm.value < step or (
            peak_amp > 0 and line.amplitude.value < 1e-6 * peak_amp
        )
        if n_lines > 1 and degenerate:
            warning = "unresolvable line collapsed; parameter covariance inflated"
    return LineFitResult(lines=lines, background=float(p[0]), fit=fit, warning=warning)
