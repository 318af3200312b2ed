"""Command-line front end.

Subcommands: simulate, hist, visibility, rabi, fit, dephasing, report.
Exit codes: 0 success, 1 validation error, 2 numerical failure. The
environment variable HOMSIM_THREADS caps simulation parallelism.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np
import pandas as pd

from . import io as hio
from .core import (
    build_coincidence_histogram,
    extract_peak_areas,
    raw_visibility,
)
from .corrections import CorrectionInputs, correct_visibility, jitter_factor
from .dephasing import extract_dephasing_limited, extract_diffusion_limited
from .fitting import (
    fit_beat,
    fit_gamma_from_visibility,
    fit_lorentzian_lines,
    fit_rabi,
    fit_saturation,
    fit_vibronic_prefactor,
)
from .montecarlo import UndersampledError, mc_vs_analytic_report, simulate_timetags
from .params import GateWindow
from .report import render_report_figure, report_summary, write_report_bins
from .spin import flipped_population
from .units import mhz_to_rate, rate_to_mhz

FIT_MODELS = ("saturation", "gamma", "vibronic", "rabi", "beat", "lorentzian")


class NumericalError(RuntimeError):
    """A computation failed to converge or was unusable."""


def _add_common(parser, *, config_required=False):
    parser.add_argument("--config", required=config_required, help="JSON run configuration")
    parser.add_argument("--out", required=True, help="output file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="homsim",
        description="Two-photon interference simulator and estimation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the experiment, write time tags as CSV")
    _add_common(p, config_required=True)
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--cycles", type=int, help="override the configured cycle count")

    p = sub.add_parser("hist", help="gate a time-tag CSV and histogram coincidences")
    _add_common(p)
    p.add_argument("--tags", required=True, help="time-tag CSV (channel,time_ps)")
    p.add_argument("--t-start", type=float, help="gate open, ns")
    p.add_argument("--t-stop", type=float, help="gate close, ns")
    p.add_argument("--bin-width", type=float, help="bin width, ns")
    p.add_argument("--smoothing", type=int, help="odd moving-average order")
    p.add_argument("--tau-range", type=float, help="histogram half range, ns")

    p = sub.add_parser("visibility", help="raw and corrected visibility from a histogram")
    _add_common(p)
    p.add_argument("--hist", required=True, help="histogram CSV (tau_ns,count)")
    p.add_argument("--delta-t", type=float, help="peak spacing, ns (default: config path delay)")
    p.add_argument("--halfwidth", type=float, help="integration half-width, ns")
    p.add_argument("--sn", type=float, help="signal-to-noise ratio for the correction")

    p = sub.add_parser("rabi", help="phase-averaged spin population curves")
    _add_common(p)
    p.add_argument("--max-duration", type=float, default=60.0)
    p.add_argument("--step", type=float, default=0.5)

    p = sub.add_parser("fit", help="least-squares fits of the forward models")
    _add_common(p)
    p.add_argument("--model", required=True, choices=FIT_MODELS)
    p.add_argument("--data", required=True, help="input CSV (columns depend on the model)")
    p.add_argument("--n-lines", type=int, default=2, help="lorentzian model: line count")
    p.add_argument(
        "--instrument-fwhm", type=float, default=0.0, help="lorentzian model: instrument width"
    )

    p = sub.add_parser("dephasing", help="two-branch linewidth decomposition")
    _add_common(p)
    p.add_argument("--temperature", type=float, required=True)
    p.add_argument("--linewidth-mhz", type=float, required=True)
    p.add_argument("--gamma-mhz", type=float, required=True, help="coherence fit, gamma/2pi MHz")

    p = sub.add_parser("report", help="simulate and compare against the analytic model")
    _add_common(p, config_required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--cycles", type=int)
    p.add_argument("--t-start", type=float)
    p.add_argument("--t-stop", type=float)
    p.add_argument("--bin-width", type=float)
    p.add_argument("--smoothing", type=int)
    return parser


def _load_config(args) -> hio.RunConfig:
    if args.config:
        return hio.load_config(args.config)
    return hio.parse_config({})


def _apply_overrides(run: hio.RunConfig, args) -> hio.RunConfig:
    experiment = run.experiment
    if getattr(args, "seed", None) is not None:
        experiment = replace(experiment, seed=args.seed)
    if getattr(args, "cycles", None) is not None:
        experiment = replace(experiment, n_cycles=args.cycles)
    analysis = run.analysis
    gate = analysis.gate
    t_start = getattr(args, "t_start", None)
    t_stop = getattr(args, "t_stop", None)
    if t_start is not None or t_stop is not None:
        gate = GateWindow(
            t_start if t_start is not None else gate.t_start,
            t_stop if t_stop is not None else gate.t_stop,
        )
    analysis = replace(
        analysis,
        gate=gate,
        bin_width=args.bin_width if getattr(args, "bin_width", None) is not None else analysis.bin_width,
        smoothing=args.smoothing if getattr(args, "smoothing", None) is not None else analysis.smoothing,
    )
    return hio.RunConfig(experiment=experiment, analysis=analysis, raw=run.raw)


def _cmd_simulate(args) -> None:
    run = _apply_overrides(_load_config(args), args)
    tags = simulate_timetags(run.experiment)
    hio.write_timetags(tags, args.out)
    hio.write_sidecar(args.out, "simulate", run.raw, run.experiment.seed, [args.out])


def _cmd_hist(args) -> None:
    run = _apply_overrides(_load_config(args), args)
    analysis = run.analysis
    tau_range = args.tau_range if args.tau_range is not None else analysis.tau_range
    tags = hio.read_timetags(args.tags)
    hist = build_coincidence_histogram(
        tags,
        analysis.gate,
        analysis.bin_width,
        smoothing=analysis.smoothing,
        tau_min=-tau_range,
        tau_max=tau_range,
    )
    hio.write_histogram(hist, args.out)
    hio.write_sidecar(args.out, "hist", run.raw, run.experiment.seed, [args.out])


def _cmd_visibility(args) -> None:
    run = _load_config(args)
    analysis = run.analysis
    ifm = run.experiment.interferometer
    hist = hio.read_histogram(args.hist)
    delta_t = args.delta_t if args.delta_t is not None else ifm.path_delay
    halfwidth = args.halfwidth if args.halfwidth is not None else analysis.halfwidth
    areas = extract_peak_areas(hist, delta_t, halfwidth)
    v0 = raw_visibility(areas)
    sn = args.sn if args.sn is not None else analysis.signal_to_noise
    if sn is None:
        sn = run.experiment.noise.sn
    beta = analysis.beta_jitter
    if beta is None:
        beta = jitter_factor(ifm.sigma_arrival, run.experiment.emitter.lifetime)
    corrected = correct_visibility(
        CorrectionInputs(
            v0=v0.value,
            sn=sn,
            alpha1=ifm.alpha1,
            alpha2=ifm.alpha2,
            epsilon=ifm.fringe_deficit,
            beta_jitter=beta,
            sigma_v0=v0.sigma,
        )
    )
    payload = {
        "areas": {
            "outer_minus": areas.outer_minus,
            "side_minus": areas.side_minus,
            "center": areas.center,
            "side_plus": areas.side_plus,
            "outer_plus": areas.outer_plus,
        },
        "raw_visibility": {"value": v0.value, "sigma": v0.sigma},
        "corrected_visibility": {
            "value": corrected.value,
            "sigma": corrected.sigma,
            "warning": corrected.warning,
        },
        "inputs": {
            "delta_t_ns": delta_t,
            "halfwidth_ns": halfwidth,
            "signal_to_noise": sn,
            "beta_jitter": beta,
            "alpha1": ifm.alpha1,
            "alpha2": ifm.alpha2,
            "fringe_deficit": ifm.fringe_deficit,
        },
    }
    hio.write_json(payload, args.out)
    hio.write_sidecar(args.out, "visibility", run.raw, run.experiment.seed, [args.out])


def _cmd_rabi(args) -> None:
    run = _load_config(args)
    sp = run.experiment.spin
    durations = np.arange(0.0, args.max_duration + args.step / 2.0, args.step)
    flip_half = flipped_population(sp, durations, start_half=True)
    flip_three = flipped_population(sp, durations, start_half=False)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("duration_ns,flip_from_half,flip_from_three_half\n")
        for d, a, b in zip(durations, flip_half, flip_three):
            fh.write(f"{d:.17g},{a:.17g},{b:.17g}\n")
    hio.write_sidecar(args.out, "rabi", run.raw, run.experiment.seed, [args.out])


def _fit_result_payload(result) -> dict:
    return {
        "params": result.params,
        "sigmas": result.sigmas,
        "objective": result.objective,
        "reduced_chisq": result.reduced_chisq,
        "converged": result.converged,
        "n_evaluations": result.n_evaluations,
        "message": result.message,
        "warning": result.warning,
    }


def _cmd_fit(args) -> None:
    run = _load_config(args)
    frame = pd.read_csv(args.data)
    experiment = run.experiment
    if args.model == "saturation":
        result = fit_saturation(
            frame["energy_pj"].to_numpy(),
            frame["intensity"].to_numpy(),
            frame["sigma"].to_numpy() if "sigma" in frame else None,
        )
        payload = {"model": "saturation", "param_names": ["i_max", "saturation_energy_pj"]}
    elif args.model == "gamma":
        result = fit_gamma_from_visibility(
            frame["window_ns"].to_numpy(),
            frame["visibility"].to_numpy(),
            frame["sigma"].to_numpy() if "sigma" in frame else 0.01,
            decay_rate=experiment.emitter.decay_rate,
        )
        payload = {
            "model": "gamma",
            "param_names": ["gamma_per_ns"],
            "gamma_over_2pi_mhz": rate_to_mhz(float(result.params[0])),
        }
    elif args.model == "vibronic":
        result = fit_vibronic_prefactor(
            frame["temperature_k"].to_numpy(),
            mhz_to_rate(frame["dephasing_mhz"].to_numpy()),
            sigma=mhz_to_rate(frame["sigma_mhz"].to_numpy()) if "sigma_mhz" in frame else None,
            weighted="sigma_mhz" in frame,
        )
        payload = {
            "model": "vibronic",
            "param_names": ["prefactor_rad_per_ns_mev3"],
            "prefactor_over_2pi_mhz_mev3": rate_to_mhz(float(result.params[0])),
        }
    elif args.model == "rabi":
        result = fit_rabi(
            frame["duration_ns"].to_numpy(),
            frame["flip_from_half"].to_numpy(),
            frame["duration_ns"].to_numpy(),
            frame["flip_from_three_half"].to_numpy(),
            spin_base=experiment.spin,
        )
        payload = {"model": "rabi", "param_names": ["omega_rad_per_ns", "field_mt"]}
    elif args.model == "beat":
        hist = hio.read_histogram(args.data, smoothing=run.analysis.smoothing)
        from .corrections import g_lower_bound, self_consistent_pedestal_ratio
        from .montecarlo import resolve_flip_prob

        sn = run.analysis.signal_to_noise or experiment.noise.sn
        flip = resolve_flip_prob(experiment) if experiment.rf else 0.39
        ifm = experiment.interferometer
        v_norm = 1.0 - flip
        c21 = v_norm / (1.0 - v_norm)
        c31 = self_consistent_pedestal_ratio(
            v_norm, sn, g_lower_bound(sn), ifm.fringe_deficit, ifm.alpha1, ifm.alpha2
        )
        result = fit_beat(
            hist,
            decay_rate=experiment.emitter.decay_rate,
            gamma=experiment.coherence.gamma,
            c2_over_c1=c21,
            c3_over_c1=c31,
            gate=run.analysis.gate,
        )
        payload = {"model": "beat", "param_names": ["c1", "t0_ns", "splitting_ghz", "sigma_det_ns"]}
    elif args.model == "lorentzian":
        line_result = fit_lorentzian_lines(
            frame["frequency_mhz"].to_numpy(),
            frame["counts"].to_numpy(),
            n_lines=args.n_lines,
            instrument_fwhm=args.instrument_fwhm,
        )
        result = line_result.fit
        payload = {
            "model": "lorentzian",
            "background": line_result.background,
            "warning": line_result.warning,
            "lines": [
                {
                    "center_mhz": [line.center.value, line.center.sigma],
                    "fwhm_mhz": [line.fwhm.value, line.fwhm.sigma],
                    "deconvolved_fwhm_mhz": (
                        [line.deconvolved_fwhm.value, line.deconvolved_fwhm.sigma]
                        if line.deconvolved_fwhm is not None
                        else None
                    ),
                }
                for line in line_result.lines
            ],
        }
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(f"unknown model {args.model}")

    if not result.converged:
        raise NumericalError(f"fit did not converge: {result.message}")
    payload["fit"] = _fit_result_payload(result)
    hio.write_json(payload, args.out)
    hio.write_sidecar(args.out, f"fit-{args.model}", run.raw, experiment.seed, [args.out])


def _cmd_dephasing(args) -> None:
    run = _load_config(args)
    decay_rate = run.experiment.emitter.decay_rate
    delta = run.experiment.interferometer.path_delay
    gamma_fit = mhz_to_rate(args.gamma_mhz)
    gp_max, diff = extract_dephasing_limited(gamma_fit, args.linewidth_mhz, decay_rate)
    diff_max, tau_c = extract_diffusion_limited(gamma_fit, args.linewidth_mhz, decay_rate, delta)
    payload = {
        "temperature_k": args.temperature,
        "linewidth_mhz": args.linewidth_mhz,
        "gamma_over_2pi_mhz": args.gamma_mhz,
        "dephasing_limited": {
            "gamma_prime_max_mhz": rate_to_mhz(gp_max),
            "diffusion_amplitude_mhz": rate_to_mhz(diff),
        },
        "diffusion_limited": {
            "diffusion_amplitude_max_mhz": rate_to_mhz(diff_max),
            "tau_c_min_ns": tau_c,
        },
    }
    hio.write_json(payload, args.out)
    hio.write_sidecar(args.out, "dephasing", run.raw, run.experiment.seed, [args.out])


def _cmd_report(args) -> None:
    run = _apply_overrides(_load_config(args), args)
    analysis = run.analysis
    report = mc_vs_analytic_report(
        run.experiment, analysis.gate, analysis.bin_width, halfwidth=analysis.halfwidth
    )
    outputs = [args.out]
    hio.write_json(report_summary(report), args.out)
    if not report.degenerate:
        csv_path = str(args.out) + ".bins.csv"
        png_path = str(args.out) + ".png"
        write_report_bins(report, csv_path)
        render_report_figure(report, png_path)
        outputs += [csv_path, png_path]
    hio.write_sidecar(args.out, "report", run.raw, run.experiment.seed, outputs)


_COMMANDS = {
    "simulate": _cmd_simulate,
    "hist": _cmd_hist,
    "visibility": _cmd_visibility,
    "rabi": _cmd_rabi,
    "fit": _cmd_fit,
    "dephasing": _cmd_dephasing,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except (hio.ConfigError, ValueError, KeyError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (NumericalError, UndersampledError, ArithmeticError, RuntimeError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
