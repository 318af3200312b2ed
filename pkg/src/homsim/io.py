"""Configuration loading, file formats and result serialization.

The only module that touches the filesystem. Formats: JSON run
configuration (schema-validated, unknown keys rejected), time-tag CSV
(``channel,time_ps``), histogram CSV (``tau_ns,count``), JSON results
with 17-significant-digit floats, and a provenance sidecar next to every
CLI output.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np
import pandas as pd

from .core import CoincidenceHistogram, TimeTagStream
from .corrections import NoiseModel
from .montecarlo import ExperimentConfig, RFPulse
from .params import EmitterParams, GateWindow, InterferometerParams
from .spin import SpinParams
from .units import TWO_PI, mhz_to_rate

ARTIFACT_VERSION = "0.1.0"


class ConfigError(ValueError):
    """Configuration file rejected; message names the key and constraint."""


_NUMBER = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_PROB = {"type": "number", "minimum": 0, "maximum": 1}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "emitter": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lifetime_ns": _POS,
                "pure_dephasing_mhz": _NONNEG,
                "diffusion_amplitude_mhz": _NONNEG,
                "diffusion_time_ns": {"oneOf": [_POS, {"type": "null"}]},
                "splitting_ghz": _NONNEG,
                "saturation_energy_pj": _POS,
                "metastable_lifetime_ns": _POS,
                "isc_probability": _PROB,
            },
        },
        "interferometer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "path_delay_ns": _POS,
                "t1": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "t2": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "t_over_r1": _POS,
                "t_over_r2": _POS,
                "fringe_deficit": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "eta1": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "eta2": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "detector_jitter_ns": _NONNEG,
                "arrival_jitter_ns": _NONNEG,
            },
        },
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "signal_prob": _PROB,
                "noise_prob": _PROB,
                "signal_to_noise": _POS,
            },
        },
        "spin": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "zfs_mhz": _NONNEG,
                "gyromagnetic_mhz_per_mt": _NONNEG,
                "field_mt": _NUMBER,
                "rabi_mhz": _NONNEG,
                "rf_freq_mhz": _NONNEG,
                "time_step_ns": _POS,
                "phase_samples": {"type": "integer", "minimum": 1},
            },
        },
        "rf_pulse": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "duration_ns": _NONNEG,
                        "delay_ns": _NONNEG,
                        "flip_prob": {"oneOf": [_PROB, {"type": "null"}]},
                    },
                },
            ]
        },
        "sequence": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["hom", "hbt"]},
                "cycles": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "repetition_periods": {"type": "integer", "minimum": 1},
                "pulse_energy_pj": _NONNEG,
            },
        },
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "gate_start_ns": _NONNEG,
                "gate_stop_ns": _POS,
                "bin_width_ns": _POS,
                "smoothing": {"type": "integer", "minimum": 1},
                "integration_halfwidth_ns": _POS,
                "tau_range_ns": _POS,
                "signal_to_noise": {"oneOf": [_POS, {"type": "null"}]},
                "beta_jitter": {
                    "oneOf": [
                        {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                        {"type": "null"},
                    ]
                },
            },
        },
    },
}


@dataclass(frozen=True)
class AnalysisSettings:
    """Histogramming and correction directives attached to a run."""

    gate: GateWindow
    bin_width: float = 0.1
    smoothing: int = 1
    halfwidth: float = 20.0
    tau_range: float = 120.0
    signal_to_noise: Optional[float] = None
    beta_jitter: Optional[float] = None


@dataclass(frozen=True)
class RunConfig:
    """A full experiment description plus its analysis directives."""

    experiment: ExperimentConfig
    analysis: AnalysisSettings
    raw: dict


def _build_emitter(section: dict) -> EmitterParams:
    diffusion_time = section.get("diffusion_time_ns", None)
    return EmitterParams(
        lifetime=section.get("lifetime_ns", 6.0),
        pure_dephasing=mhz_to_rate(section.get("pure_dephasing_mhz", 0.0)),
        diffusion_amplitude=mhz_to_rate(section.get("diffusion_amplitude_mhz", 0.0)),
        diffusion_time=math.inf if diffusion_time is None else diffusion_time,
        splitting=section.get("splitting_ghz", 0.966),
        saturation_energy=section.get("saturation_energy_pj", 4.0),
        metastable_lifetime=section.get("metastable_lifetime_ns", 100.0),
        isc_probability=section.get("isc_probability", 0.0),
    )


def _build_interferometer(section: dict) -> InterferometerParams:
    kwargs = dict(
        path_delay=section.get("path_delay_ns", 48.7),
        fringe_deficit=section.get("fringe_deficit", 0.0),
        eta1=section.get("eta1", 1.0),
        eta2=section.get("eta2", 1.0),
        sigma_det=section.get("detector_jitter_ns", 0.0),
        sigma_arrival=section.get("arrival_jitter_ns", 0.0),
    )
    for i in ("1", "2"):
        if f"t{i}" in section and f"t_over_r{i}" in section:
            raise ConfigError(
                f"config key interferometer/t{i}: give either t{i} or t_over_r{i}, not both"
            )
    t_values = {}
    for i in ("1", "2"):
        if f"t{i}" in section:
            t_values[i] = section[f"t{i}"]
        elif f"t_over_r{i}" in section:
            ratio = section[f"t_over_r{i}"]
            t_values[i] = ratio / (1.0 + ratio)
        else:
            t_values[i] = 0.5
    return InterferometerParams(
        t1=t_values["1"], r1=1.0 - t_values["1"], t2=t_values["2"], r2=1.0 - t_values["2"], **kwargs
    )


def _build_noise(section: dict) -> NoiseModel:
    p = section.get("signal_prob", 0.747)
    if "noise_prob" in section and "signal_to_noise" in section:
        raise ConfigError(
            "config key noise/noise_prob: give either noise_prob or signal_to_noise, not both"
        )
    if "noise_prob" in section:
        return NoiseModel(p=p, q=section["noise_prob"])
    if "signal_to_noise" in section:
        return NoiseModel.from_sn(section["signal_to_noise"], p)
    return NoiseModel(p=p, q=0.0)


def _build_spin(section: dict) -> SpinParams:
    return SpinParams(
        zfs=TWO_PI * section.get("zfs_mhz", 2.25) * 1e-3,
        gyro=TWO_PI * section.get("gyromagnetic_mhz_per_mt", 28.0) * 1e-3,
        b_z=section.get("field_mt", 0.919),
        omega=TWO_PI * section.get("rabi_mhz", 14.4) * 1e-3,
        rf_freq=section.get("rf_freq_mhz", 30.26911) * 1e-3,
        time_step=section.get("time_step_ns", 0.05),
        n_phase=section.get("phase_samples", 32),
    )


def parse_config(data: dict) -> RunConfig:
    """Validate a configuration dict and build the typed run description."""
    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as err:
        path = "/".join(str(p) for p in err.absolute_path) or "(top level)"
        raise ConfigError(f"config key {path}: {err.message}") from err

    sequence = data.get("sequence", {})
    rf_section = data.get("rf_pulse", None)
    rf = None
    if rf_section is not None:
        rf = RFPulse(
            duration=rf_section.get("duration_ns", 19.0),
            delay=rf_section.get("delay_ns", 18.0),
            flip_prob=rf_section.get("flip_prob", None),
        )
    try:
        experiment = ExperimentConfig(
            emitter=_build_emitter(data.get("emitter", {})),
            interferometer=_build_interferometer(data.get("interferometer", {})),
            noise=_build_noise(data.get("noise", {})),
            spin=_build_spin(data.get("spin", {})),
            rf=rf,
            pulse_energy=sequence.get("pulse_energy_pj", 5.5),
            n_cycles=sequence.get("cycles", 100_000),
            seed=sequence.get("seed", 0),
            mode=sequence.get("mode", "hom"),
            repetition_periods=sequence.get("repetition_periods", 10),
        )
    except ValueError as err:
        raise ConfigError(f"config invariant violated: {err}") from err

    a = data.get("analysis", {})
    gate = GateWindow(a.get("gate_start_ns", 0.0), a.get("gate_stop_ns", 48.0))
    analysis = AnalysisSettings(
        gate=gate,
        bin_width=a.get("bin_width_ns", 0.1),
        smoothing=a.get("smoothing", 1),
        halfwidth=a.get("integration_halfwidth_ns", 20.0),
        tau_range=a.get("tau_range_ns", 120.0),
        signal_to_noise=a.get("signal_to_noise", None),
        beta_jitter=a.get("beta_jitter", None),
    )
    return RunConfig(experiment=experiment, analysis=analysis, raw=data)


def load_config(path) -> RunConfig:
    """Read and validate a JSON run configuration."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from err
    return parse_config(data)


def write_timetags(tags: TimeTagStream, path) -> None:
    """Write a stream as CSV with header ``channel,time_ps``."""
    frame = pd.DataFrame({"channel": tags.channels, "time_ps": tags.times_ps})
    frame.to_csv(path, index=False)


def read_timetags(path) -> TimeTagStream:
    """Read a time-tag CSV; rejects bad channels, times or ordering by line."""
    frame = pd.read_csv(path, dtype={"channel": np.int64, "time_ps": np.float64})
    if list(frame.columns) != ["channel", "time_ps"]:
        raise ValueError(f"expected header 'channel,time_ps', got {list(frame.columns)}")
    channels = frame["channel"].to_numpy()
    times = frame["time_ps"].to_numpy()
    bad = np.nonzero((channels < 0) | (channels > 2))[0]
    if bad.size:
        raise ValueError(f"line {bad[0] + 2}: channel {channels[bad[0]]} outside {{0,1,2}}")
    fractional = np.nonzero(times != np.floor(times))[0]
    if fractional.size:
        raise ValueError(f"line {fractional[0] + 2}: non-integer timestamp {times[fractional[0]]}")
    if times.size:
        drops = np.nonzero(np.diff(times) < 0)[0]
        if drops.size:
            raise ValueError(f"line {drops[0] + 3}: timestamps decrease")
    return TimeTagStream(channels.astype(np.uint8), times.astype(np.int64))


def write_histogram(hist: CoincidenceHistogram, path) -> None:
    """Write a histogram as CSV with header ``tau_ns,count``."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("tau_ns,count\n")
        for tau, count in zip(hist.bin_centers, hist.counts):
            fh.write(f"{tau:.17g},{count:.17g}\n")


def read_histogram(path, smoothing: int = 1) -> CoincidenceHistogram:
    """Read a histogram CSV written by :func:`write_histogram`."""
    frame = pd.read_csv(path)
    if list(frame.columns) != ["tau_ns", "count"]:
        raise ValueError(f"expected header 'tau_ns,count', got {list(frame.columns)}")
    centers = frame["tau_ns"].to_numpy(dtype=float)
    counts = frame["count"].to_numpy(dtype=float)
    if centers.size < 2:
        raise ValueError("histogram needs at least two bins")
    widths = np.diff(centers)
    width = float(widths[0])
    if not np.allclose(widths, width, rtol=1e-9, atol=1e-12):
        raise ValueError("bin centers are not uniformly spaced")
    return CoincidenceHistogram(
        bin_width=width,
        tau_min=float(centers[0]) - width / 2.0,
        tau_max=float(centers[-1]) + width / 2.0,
        counts=counts,
        smoothing=smoothing,
    )


def _serialize(value, out: list) -> None:
    if isinstance(value, dict):
        out.append("{")
        for i, (k, v) in enumerate(value.items()):
            if i:
                out.append(", ")
            out.append(json.dumps(str(k)))
            out.append(": ")
            _serialize(v, out)
        out.append("}")
    elif isinstance(value, (list, tuple, np.ndarray)):
        out.append("[")
        seq = value.tolist() if isinstance(value, np.ndarray) else value
        for i, v in enumerate(seq):
            if i:
                out.append(", ")
            _serialize(v, out)
        out.append("]")
    elif isinstance(value, bool) or value is None:
        out.append(json.dumps(value))
    elif isinstance(value, (int, np.integer)):
        out.append(str(int(value)))
    elif isinstance(value, (float, np.floating)):
        v = float(value)
        out.append('"%s"' % v if math.isnan(v) or math.isinf(v) else format(v, ".17g"))
    else:
        out.append(json.dumps(str(value)))


def dumps_json(obj) -> str:
    """Serialize with every float at 17 significant digits (lossless)."""
    out: list = []
    _serialize(obj, out)
    return "".join(out)


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_json(obj))
        fh.write("\n")


def config_hash(data: dict) -> str:
    """SHA-256 of the canonical (sorted-key) JSON encoding."""
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_sidecar(out_path, subcommand: str, config_data: dict, seed, outputs) -> None:
    """Provenance record written next to every CLI artifact."""
    sidecar = {
        "artifact_version": ARTIFACT_VERSION,
        "subcommand": subcommand,
        "config_sha256": config_hash(config_data),
        "seed": seed,
        "outputs": [str(Path(p).name) for p in outputs],
    }
    write_json(sidecar, str(out_path) + ".meta.json")
