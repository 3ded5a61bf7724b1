"""Run configuration: JSON ingestion, validation, and provenance echo.

A run config is a single JSON file with optional sections ``probe``,
``field``, ``sequence``, ``campaign``, ``analysis``, ``constants`` and a
top-level ``seed``.  Every omitted value falls back to the published
operating point of the experiment, so ``simulate`` with an empty object
``{}`` already reproduces that regime.  Unknown keys are rejected with
per-field diagnostics.  The provenance file written next to a dataset
contains the fully resolved config and can itself be passed back as
``--config``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .analysis import AnalysisOptions
from .errors import ConfigError
from .probe import ProbeConfig
from .sequence import CampaignConfig, SequenceConfig
from .spins import GYROMAGNETIC_RATIO, MagneticField, PhysicalConstants

# 16.9 mG along [1, 1, 1].
DEFAULT_FIELD_G = 16.9e-3
DEFAULT_FIELD_VECTOR = tuple(DEFAULT_FIELD_G / math.sqrt(3.0) for _ in range(3))

_PROBE_KEYS = {
    "g1",
    "g2",
    "n_photons",
    "pulse_duration",
    "efficiency",
    "readout_noise_override",
    "light_backaction",
}
_FIELD_KEYS = {"b", "gyromagnetic_ratio"}
_SEQUENCE_KEYS = {
    "n_pulses",
    "pulses_per_period",
    "prep_noise_cov",
    "prep_mean_offset",
    "detector_noise_cov",
    "period_diffusion",
    "intra_pulse_rotation",
}
_CAMPAIGN_KEYS = {
    "n_cycles",
    "sequences_per_cycle",
    "loss_fraction",
    "initial_atoms",
    "reference_shots_per_cycle",
    "atom_jitter",
}
_ANALYSIS_KEYS = {
    "n_bins",
    "min_bin_shots",
    "cutoff",
    "mean_mode",
    "n_resamples",
    "seed",
    "use_analytic_v0",
    "f",
}
_CONSTANTS_KEYS = {"wavelength", "interaction_area"}
_TOP_KEYS = {"seed", "probe", "field", "sequence", "campaign", "analysis", "constants"}


@dataclass(frozen=True)
class RunConfig:
    seed: int
    probe: ProbeConfig
    field: MagneticField
    sequence: SequenceConfig
    campaign: CampaignConfig
    analysis: AnalysisOptions
    constants: PhysicalConstants

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(
            self, seed=seed, campaign=replace(self.campaign, master_seed=seed)
        )


def _check_section(data, keys: set, path: str, errors: list) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        errors.append(f"{path}: expected an object")
        return {}
    unknown = set(data) - keys
    for key in sorted(unknown):
        errors.append(f"{path}.{key}: unknown key")
    return {k: v for k, v in data.items() if k in keys}


def _build(factory, kwargs: dict, path: str, errors: list):
    try:
        return factory(**kwargs)
    except (TypeError, ValueError) as exc:
        errors.append(f"{path}: {exc}")
        return None


def config_from_dict(data: dict) -> RunConfig:
    """Validate a parsed config object and build all module configs."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    # Accept a provenance file transparently.
    if "config" in data and isinstance(data.get("config"), dict):
        data = data["config"]

    errors: list[str] = []
    unknown = set(data) - _TOP_KEYS
    for key in sorted(unknown):
        errors.append(f"{key}: unknown key")

    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        errors.append("seed: must be a non-negative integer")
        seed = 0

    probe_kwargs = _check_section(data.get("probe"), _PROBE_KEYS, "probe", errors)
    probe = _build(ProbeConfig, probe_kwargs, "probe", errors)

    field_kwargs = _check_section(data.get("field"), _FIELD_KEYS, "field", errors)
    field_kwargs.setdefault("b", DEFAULT_FIELD_VECTOR)
    field_kwargs.setdefault("gyromagnetic_ratio", GYROMAGNETIC_RATIO)
    field_kwargs["b"] = np.asarray(field_kwargs["b"], dtype=float)
    field = _build(MagneticField, field_kwargs, "field", errors)

    seq_kwargs = _check_section(data.get("sequence"), _SEQUENCE_KEYS, "sequence", errors)
    for key in ("prep_noise_cov", "detector_noise_cov", "prep_mean_offset"):
        if key in seq_kwargs:
            seq_kwargs[key] = np.asarray(seq_kwargs[key], dtype=float)
    sequence = None
    if probe is not None and field is not None:
        sequence = _build(
            SequenceConfig,
            {"field": field, "probe": probe, **seq_kwargs},
            "sequence",
            errors,
        )

    camp_kwargs = _check_section(data.get("campaign"), _CAMPAIGN_KEYS, "campaign", errors)
    campaign = _build(
        CampaignConfig, {**camp_kwargs, "master_seed": seed}, "campaign", errors
    )

    analysis_kwargs = _check_section(data.get("analysis"), _ANALYSIS_KEYS, "analysis", errors)
    analysis = _build(AnalysisOptions, analysis_kwargs, "analysis", errors)

    const_kwargs = _check_section(data.get("constants"), _CONSTANTS_KEYS, "constants", errors)
    constants = _build(PhysicalConstants, const_kwargs, "constants", errors)

    if errors:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))
    return RunConfig(seed, probe, field, sequence, campaign, analysis, constants)


def load_config(path) -> RunConfig:
    """Read and validate a JSON config (or provenance) file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return config_from_dict(data)


def config_to_dict(cfg: RunConfig) -> dict:
    """Fully resolved config, round-trippable through ``config_from_dict``."""
    return {
        "seed": cfg.seed,
        "probe": {
            "g1": cfg.probe.g1,
            "g2": cfg.probe.g2,
            "n_photons": cfg.probe.n_photons,
            "pulse_duration": cfg.probe.pulse_duration,
            "efficiency": cfg.probe.efficiency,
            "readout_noise_override": cfg.probe.readout_noise_override,
            "light_backaction": cfg.probe.light_backaction,
        },
        "field": {
            "b": [float(v) for v in cfg.field.b],
            "gyromagnetic_ratio": cfg.field.gyromagnetic_ratio,
        },
        "sequence": {
            "n_pulses": cfg.sequence.n_pulses,
            "pulses_per_period": cfg.sequence.pulses_per_period,
            "prep_noise_cov": [[float(v) for v in row] for row in cfg.sequence.prep_noise_cov],
            "prep_mean_offset": [float(v) for v in cfg.sequence.prep_mean_offset],
            "detector_noise_cov": [
                [float(v) for v in row] for row in cfg.sequence.detector_noise_cov
            ],
            "period_diffusion": cfg.sequence.period_diffusion,
            "intra_pulse_rotation": cfg.sequence.intra_pulse_rotation,
        },
        "campaign": {
            "n_cycles": cfg.campaign.n_cycles,
            "sequences_per_cycle": cfg.campaign.sequences_per_cycle,
            "loss_fraction": cfg.campaign.loss_fraction,
            "initial_atoms": cfg.campaign.initial_atoms,
            "reference_shots_per_cycle": cfg.campaign.reference_shots_per_cycle,
            "atom_jitter": cfg.campaign.atom_jitter,
        },
        "analysis": {
            "n_bins": cfg.analysis.n_bins,
            "min_bin_shots": cfg.analysis.min_bin_shots,
            "cutoff": cfg.analysis.cutoff,
            "mean_mode": cfg.analysis.mean_mode,
            "n_resamples": cfg.analysis.n_resamples,
            "seed": cfg.analysis.seed,
            "use_analytic_v0": cfg.analysis.use_analytic_v0,
            "f": cfg.analysis.f,
        },
        "constants": {
            "wavelength": cfg.constants.wavelength,
            "interaction_area": cfg.constants.interaction_area,
        },
    }
