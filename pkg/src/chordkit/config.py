"""Run configuration: strict JSON parsing for the CLI.

Unknown keys are rejected at every level; a typo in a light direction
would silently corrupt every downstream number otherwise.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .chain import RmSearchSpace
from .core import DirectionalLight
from .errors import ConfigError
from .optim import LossWeights, OptimConfig

__all__ = ["RunConfig", "parse_run_config", "load_run_config", "RUN_CONFIG_SCHEMA"]

RUN_CONFIG_SCHEMA = "chordkit.run_config/1"

_DEFAULT_LIGHT = DirectionalLight.from_angles(0.0, np.pi / 2.0, np.pi)


@dataclass(frozen=True)
class RunConfig:
    light: DirectionalLight = _DEFAULT_LIGHT
    rm_space: RmSearchSpace = field(default_factory=RmSearchSpace.default)
    optimizer: OptimConfig = field(default_factory=OptimConfig)
    seed: int = 0
    out_dir: Optional[Path] = None


def _reject_unknown(doc: dict, allowed, where: str):
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} in {where}")


def _parse_light(doc) -> DirectionalLight:
    if not isinstance(doc, dict):
        raise ConfigError("light must be an object")
    _reject_unknown(doc, ("azimuth_deg", "elevation_deg", "radiance"), "light")
    try:
        az = float(doc.get("azimuth_deg", 0.0))
        el = float(doc.get("elevation_deg", 90.0))
        radiance = doc.get("radiance", np.pi)
        if isinstance(radiance, (int, float)):
            radiance = float(radiance)
        else:
            radiance = np.asarray(radiance, dtype=np.float64)
        return DirectionalLight.from_angles(np.deg2rad(az), np.deg2rad(el), radiance)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad light: {e}") from e


def _parse_rm_space(doc) -> RmSearchSpace:
    if not isinstance(doc, dict):
        raise ConfigError("rm_space must be an object")
    _reject_unknown(doc, ("roughness_levels",), "rm_space")
    try:
        if "roughness_levels" in doc:
            return RmSearchSpace(tuple(float(x) for x in doc["roughness_levels"]))
        return RmSearchSpace.default()
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad rm_space: {e}") from e


def _parse_weights(doc) -> LossWeights:
    if not isinstance(doc, dict):
        raise ConfigError("optimizer.weights must be an object")
    allowed = ("pixel", "normal", "render", "perceptual")
    _reject_unknown(doc, allowed, "optimizer.weights")
    try:
        return LossWeights(**{k: float(v) for k, v in doc.items()})
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad optimizer.weights: {e}") from e


def _parse_optimizer(doc, seed: int) -> OptimConfig:
    if not isinstance(doc, dict):
        raise ConfigError("optimizer must be an object")
    allowed = ("step_size", "iterations", "render_light_samples", "rng_seed",
               "weights", "channels")
    _reject_unknown(doc, allowed, "optimizer")
    kwargs = {"rng_seed": seed}
    try:
        if "step_size" in doc:
            kwargs["step_size"] = float(doc["step_size"])
        if "iterations" in doc:
            kwargs["iterations"] = int(doc["iterations"])
        if "render_light_samples" in doc:
            kwargs["render_light_samples"] = int(doc["render_light_samples"])
        if "rng_seed" in doc:
            kwargs["rng_seed"] = int(doc["rng_seed"])
        if "weights" in doc:
            kwargs["weights"] = _parse_weights(doc["weights"])
        if "channels" in doc:
            kwargs["channels"] = tuple(str(c) for c in doc["channels"])
        return OptimConfig(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad optimizer settings: {e}") from e


def parse_run_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    allowed = ("schema", "light", "rm_space", "optimizer", "seed", "out_dir")
    _reject_unknown(doc, allowed, "config root")
    schema = doc.get("schema", RUN_CONFIG_SCHEMA)
    if schema != RUN_CONFIG_SCHEMA:
        raise ConfigError(f"unsupported config schema {schema!r}")
    try:
        seed = int(doc.get("seed", 0))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad seed: {e}") from e
    light = _parse_light(doc["light"]) if "light" in doc else _DEFAULT_LIGHT
    rm_space = _parse_rm_space(doc["rm_space"]) if "rm_space" in doc else RmSearchSpace.default()
    optimizer = _parse_optimizer(doc.get("optimizer", {}), seed)
    out_dir = Path(doc["out_dir"]) if "out_dir" in doc else None
    return RunConfig(light=light, rm_space=rm_space, optimizer=optimizer,
                     seed=seed, out_dir=out_dir)


def load_run_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    return parse_run_config(doc)
