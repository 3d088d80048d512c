"""Evaluation harness: per-channel PSNR, relit comparison under a fixed
light battery, and a wrap-seam tileability metric.

The relit battery is pinned in a versioned JSON asset
(assets/relit_lights_v1.json) so reported numbers stay stable across
releases. LPIPS needs a pretrained network and is reported as
"unavailable".
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Tuple

import numpy as np

from .brdf import render
from .core import (TOP_DOWN_VIEW, DirectionalLight, MaterialSet,
                   TextureImage, ViewConfig, encode_normal)

__all__ = [
    "ChannelScore",
    "LightBattery",
    "EvalReport",
    "psnr",
    "seam_energy",
    "evaluate_material",
    "report_to_dict",
]

_BATTERY_ASSET = "relit_lights_v1.json"
_BATTERY_SCHEMA = "chordkit.light_battery/1"
_REPORT_SCHEMA = "chordkit.eval_report/1"


@dataclass(frozen=True)
class ChannelScore:
    psnr_db: float
    mse: float


@dataclass(frozen=True)
class LightBattery:
    """Nine relighting lights: four corner directionals at 45 degrees
    elevation plus five point-like stand-ins (overhead + 4 mid-edge),
    all modeled as directional lights."""

    directional: Tuple[DirectionalLight, ...]
    point_like: Tuple[DirectionalLight, ...]

    def __post_init__(self):
        if len(self.directional) != 4:
            raise ValueError("battery needs exactly 4 directional lights")
        if len(self.point_like) != 5:
            raise ValueError("battery needs exactly 5 point-like lights")
        for light in self.lights:
            if not light.direction[2] > 0.0:
                raise ValueError("battery lights must come from the upper hemisphere")

    @property
    def lights(self) -> Tuple[DirectionalLight, ...]:
        return self.directional + self.point_like

    @classmethod
    def default(cls) -> "LightBattery":
        text = resources.files("chordkit.assets").joinpath(_BATTERY_ASSET).read_text()
        doc = json.loads(text)
        if doc.get("schema") != _BATTERY_SCHEMA:
            raise ValueError(f"unexpected light battery schema: {doc.get('schema')!r}")

        def parse(entry) -> DirectionalLight:
            return DirectionalLight.from_angles(
                np.deg2rad(entry["azimuth_deg"]),
                np.deg2rad(entry["elevation_deg"]),
                np.asarray(entry["radiance"], dtype=np.float64),
            )

        return cls(directional=tuple(parse(e) for e in doc["directional"]),
                   point_like=tuple(parse(e) for e in doc["point_like"]))


@dataclass(frozen=True)
class EvalReport:
    per_channel: dict
    relit: ChannelScore
    seam_energy: float
    lpips: str = "unavailable"


def _psnr_from_mse(mse: float) -> float:
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def psnr(a: TextureImage, b: TextureImage) -> float:
    """PSNR in dB with peak 1; identical images report +inf."""
    if a.resolution != b.resolution or a.channels != b.channels:
        raise ValueError("psnr inputs must share resolution and channel count")
    for img in (a, b):
        if img.data.min() < 0.0 or img.data.max() > 1.0:
            raise ValueError("psnr expects values in [0, 1]")
    mse = float(((a.data - b.data) ** 2).mean())
    return _psnr_from_mse(mse)


def seam_energy(img: TextureImage) -> float:
    """Wrap-seam mean squared difference over the interior
    neighbor-difference mean; ~1 for circularly periodic content, large
    when the borders do not continue. Constant images return 0."""
    d = img.data
    seam = np.concatenate([
        (d[:, 0] - d[:, -1]).ravel(),
        (d[0, :] - d[-1, :]).ravel(),
    ])
    interior = np.concatenate([
        (d[:, 1:] - d[:, :-1]).ravel(),
        (d[1:, :] - d[:-1, :]).ravel(),
    ])
    seam_ms = float((seam * seam).mean()) if seam.size else 0.0
    interior_ms = float((interior * interior).mean()) if interior.size else 0.0
    if interior_ms == 0.0:
        return 0.0
    return seam_ms / interior_ms


def _fit_height(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Least-squares affine alignment a*pred + c -> gt; height units are
    conventions, so only shape is scored."""
    if np.array_equal(pred, gt):
        return pred  # identity fit; keeps the +inf sentinel exact
    p = pred.ravel()
    g = gt.ravel()
    var = float(p.var())
    if var == 0.0:
        return np.full_like(gt, g.mean())
    gain = float(np.cov(p, g, bias=True)[0, 1]) / var
    offset = float(g.mean() - gain * p.mean())
    return gain * pred + offset


def evaluate_material(pred: MaterialSet, gt: MaterialSet,
                      battery: LightBattery,
                      view: ViewConfig = TOP_DOWN_VIEW,
                      n_threads: int = 1) -> EvalReport:
    """Score pred against gt: per-channel PSNR (normals in the (n+1)/2
    encoding, height after affine alignment), relit PSNR averaged over
    the battery renders (clamped to [0,1]), and the seam energy of the
    predicted height map."""
    if pred.resolution != gt.resolution:
        raise ValueError("material resolutions differ")

    def score(a: np.ndarray, b: np.ndarray) -> ChannelScore:
        mse = float(((a - b) ** 2).mean())
        return ChannelScore(psnr_db=_psnr_from_mse(mse), mse=mse)

    per_channel = {
        "basecolor": score(pred.basecolor.data, gt.basecolor.data),
        "normal": score(encode_normal(pred.normal.data),
                        encode_normal(gt.normal.data)),
        "roughness": score(pred.roughness.data, gt.roughness.data),
        "metalness": score(pred.metalness.data, gt.metalness.data),
        "height": score(_fit_height(pred.height.data, gt.height.data),
                        gt.height.data),
    }

    psnrs = []
    mses = []
    for light in battery.lights:
        rp = np.clip(render(pred, light, view=view, n_threads=n_threads).data, 0.0, 1.0)
        rg = np.clip(render(gt, light, view=view, n_threads=n_threads).data, 0.0, 1.0)
        mse = float(((rp - rg) ** 2).mean())
        mses.append(mse)
        psnrs.append(_psnr_from_mse(mse))
    relit = ChannelScore(psnr_db=float(np.mean(psnrs)), mse=float(np.mean(mses)))

    return EvalReport(per_channel=per_channel, relit=relit,
                      seam_energy=seam_energy(pred.height))


def _json_float(x: float):
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(x)


def report_to_dict(report: EvalReport) -> dict:
    """Stable JSON form of an EvalReport; infinities become strings so
    the document stays strict JSON."""
    return {
        "schema": _REPORT_SCHEMA,
        "per_channel": {
            name: {"psnr_db": _json_float(s.psnr_db), "mse": _json_float(s.mse)}
            for name, s in report.per_channel.items()
        },
        "relit": {"psnr_db": _json_float(report.relit.psnr_db),
                  "mse": _json_float(report.relit.mse)},
        "seam_energy": _json_float(report.seam_energy),
        "lpips": report.lpips,
    }
