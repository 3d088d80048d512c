"""File formats and the on-disk material directory convention.

A material directory holds the five channels as 16-bit PNGs
(basecolor sRGB-encoded, everything else linear) plus a meta.json
carrying the height affine parameters, mirroring common SVBRDF dataset
layouts. Radiometric images (renders, irradiance) use EXR.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import cv2
import numpy as np

from .core import (ColorSpace, MaterialSet, TextureImage, decode_normal,
                   encode_normal, linear_to_srgb_array, srgb_to_linear_array)
from .errors import ChordError, MissingChannelError
from .exr import read_exr, write_exr

__all__ = [
    "MaterialDirLayout",
    "read_png",
    "write_png",
    "read_image_auto",
    "save_material",
    "load_material",
    "META_SCHEMA",
]

log = logging.getLogger("chordkit.io")

META_SCHEMA = "chordkit.material_meta/1"
_PNG_PEAK = 65535.0


@dataclass(frozen=True)
class MaterialDirLayout:
    """Paths inside a material directory."""

    root: Path

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))

    @property
    def basecolor(self) -> Path:
        return self.root / "basecolor.png"

    @property
    def normal(self) -> Path:
        return self.root / "normal.png"

    @property
    def roughness(self) -> Path:
        return self.root / "roughness.png"

    @property
    def metalness(self) -> Path:
        return self.root / "metalness.png"

    @property
    def height(self) -> Path:
        return self.root / "height.png"

    @property
    def meta(self) -> Path:
        return self.root / "meta.json"


def write_png(path, data: np.ndarray) -> None:
    """Quantize [0,1] data to 16-bit PNG; 3-channel input is RGB."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("PNG data must lie in [0, 1]")
    q = np.round(arr * _PNG_PEAK).astype(np.uint16)
    if q.ndim == 3:
        q = q[:, :, ::-1]  # cv2 stores BGR
    if not cv2.imwrite(str(path), q):
        raise ChordError(f"failed to write PNG: {path}")


def read_png(path) -> np.ndarray:
    """Read a PNG into (H, W, C) float64 in [0, 1] (8- or 16-bit)."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ChordError(f"failed to read PNG: {path}")
    if raw.dtype == np.uint8:
        arr = raw.astype(np.float64) / 255.0
    elif raw.dtype == np.uint16:
        arr = raw.astype(np.float64) / _PNG_PEAK
    else:
        raise ChordError(f"unsupported PNG sample type {raw.dtype} in {path}")
    if arr.ndim == 2:
        return arr[:, :, None]
    if arr.shape[2] == 4:
        arr = arr[:, :, :3]
    return np.ascontiguousarray(arr[:, :, ::-1])  # BGR -> RGB


def read_image_auto(path) -> TextureImage:
    """Load a render-like image as linear: EXR passes through, PNG is
    treated as sRGB-encoded and linearized."""
    p = Path(path)
    if not p.exists():
        raise ChordError(f"input image not found: {p}")
    if p.suffix.lower() == ".exr":
        return TextureImage(read_exr(p), space=ColorSpace.LINEAR)
    return TextureImage(srgb_to_linear_array(read_png(p)), space=ColorSpace.LINEAR)


def save_material(root, material: MaterialSet) -> MaterialDirLayout:
    """Write a material directory: five 16-bit PNGs plus meta.json.

    Height is stored min-max normalized with the affine parameters
    recorded in meta.json so loading recovers the original values up to
    quantization.
    """
    layout = MaterialDirLayout(Path(root))
    layout.root.mkdir(parents=True, exist_ok=True)

    write_png(layout.basecolor, linear_to_srgb_array(material.basecolor.data))
    write_png(layout.normal, encode_normal(material.normal.data))
    write_png(layout.roughness, material.roughness.data)
    write_png(layout.metalness, material.metalness.data)

    h = material.height.data
    h_min = float(h.min())
    h_span = float(h.max()) - h_min
    if h_span == 0.0:
        write_png(layout.height, np.zeros_like(h))
        offset, scale = 0.0, 0.0
    else:
        write_png(layout.height, (h - h_min) / h_span)
        offset, scale = h_min, h_span
    meta = {
        "schema": META_SCHEMA,
        "height": {"offset": offset, "scale": scale},
        "pixel_scale": 1.0,
    }
    layout.meta.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return layout


def _default_flat_normal(h: int, w: int) -> TextureImage:
    n = np.zeros((h, w, 3))
    n[:, :, 2] = 1.0
    return TextureImage(n)


def load_material(root) -> MaterialSet:
    """Load a material directory; optional channels fall back to
    documented defaults (roughness 0.5, metalness 0, flat normal, zero
    height) with a logged warning. A missing basecolor is an error."""
    layout = MaterialDirLayout(Path(root))
    if not layout.root.is_dir():
        raise ChordError(f"material directory not found: {layout.root}")
    if not layout.basecolor.exists():
        raise MissingChannelError(f"missing required channel: {layout.basecolor}")

    basecolor = TextureImage(srgb_to_linear_array(read_png(layout.basecolor)))
    if basecolor.channels != 3:
        raise ChordError("basecolor.png must have 3 channels")
    h, w = basecolor.resolution

    if layout.normal.exists():
        normal = TextureImage(decode_normal(read_png(layout.normal)))
    else:
        log.warning("%s missing; defaulting to flat normals", layout.normal.name)
        normal = _default_flat_normal(h, w)

    def gray(path: Path, default: float, name: str) -> TextureImage:
        if path.exists():
            arr = read_png(path)
            if arr.shape[2] != 1:
                raise ChordError(f"{path.name} must be single-channel")
            return TextureImage(arr)
        log.warning("%s missing; defaulting to %s", path.name, default)
        return TextureImage(np.full((h, w, 1), default))

    roughness = gray(layout.roughness, 0.5, "roughness")
    metalness = gray(layout.metalness, 0.0, "metalness")

    if layout.height.exists():
        raw = read_png(layout.height)
        if raw.shape[2] != 1:
            raise ChordError("height.png must be single-channel")
        offset, scale = 0.0, 1.0
        if layout.meta.exists():
            meta = json.loads(layout.meta.read_text())
            if meta.get("schema") != META_SCHEMA:
                raise ChordError(f"unexpected meta schema: {meta.get('schema')!r}")
            offset = float(meta["height"]["offset"])
            scale = float(meta["height"]["scale"])
        else:
            log.warning("meta.json missing; treating height.png as raw values")
        height_arr = raw * scale + offset
        height_arr -= height_arr.mean()  # quantization can shift the mean
        height: Optional[TextureImage] = TextureImage(height_arr)
    else:
        log.warning("%s missing; defaulting to zero height", layout.height.name)
        height = TextureImage(np.zeros((h, w, 1)))

    return MaterialSet(basecolor=basecolor, normal=normal,
                       roughness=roughness, metalness=metalness, height=height)
