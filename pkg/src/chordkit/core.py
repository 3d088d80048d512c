"""Core image and material types plus color-space and normal codecs.

All image data is carried as float64 ``(H, W, C)`` arrays frozen after
construction. Color pixels are linear radiometric values unless tagged
sRGB; normals use a tangent frame with x along +columns, y along -rows
(up) and z out of the surface.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ColorSpace",
    "TextureImage",
    "MaterialSet",
    "DirectionalLight",
    "ViewConfig",
    "TOP_DOWN_VIEW",
    "srgb_to_linear",
    "linear_to_srgb",
    "srgb_to_linear_array",
    "linear_to_srgb_array",
    "encode_normal",
    "decode_normal",
]

# Unit-normal tolerance for stored normal maps.
NORMAL_UNIT_TOL = 1e-4
# Minimum z component a decoded/stored normal may have.
NORMAL_NZ_MIN = 0.0
# Height maps must be mean-centered to within this bound.
HEIGHT_MEAN_TOL = 1e-5


class ColorSpace(enum.Enum):
    LINEAR = "linear"
    SRGB = "srgb"


class TextureImage:
    """Immutable ``(H, W, C)`` float image with a color-space tag.

    ``C`` is 1 or 3. sRGB-tagged images must lie in [0, 1]; linear images
    may hold any finite values. The backing array is contiguous float64
    with ``writeable = False``.
    """

    __slots__ = ("data", "space")

    def __init__(self, data, space: ColorSpace = ColorSpace.LINEAR):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError(f"expected an (H, W, 1|3) image, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image must have at least one pixel, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("image contains non-finite samples")
        if not isinstance(space, ColorSpace):
            raise TypeError(f"space must be a ColorSpace, got {space!r}")
        if space is ColorSpace.SRGB and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("sRGB images must lie in [0, 1]")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        self.data = arr
        self.space = space

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def resolution(self) -> tuple[int, int]:
        return self.data.shape[0], self.data.shape[1]

    def __repr__(self):
        return (
            f"TextureImage({self.height}x{self.width}x{self.channels}, "
            f"{self.space.value})"
        )


def _require_resolution(name, img: TextureImage, res, channels):
    if img.resolution != res:
        raise ValueError(f"{name} resolution {img.resolution} != {res}")
    if img.channels != channels:
        raise ValueError(f"{name} must have {channels} channel(s), got {img.channels}")


def _require_unit_interval(name, img: TextureImage):
    if img.data.min() < 0.0 or img.data.max() > 1.0:
        raise ValueError(f"{name} samples must lie in [0, 1]")


class MaterialSet:
    """A complete SVBRDF: basecolor, normal, roughness, metalness, height.

    All maps share one resolution. basecolor/roughness/metalness are
    linear values in [0, 1]; the normal map stores unit vectors with
    z > 0; height is mean-centered.
    """

    __slots__ = ("basecolor", "normal", "roughness", "metalness", "height")

    def __init__(self, basecolor: TextureImage, normal: TextureImage,
                 roughness: TextureImage, metalness: TextureImage,
                 height: TextureImage):
        res = basecolor.resolution
        if basecolor.channels != 3:
            raise ValueError("basecolor must be 3-channel")
        if basecolor.space is not ColorSpace.LINEAR:
            raise ValueError("basecolor must be stored linear")
        _require_unit_interval("basecolor", basecolor)
        _require_resolution("normal", normal, res, 3)
        _require_resolution("roughness", roughness, res, 1)
        _require_resolution("metalness", metalness, res, 1)
        _require_resolution("height", height, res, 1)
        _require_unit_interval("roughness", roughness)
        _require_unit_interval("metalness", metalness)

        n = normal.data
        norms = np.sqrt((n * n).sum(axis=2))
        if np.abs(norms - 1.0).max() > NORMAL_UNIT_TOL:
            raise ValueError("normal map vectors must be unit length")
        if n[:, :, 2].min() <= NORMAL_NZ_MIN:
            raise ValueError("normal map z components must be positive")

        mean = float(height.data.mean())
        if abs(mean) > HEIGHT_MEAN_TOL:
            raise ValueError(f"height map mean {mean:g} exceeds tolerance {HEIGHT_MEAN_TOL:g}")

        self.basecolor = basecolor
        self.normal = normal
        self.roughness = roughness
        self.metalness = metalness
        self.height = height

    @property
    def resolution(self) -> tuple[int, int]:
        return self.basecolor.resolution

    def __repr__(self):
        h, w = self.resolution
        return f"MaterialSet({h}x{w})"


def _direction_from_angles(azimuth_rad: float, elevation_rad: float) -> np.ndarray:
    """Unit direction pointing from the surface toward the light.

    Azimuth is measured from +x toward +y; elevation from the surface
    plane toward +z.
    """
    ce = np.cos(elevation_rad)
    d = np.array([
        ce * np.cos(azimuth_rad),
        ce * np.sin(azimuth_rad),
        np.sin(elevation_rad),
    ], dtype=np.float64)
    return d / np.sqrt((d * d).sum())


@dataclass(frozen=True, eq=False)
class DirectionalLight:
    """Directional light with a unit direction toward the light and a
    per-channel linear radiance."""

    direction: np.ndarray
    radiance: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        norm = float(np.sqrt((d * d).sum()))
        if not np.isfinite(norm) or norm < 1e-12:
            raise ValueError("light direction must be a nonzero vector")
        d = d / norm
        e = np.asarray(self.radiance, dtype=np.float64)
        if e.ndim == 0:
            e = np.full(3, float(e))
        e = e.reshape(3)
        if not np.isfinite(e).all() or e.min() < 0.0:
            raise ValueError("radiance must be finite and non-negative")
        d.flags.writeable = False
        e.flags.writeable = False
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "radiance", e)

    @classmethod
    def from_angles(cls, azimuth_rad: float, elevation_rad: float,
                    radiance) -> "DirectionalLight":
        if np.isscalar(radiance):
            radiance = (radiance, radiance, radiance)
        return cls(_direction_from_angles(azimuth_rad, elevation_rad), radiance)

    @property
    def azimuth_rad(self) -> float:
        return float(np.arctan2(self.direction[1], self.direction[0]) % (2.0 * np.pi))

    @property
    def elevation_rad(self) -> float:
        return float(np.arcsin(np.clip(self.direction[2], -1.0, 1.0)))


@dataclass(frozen=True, eq=False)
class ViewConfig:
    """Orthographic camera; the view direction points from surface to eye."""

    direction: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        d = self.direction
        if d is None:
            d = np.array([0.0, 0.0, 1.0])
        d = np.asarray(d, dtype=np.float64).reshape(3)
        norm = float(np.sqrt((d * d).sum()))
        if not np.isfinite(norm) or norm < 1e-12:
            raise ValueError("view direction must be a nonzero vector")
        if d[2] <= 0.0:
            raise ValueError("view direction must have positive z")
        d = d / norm
        d.flags.writeable = False
        object.__setattr__(self, "direction", d)


# The fixed top-down orthographic view used throughout the pipeline.
TOP_DOWN_VIEW = ViewConfig()


# === Color-space conversion (IEC 61966-2-1) ===

def srgb_to_linear_array(x: np.ndarray) -> np.ndarray:
    """Elementwise sRGB -> linear on values in [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def linear_to_srgb_array(x: np.ndarray) -> np.ndarray:
    """Elementwise linear -> sRGB; input is clamped to [0, 1] first."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.where(x <= 0.0031308, x * 12.92, 1.055 * x ** (1.0 / 2.4) - 0.055)


def srgb_to_linear(img: TextureImage) -> TextureImage:
    if img.space is not ColorSpace.SRGB:
        raise ValueError("srgb_to_linear expects an sRGB-tagged image")
    return TextureImage(srgb_to_linear_array(img.data), ColorSpace.LINEAR)


def linear_to_srgb(img: TextureImage) -> TextureImage:
    if img.space is not ColorSpace.LINEAR:
        raise ValueError("linear_to_srgb expects a linear-tagged image")
    return TextureImage(linear_to_srgb_array(img.data), ColorSpace.SRGB)


# === Normal codec ===

def encode_normal(n: np.ndarray) -> np.ndarray:
    """Map unit normals (..., 3) to RGB in [0, 1] via (n + 1) / 2."""
    n = np.asarray(n, dtype=np.float64)
    if n.shape[-1] != 3:
        raise ValueError("normals must have a trailing dimension of 3")
    return (n + 1.0) * 0.5


def decode_normal(rgb: np.ndarray) -> np.ndarray:
    """Invert :func:`encode_normal` and renormalize.

    Raises if any decoded vector has near-zero magnitude (< 1e-3) or a
    non-positive z component.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[-1] != 3:
        raise ValueError("encoded normals must have a trailing dimension of 3")
    n = rgb * 2.0 - 1.0
    mag = np.sqrt((n * n).sum(axis=-1))
    if mag.min() < 1e-3:
        raise ValueError("decoded normal has near-zero magnitude")
    n = n / mag[..., None]
    if n[..., 2].min() <= 0.0:
        raise ValueError("decoded normal has non-positive z component")
    return n
