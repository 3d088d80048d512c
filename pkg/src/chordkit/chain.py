"""Chained rendering decomposition.

The chain conditions each estimated map on the maps recovered before it:

    basecolor -> irradiance -> normal -> light -> roughness/metalness

Dividing the input render by the predicted basecolor exposes shading
(irradiance); irradiance plus normals pin down the dominant light; and
with basecolor, normals and light fixed, roughness and metalness are the
only free variables left, so a per-pixel grid search over a small
discrete space recovers them. Predictors for basecolor and normals are
pluggable; everything else here is deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .brdf import _shade_from_geometry, _shade_geometry
from .core import TOP_DOWN_VIEW, DirectionalLight, MaterialSet, TextureImage, ViewConfig
from .errors import ChainStepError
from .heightfield import integrate_gradients, normals_to_gradients
from .parallel import run_chunks, run_row_bands

__all__ = [
    "IRRADIANCE_EPS",
    "IRRADIANCE_MAX",
    "LAMBERT_DIELECTRIC_KD",
    "RmSearchSpace",
    "LightEstimate",
    "ChainState",
    "PredictorSuite",
    "passthrough_suite",
    "compute_irradiance",
    "estimate_light",
    "radiance_from_scale",
    "grid_search_rm",
    "run_chain",
]

# Divisor floor and clamp ceiling for the irradiance proxy.
IRRADIANCE_EPS = 1e-3
IRRADIANCE_MAX = 8.0
# Mean diffuse reflectance of a dielectric: 1 - F0 = 0.96. Used to turn
# a Lambertian shading scale back into a light radiance.
LAMBERT_DIELECTRIC_KD = 0.96

# Light-estimation grids (degrees): azimuth step and elevation range.
_AZ_STEP_DEG = 5.0
_EL_MIN_DEG = 15.0
_EL_MAX_DEG = 90.0
_REFINE_HALF_STEPS = 8
_CANDIDATE_BATCH = 64


class RmSearchSpace:
    """Discrete roughness/metalness candidate space for the grid search.

    The canonical space has the 41 roughness levels (25 + 5 i) / 255,
    i = 0..40, and binary metalness. Custom level lists are accepted for
    experimentation but must be strictly ascending within (0, 1].
    """

    __slots__ = ("roughness_levels", "metalness_levels")

    def __init__(self, roughness_levels: Sequence[float] = None):
        if roughness_levels is None:
            levels = (25.0 + 5.0 * np.arange(41)) / 255.0
        else:
            levels = np.asarray(roughness_levels, dtype=np.float64)
        if levels.ndim != 1 or levels.size < 1:
            raise ValueError("roughness_levels must be a non-empty 1-d sequence")
        if levels.min() <= 0.0 or levels.max() > 1.0:
            raise ValueError("roughness levels must lie in (0, 1]")
        if levels.size > 1 and not (np.diff(levels) > 0.0).all():
            raise ValueError("roughness levels must be strictly ascending")
        levels = np.ascontiguousarray(levels)
        levels.flags.writeable = False
        self.roughness_levels = levels
        self.metalness_levels = (0.0, 1.0)

    @classmethod
    def default(cls) -> "RmSearchSpace":
        return cls()

    def __repr__(self):
        return f"RmSearchSpace({self.roughness_levels.size} roughness levels x 2 metalness)"


@dataclass(frozen=True, eq=False)
class LightEstimate:
    """Dominant directional light fitted to an irradiance image.

    ``light`` carries the fitted direction and the radiance implied by
    the Lambertian relation scale = kd * E / pi (kd = 0.96); the raw
    least-squares ``intensity_scale`` is kept alongside.
    """

    light: DirectionalLight
    intensity_scale: float
    residual_mse: float

    def __post_init__(self):
        if not self.intensity_scale > 0.0:
            raise ValueError("intensity_scale must be positive")
        if not (np.isfinite(self.residual_mse) and self.residual_mse >= 0.0):
            raise ValueError("residual_mse must be finite and non-negative")
        if not self.light.direction[2] > 0.0:
            raise ValueError("estimated light must come from above the surface")


class ChainState:
    """Intermediate chain products kept for inspection and export.

    ``estimated_light`` is the fitted DirectionalLight l*; the full fit
    (scale, residual) is kept in ``light_estimate``.
    """

    __slots__ = ("irradiance", "rm_roughness", "rm_metalness", "light_estimate")

    def __init__(self, irradiance: TextureImage, rm_roughness: TextureImage,
                 rm_metalness: TextureImage, light_estimate: LightEstimate,
                 space: RmSearchSpace):
        if irradiance.data.min() < 0.0:
            raise ValueError("irradiance must be non-negative")
        if rm_roughness.channels != 1 or rm_metalness.channels != 1:
            raise ValueError("rm maps must be single-channel")
        if not np.isin(rm_roughness.data, space.roughness_levels).all():
            raise ValueError("rm roughness samples must lie on the search grid")
        if not np.isin(rm_metalness.data, space.metalness_levels).all():
            raise ValueError("rm metalness samples must be 0 or 1")
        self.irradiance = irradiance
        self.rm_roughness = rm_roughness
        self.rm_metalness = rm_metalness
        self.light_estimate = light_estimate

    @property
    def estimated_light(self) -> DirectionalLight:
        return self.light_estimate.light


@dataclass(frozen=True)
class PredictorSuite:
    """Pluggable predictors consumed by :func:`run_chain`.

    basecolor_predictor(i_rgb) -> basecolor
    normal_predictor(i_rgb, irradiance) -> normal map
    rm_predictor(i_rgb, (r_grid, m_grid)) -> (roughness, metalness)
    """

    basecolor_predictor: Callable[[TextureImage], TextureImage]
    normal_predictor: Callable[[TextureImage, TextureImage], TextureImage]
    rm_predictor: Callable[
        [TextureImage, "tuple[TextureImage, TextureImage]"],
        "tuple[TextureImage, TextureImage]",
    ]


def _flat_normal_map(resolution) -> TextureImage:
    h, w = resolution
    n = np.zeros((h, w, 3))
    n[:, :, 2] = 1.0
    return TextureImage(n)


def passthrough_suite() -> PredictorSuite:
    """Trivial predictors: clamped input as basecolor, flat normals,
    grid-search results passed through unchanged."""
    return PredictorSuite(
        basecolor_predictor=lambda i_rgb: TextureImage(np.clip(i_rgb.data, 0.0, 1.0)),
        normal_predictor=lambda i_rgb, irr: _flat_normal_map(i_rgb.resolution),
        rm_predictor=lambda i_rgb, rm: rm,
    )


def compute_irradiance(i_rgb: TextureImage, basecolor: TextureImage,
                       channels: int = 1) -> TextureImage:
    """Shading proxy: the input render divided by its basecolor.

    The divisor is floored at IRRADIANCE_EPS and the quotient clamped to
    [0, IRRADIANCE_MAX]. With channels = 1 (default) the quotient is
    averaged to a single channel; channels = 3 keeps the per-channel
    ratios.
    """
    if channels not in (1, 3):
        raise ValueError("channels must be 1 or 3")
    if basecolor.resolution != i_rgb.resolution or basecolor.channels != 3:
        raise ValueError("basecolor must be a 3-channel image matching i_rgb")
    if i_rgb.data.min() < 0.0:
        raise ValueError("i_rgb must be non-negative")
    ratio = i_rgb.data / np.maximum(basecolor.data, IRRADIANCE_EPS)
    if channels == 1:
        ratio = ratio.mean(axis=2, keepdims=True)
    return TextureImage(np.clip(ratio, 0.0, IRRADIANCE_MAX))


def _light_grid_directions():
    """Coarse az/el candidate grid, elevation descending from overhead.

    Descending elevation makes exact residual ties (flat shading) pick
    the overhead light first.
    """
    az = np.deg2rad(np.arange(0.0, 360.0, _AZ_STEP_DEG))
    el = np.deg2rad(np.arange(_EL_MAX_DEG, _EL_MIN_DEG - 1e-9, -_AZ_STEP_DEG))
    el_g, az_g = np.meshgrid(el, az, indexing="ij")
    return _angles_to_dirs(az_g.ravel(), el_g.ravel())


def _angles_to_dirs(az, el):
    ce = np.cos(el)
    return np.stack([ce * np.cos(az), ce * np.sin(az), np.sin(el)], axis=-1)


def _lambert_residuals(dirs, normals_flat, irr_flat, n_threads):
    """Least-squares scale and residual of scale * max(n.l, 0) vs irr.

    Residual via the expanded quadratic mean((sc*s - I)^2) =
    (sc^2 S.S - 2 sc S.I)/P + mean(I^2), floored at 0 against rounding.
    Each candidate is reduced over the full image by one worker, so the
    result is independent of threading.
    """
    n_cand = dirs.shape[0]
    scales = np.empty(n_cand)
    residuals = np.empty(n_cand)
    i_sq_mean = float(irr_flat @ irr_flat) / irr_flat.size

    batches = [(i, min(i + _CANDIDATE_BATCH, n_cand))
               for i in range(0, n_cand, _CANDIDATE_BATCH)]

    def work(b0, b1):
        for i0, i1 in batches[b0:b1]:
            s = np.maximum(normals_flat @ dirs[i0:i1].T, 0.0)  # (P, B)
            num = irr_flat @ s
            den = np.einsum("pb,pb->b", s, s)
            ok = den > 0.0
            sc = np.where(ok, num / np.where(ok, den, 1.0), 0.0)
            res = (sc * sc * den - 2.0 * sc * num) / irr_flat.size + i_sq_mean
            scales[i0:i1] = sc
            residuals[i0:i1] = np.maximum(res, 0.0)

    run_chunks(len(batches), n_threads, work)
    return scales, residuals


def estimate_light(irradiance: TextureImage, normal: TextureImage,
                   n_threads: int = 1) -> LightEstimate:
    """Fit the dominant directional light to an irradiance image.

    Fits scale * max(n.l, 0) to the irradiance in least squares over a
    coarse azimuth/elevation grid (5 degree steps, elevation 15..90),
    then refines once on a 17 x 17 local grid at 1/8 step. Raises
    ChainStepError("light_estimation") when the irradiance carries no
    shading signal (identically zero).
    """
    if normal.resolution != irradiance.resolution or normal.channels != 3:
        raise ValueError("normal map must be 3-channel and match the irradiance")
    irr = irradiance.data
    if irr.shape[2] == 3:
        irr = irr.mean(axis=2, keepdims=True)
    irr_flat = irr.ravel()
    if not irr_flat.any():
        raise ChainStepError("light_estimation", "irradiance has no shading signal")
    normals_flat = normal.data.reshape(-1, 3)

    dirs = _light_grid_directions()
    scales, residuals = _lambert_residuals(dirs, normals_flat, irr_flat, n_threads)
    best = int(np.argmin(residuals))
    az0 = float(np.arctan2(dirs[best, 1], dirs[best, 0]))
    el0 = float(np.arcsin(np.clip(dirs[best, 2], -1.0, 1.0)))

    # One refinement pass at 1/8 of the coarse step, elevation descending.
    # The exact coarse winner is prepended so refinement can only improve
    # on it and an exact fit keeps its residual bit for bit.
    step = np.deg2rad(_AZ_STEP_DEG) / _REFINE_HALF_STEPS
    offs = np.arange(_REFINE_HALF_STEPS, -_REFINE_HALF_STEPS - 1, -1, dtype=np.float64)
    el_f = np.clip(el0 + offs * step,
                   np.deg2rad(_EL_MIN_DEG), np.deg2rad(_EL_MAX_DEG))
    az_f = az0 + offs[::-1] * step
    el_g, az_g = np.meshgrid(el_f, az_f, indexing="ij")
    dirs_f = np.concatenate([dirs[best:best + 1],
                             _angles_to_dirs(az_g.ravel(), el_g.ravel())])
    scales_f, residuals_f = _lambert_residuals(dirs_f, normals_flat, irr_flat, n_threads)
    best_f = int(np.argmin(residuals_f))

    scale = float(scales_f[best_f])
    if not scale > 0.0:
        raise ChainStepError("light_estimation", "irradiance has no shading signal")
    light = DirectionalLight(direction=dirs_f[best_f],
                             radiance=radiance_from_scale(scale))
    return LightEstimate(light=light, intensity_scale=scale,
                         residual_mse=float(residuals_f[best_f]))


def radiance_from_scale(intensity_scale: float) -> np.ndarray:
    """Invert the Lambertian dielectric relation scale = kd * E / pi."""
    return np.full(3, intensity_scale * np.pi / LAMBERT_DIELECTRIC_KD)


def grid_search_rm(i_rgb: TextureImage, basecolor: TextureImage,
                   normal: TextureImage, light: DirectionalLight,
                   space: Optional[RmSearchSpace] = None,
                   view: ViewConfig = TOP_DOWN_VIEW,
                   n_threads: int = 1) -> "tuple[TextureImage, TextureImage]":
    """Per-pixel exhaustive roughness/metalness search.

    For every candidate (r, m) the pixel is re-rendered with the fixed
    basecolor, normal and light, and the candidate with the smallest
    squared RGB error wins. Candidates are visited with roughness
    ascending and metalness 0 before 1; only a strictly smaller error
    replaces the incumbent, so ties resolve to the smallest roughness
    and dielectric. Renders match shade_pixel bit for bit.
    """
    if space is None:
        space = RmSearchSpace.default()
    if basecolor.resolution != i_rgb.resolution or basecolor.channels != 3:
        raise ValueError("basecolor must be a 3-channel image matching i_rgb")
    if normal.resolution != i_rgb.resolution or normal.channels != 3:
        raise ValueError("normal map must be a 3-channel image matching i_rgb")

    h, w = i_rgb.resolution
    img = i_rgb.data
    b = basecolor.data
    n = normal.data
    out_r = np.empty((h, w, 1))
    out_m = np.empty((h, w, 1))

    def band(y0, y1):
        geo = _shade_geometry(n[y0:y1], light.direction, view.direction)
        best_err = np.full((y1 - y0, w), np.inf)
        best_r = np.empty((y1 - y0, w))
        best_m = np.empty((y1 - y0, w))
        for r_level in space.roughness_levels:
            for m_level in space.metalness_levels:
                cand = _shade_from_geometry(b[y0:y1], r_level, m_level,
                                            *geo, light.radiance)
                err = ((cand - img[y0:y1]) ** 2).mean(axis=2)
                better = err < best_err
                best_err[better] = err[better]
                best_r[better] = r_level
                best_m[better] = m_level
        out_r[y0:y1, :, 0] = best_r
        out_m[y0:y1, :, 0] = best_m

    run_row_bands(h, n_threads, band)
    return TextureImage(out_r), TextureImage(out_m)


def _check_map(step, img, resolution, channels):
    if not isinstance(img, TextureImage):
        raise ChainStepError(step, f"expected a TextureImage, got {type(img).__name__}")
    if img.resolution != resolution:
        raise ChainStepError(step, f"returned resolution {img.resolution}, expected {resolution}")
    if img.channels != channels:
        raise ChainStepError(step, f"returned {img.channels} channel(s), expected {channels}")


def run_chain(i_rgb: TextureImage, predictors: PredictorSuite,
              space: Optional[RmSearchSpace] = None,
              irradiance_channels: int = 1,
              height_scale: float = 1.0,
              view: ViewConfig = TOP_DOWN_VIEW,
              n_threads: int = 1) -> "tuple[MaterialSet, ChainState]":
    """Run the full decomposition chain on one rendered image.

    Steps, in order: basecolor prediction, irradiance, normal
    prediction, light estimation, roughness/metalness grid search, rm
    prediction, height integration. Any failure raises ChainStepError
    naming the step.
    """
    if space is None:
        space = RmSearchSpace.default()
    res = i_rgb.resolution

    try:
        basecolor = predictors.basecolor_predictor(i_rgb)
    except ChainStepError:
        raise
    except Exception as exc:
        raise ChainStepError("basecolor_predictor", str(exc)) from exc
    _check_map("basecolor_predictor", basecolor, res, 3)

    try:
        irradiance = compute_irradiance(i_rgb, basecolor, irradiance_channels)
    except Exception as exc:
        raise ChainStepError("irradiance", str(exc)) from exc

    try:
        normal = predictors.normal_predictor(i_rgb, irradiance)
    except ChainStepError:
        raise
    except Exception as exc:
        raise ChainStepError("normal_predictor", str(exc)) from exc
    _check_map("normal_predictor", normal, res, 3)

    try:
        estimate = estimate_light(irradiance, normal, n_threads=n_threads)
    except ChainStepError:
        raise
    except Exception as exc:
        raise ChainStepError("light_estimation", str(exc)) from exc

    try:
        rm_grid = grid_search_rm(i_rgb, basecolor, normal, estimate.light,
                                 space=space, view=view, n_threads=n_threads)
    except Exception as exc:
        raise ChainStepError("grid_search", str(exc)) from exc

    try:
        roughness, metalness = predictors.rm_predictor(i_rgb, rm_grid)
    except ChainStepError:
        raise
    except Exception as exc:
        raise ChainStepError("rm_predictor", str(exc)) from exc
    _check_map("rm_predictor", roughness, res, 1)
    _check_map("rm_predictor", metalness, res, 1)

    try:
        height = integrate_gradients(normals_to_gradients(normal, height_scale))
    except Exception as exc:
        raise ChainStepError("height_integration", str(exc)) from exc

    try:
        material = MaterialSet(basecolor=basecolor, normal=normal,
                               roughness=roughness, metalness=metalness,
                               height=height)
        state = ChainState(irradiance=irradiance,
                           rm_roughness=rm_grid[0], rm_metalness=rm_grid[1],
                           light_estimate=estimate, space=space)
    except Exception as exc:
        raise ChainStepError("assembly", str(exc)) from exc
    return material, state
