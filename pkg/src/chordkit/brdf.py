"""Cook-Torrance shading under a single directional light.

The renderer evaluates, per pixel,

    color = [ (1 - F) * basecolor / pi * (1 - metalness)
              + D * G * F / (4 (n.v)(n.l) + eps) ] * max(n.l, 0) * radiance

with the GGX normal distribution, the Schlick-GGX direct-lighting
geometry term and the Schlick Fresnel approximation. The view is a fixed
orthographic top-down camera unless overridden. All paths (scalar probe,
full-image render, analytic Jacobian) share one vectorized core so their
results agree bitwise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import TOP_DOWN_VIEW, DirectionalLight, MaterialSet, TextureImage, ViewConfig
from .parallel import run_row_bands

__all__ = [
    "R_MIN",
    "F0_DIELECTRIC",
    "SPEC_DENOM_EPS",
    "BrdfSample",
    "ShadingJacobian",
    "ggx_ndf",
    "schlick_ggx_geometry",
    "fresnel_schlick",
    "shade_pixel",
    "shade_pixel_with_jacobian",
    "render",
]

# Roughness floor applied before the NDF remap; keeps alpha finite.
R_MIN = 0.01
# Dielectric normal-incidence reflectance.
F0_DIELECTRIC = 0.04
# Guard on the specular denominator 4 (n.v)(n.l).
SPEC_DENOM_EPS = 1e-6


def ggx_ndf(n_dot_h, roughness):
    """GGX (Trowbridge-Reitz) NDF with the alpha = roughness^2 remap.

    Roughness is floored at ``R_MIN``. Accepts scalars or arrays.
    """
    n_dot_h = np.asarray(n_dot_h, dtype=np.float64)
    r = np.maximum(np.asarray(roughness, dtype=np.float64), R_MIN)
    a = r * r
    a2 = a * a
    u = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0
    return a2 / (np.pi * u * u)


def _g1(x, k):
    return x / (x * (1.0 - k) + k)


def schlick_ggx_geometry(n_dot_v, n_dot_l, roughness):
    """Smith-style Schlick-GGX masking-shadowing, direct-lighting remap.

    Uses k = (roughness + 1)^2 / 8 on the raw roughness, not alpha.
    """
    n_dot_v = np.asarray(n_dot_v, dtype=np.float64)
    n_dot_l = np.asarray(n_dot_l, dtype=np.float64)
    r = np.asarray(roughness, dtype=np.float64)
    k = (r + 1.0) * (r + 1.0) / 8.0
    return _g1(n_dot_v, k) * _g1(n_dot_l, k)


def fresnel_schlick(h_dot_v, f0):
    """Schlick Fresnel: f0 + (1 - f0) (1 - h.v)^5."""
    h_dot_v = np.asarray(h_dot_v, dtype=np.float64)
    f0 = np.asarray(f0, dtype=np.float64)
    q = 1.0 - h_dot_v
    q2 = q * q
    q5 = q2 * q2 * q
    return f0 + (1.0 - f0) * q5


@dataclass(frozen=True, eq=False)
class BrdfSample:
    """Per-pixel material record for the scalar shading entry points."""

    basecolor: np.ndarray
    normal: np.ndarray
    roughness: float
    metalness: float

    def __post_init__(self):
        b = np.asarray(self.basecolor, dtype=np.float64).reshape(3)
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        if b.min() < 0.0 or b.max() > 1.0:
            raise ValueError("basecolor must lie in [0, 1]")
        if abs(float((n * n).sum()) - 1.0) > 2e-4:
            raise ValueError("normal must be unit length")
        if not 0.0 <= self.roughness <= 1.0:
            raise ValueError("roughness must lie in [0, 1]")
        if not 0.0 <= self.metalness <= 1.0:
            raise ValueError("metalness must lie in [0, 1]")
        b.flags.writeable = False
        n.flags.writeable = False
        object.__setattr__(self, "basecolor", b)
        object.__setattr__(self, "normal", n)


@dataclass(frozen=True, eq=False)
class ShadingJacobian:
    """Analytic derivatives of one shaded pixel.

    Rows index the output color channel. ``d_normal`` is projected onto
    the tangent plane of the normal (J (I - n n^T)) so it matches finite
    differences taken with renormalization.
    """

    d_basecolor: np.ndarray  # (3, 3), diagonal
    d_roughness: np.ndarray  # (3,)
    d_metalness: np.ndarray  # (3,)
    d_normal: np.ndarray     # (3, 3)


def _half_vector(light_dir, view_dir):
    h = light_dir + view_dir
    return h / np.sqrt((h * h).sum(-1))[..., None]


def _shade_geometry(n, light_dir, view_dir):
    """Candidate-independent per-pixel geometry: (ndl, ndv, ndh, q5).

    q5 is the (1 - h.v)^5 Fresnel weight with a trailing channel axis.
    """
    h = _half_vector(light_dir, view_dir)
    ndl = np.maximum((n * light_dir).sum(-1), 0.0)
    ndv = np.maximum((n * view_dir).sum(-1), 0.0)
    ndh = np.maximum((n * h).sum(-1), 0.0)
    hdv = np.clip((h * view_dir).sum(-1), 0.0, 1.0)
    q = 1.0 - hdv
    q2 = q * q
    q5 = (q2 * q2 * q)[..., None]
    return ndl, ndv, ndh, q5


def _shade_from_geometry(b, r, m, ndl, ndv, ndh, q5, radiance):
    """Cook-Torrance evaluation given precomputed geometry terms."""
    r = np.asarray(r, dtype=np.float64)
    rf = np.maximum(r, R_MIN)
    a = rf * rf
    a2 = a * a
    u = ndh * ndh * (a2 - 1.0) + 1.0
    d_ndf = a2 / (np.pi * u * u)

    # k comes from the raw roughness; only the NDF needs the floor.
    k = (r + 1.0) * (r + 1.0) / 8.0
    geom = _g1(ndl, k) * _g1(ndv, k)

    m = np.asarray(m, dtype=np.float64)
    f0 = F0_DIELECTRIC * (1.0 - m[..., None]) + b * m[..., None]
    fres = f0 + (1.0 - f0) * q5

    spec_scalar = d_ndf * geom / (4.0 * ndv * ndl + SPEC_DENOM_EPS)
    diffuse = (1.0 - fres) * (b / np.pi) * (1.0 - m[..., None])
    return (diffuse + fres * spec_scalar[..., None]) * ndl[..., None] * radiance


def _shade_core(b, n, r, m, light_dir, radiance, view_dir):
    """Shared shading core; broadcasts over leading dimensions.

    b (..., 3), n (..., 3), r (...), m (...); light_dir and radiance are
    (3,) or batched (..., 3). Returns (..., 3).
    """
    ndl, ndv, ndh, q5 = _shade_geometry(n, light_dir, view_dir)
    return _shade_from_geometry(b, r, m, ndl, ndv, ndh, q5, radiance)


def _shade_jacobian_core(b, n, r, m, light_dir, radiance, view_dir):
    """Color plus analytic partials, vectorized like :func:`_shade_core`.

    Returns (color, d_b, d_r, d_m, d_n) where d_b holds the diagonal of
    d color / d basecolor, d_r and d_m are (..., 3), and d_n is
    (..., 3, 3) already projected onto the normal's tangent plane.
    """
    l = light_dir
    v = view_dir
    h = _half_vector(l, v)

    ndl_raw = (n * l).sum(-1)
    ndv_raw = (n * v).sum(-1)
    ndh_raw = (n * h).sum(-1)
    ndl = np.maximum(ndl_raw, 0.0)
    ndv = np.maximum(ndv_raw, 0.0)
    ndh = np.maximum(ndh_raw, 0.0)
    hdv = np.clip((h * v).sum(-1), 0.0, 1.0)

    r = np.asarray(r, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    rf = np.maximum(r, R_MIN)
    a = rf * rf
    a2 = a * a
    u = ndh * ndh * (a2 - 1.0) + 1.0
    d_ndf = a2 / (np.pi * u * u)

    k = (r + 1.0) * (r + 1.0) / 8.0
    g1l = _g1(ndl, k)
    g1v = _g1(ndv, k)
    geom = g1l * g1v

    mc = m[..., None]
    f0 = F0_DIELECTRIC * (1.0 - mc) + b * mc
    q = 1.0 - hdv
    q2 = q * q
    q5 = (q2 * q2 * q)[..., None]
    fres = f0 + (1.0 - f0) * q5

    denom = 4.0 * ndv * ndl + SPEC_DENOM_EPS
    spec = d_ndf * geom / denom
    diffuse = (1.0 - fres) * (b / np.pi) * (1.0 - mc)
    color = (diffuse + fres * spec[..., None]) * ndl[..., None] * radiance

    # --- basecolor (diagonal) and metalness ---
    one_minus_q5 = 1.0 - q5
    df_db = mc * one_minus_q5
    d_b = ((1.0 - mc) / np.pi * ((1.0 - fres) - b * df_db)
           + df_db * spec[..., None]) * ndl[..., None] * radiance

    df_dm = (b - F0_DIELECTRIC) * one_minus_q5
    ddiff_dm = -df_dm * (b / np.pi) * (1.0 - mc) - (1.0 - fres) * (b / np.pi)
    d_m = (ddiff_dm + df_dm * spec[..., None]) * ndl[..., None] * radiance

    # --- roughness (through alpha in D and k in G) ---
    gate_r = (r >= R_MIN).astype(np.float64)
    da2_dr = 4.0 * rf * rf * rf * gate_r
    dD_dr = da2_dr * (u - 2.0 * a2 * ndh * ndh) / (np.pi * u * u * u)
    dk_dr = (r + 1.0) / 4.0
    dg1l_dk = -ndl * (1.0 - ndl) / _sq(ndl * (1.0 - k) + k)
    dg1v_dk = -ndv * (1.0 - ndv) / _sq(ndv * (1.0 - k) + k)
    dG_dr = (dg1l_dk * g1v + g1l * dg1v_dk) * dk_dr
    dspec_dr = (dD_dr * geom + d_ndf * dG_dr) / denom
    d_r = fres * dspec_dr[..., None] * ndl[..., None] * radiance

    # --- normal (chain rule through n.l, n.v, n.h, then tangent-project) ---
    gate_l = (ndl_raw > 0.0).astype(np.float64)
    gate_v = (ndv_raw > 0.0).astype(np.float64)
    gate_h = (ndh_raw > 0.0).astype(np.float64)

    dg1l_dx = k / _sq(ndl * (1.0 - k) + k)
    dg1v_dx = k / _sq(ndv * (1.0 - k) + k)
    dspec_dndl = (d_ndf * dg1l_dx * g1v / denom
                  - d_ndf * geom * 4.0 * ndv / _sq(denom))
    dspec_dndv = (d_ndf * dg1v_dx * g1l / denom
                  - d_ndf * geom * 4.0 * ndl / _sq(denom))
    dD_dndh = -4.0 * a2 * ndh * (a2 - 1.0) / (np.pi * u * u * u)
    dspec_dndh = dD_dndh * geom / denom

    # d color / d ndl has a direct term (ndl multiplies everything).
    dcol_dndl = ((diffuse + fres * spec[..., None])
                 + fres * dspec_dndl[..., None] * ndl[..., None]) * radiance
    dcol_dndv = fres * dspec_dndv[..., None] * ndl[..., None] * radiance
    dcol_dndh = fres * dspec_dndh[..., None] * ndl[..., None] * radiance

    d_n = (dcol_dndl[..., None] * (gate_l[..., None] * l)[..., None, :]
           + dcol_dndv[..., None] * (gate_v[..., None] * v)[..., None, :]
           + dcol_dndh[..., None] * (gate_h[..., None] * h)[..., None, :])
    # Project: J <- J (I - n n^T).
    jn = (d_n * n[..., None, :]).sum(-1)
    d_n = d_n - jn[..., None] * n[..., None, :]

    return color, d_b, d_r, d_m, d_n


def _sq(x):
    return x * x


def shade_pixel(sample: BrdfSample, light: DirectionalLight,
                view: ViewConfig = TOP_DOWN_VIEW) -> np.ndarray:
    """Shade one pixel; returns linear RGB (3,). Backfacing pixels are black.

    Runs the same elementwise core as :func:`render`, so a pixel shaded
    here matches the corresponding rendered pixel bit for bit.
    """
    return _shade_core(sample.basecolor[None, :], sample.normal[None, :],
                       np.array([sample.roughness]), np.array([sample.metalness]),
                       light.direction, light.radiance, view.direction)[0]


def shade_pixel_with_jacobian(sample: BrdfSample, light: DirectionalLight,
                              view: ViewConfig = TOP_DOWN_VIEW):
    """Shade one pixel and return (color, ShadingJacobian)."""
    color, d_b, d_r, d_m, d_n = _shade_jacobian_core(
        sample.basecolor[None, :], sample.normal[None, :],
        np.array([sample.roughness]), np.array([sample.metalness]),
        light.direction, light.radiance, view.direction)
    jac = ShadingJacobian(
        d_basecolor=np.diag(d_b[0]),
        d_roughness=d_r[0],
        d_metalness=d_m[0],
        d_normal=d_n[0],
    )
    return color[0], jac


def render(material: MaterialSet, light: DirectionalLight,
           view: ViewConfig = TOP_DOWN_VIEW, n_threads: int = 1) -> TextureImage:
    """Render the full material under one directional light.

    Output is linear radiance, unclamped. The result is independent of
    ``n_threads``; bands only split elementwise work across rows.
    """
    b = material.basecolor.data
    n = material.normal.data
    r = material.roughness.data[:, :, 0]
    m = material.metalness.data[:, :, 0]
    out = np.empty_like(b)

    def band(y0, y1):
        out[y0:y1] = _shade_core(b[y0:y1], n[y0:y1], r[y0:y1], m[y0:y1],
                                 light.direction, light.radiance, view.direction)

    run_row_bands(material.resolution[0], n_threads, band)
    return TextureImage(out)
