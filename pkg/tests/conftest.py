"""Shared synthetic-material builders for the test suite."""
import numpy as np
import pytest

from chordkit.core import DirectionalLight, MaterialSet, TextureImage
from chordkit.heightfield import height_to_normals

GRID_R_LEVELS = (25.0 + 5.0 * np.arange(41)) / 255.0


def flat_normal_image(h, w):
    n = np.zeros((h, w, 3))
    n[:, :, 2] = 1.0
    return TextureImage(n)


def bumpy_normal_image(rng, h, w, amplitude=0.05, freqs=(1, 2, 3)):
    """Periodic band-limited height bumps -> unit normal map."""
    yy, xx = np.mgrid[0:h, 0:w]
    yy = yy / h * 2.0 * np.pi
    xx = xx / w * 2.0 * np.pi
    field = np.zeros((h, w))
    for f in freqs:
        ay, ax = rng.uniform(-1.0, 1.0, 2)
        py, px = rng.uniform(0.0, 2.0 * np.pi, 2)
        field += ay * np.sin(f * yy + py) + ax * np.cos(f * xx + px)
    field *= amplitude / max(np.abs(field).max(), 1e-9)
    field -= field.mean()
    return height_to_normals(TextureImage(field[:, :, None]), 1.0), field


def make_material(rng, h, w, r_range=(0.2, 1.0), m_values=(0.0,),
                  b_range=(0.1, 0.95), bump=0.05, grid_rm=False,
                  smooth_albedo=False):
    """Random MaterialSet; grid_rm snaps r/m to the 41x2 search grid."""
    if smooth_albedo:
        base = rng.uniform(*b_range, (1, 1, 3))
        wob = rng.uniform(-0.03, 0.03, (h, w, 3))
        b = np.clip(base + wob, 0.0, 1.0)
    else:
        b = rng.uniform(*b_range, (h, w, 3))
    normal, field = bumpy_normal_image(rng, h, w, amplitude=bump)
    if grid_rm:
        lo = np.searchsorted(GRID_R_LEVELS, r_range[0])
        hi = np.searchsorted(GRID_R_LEVELS, r_range[1], side="right")
        r = GRID_R_LEVELS[rng.integers(lo, hi, (h, w))]
        m = np.asarray(m_values)[rng.integers(0, len(m_values), (h, w))]
    else:
        r = rng.uniform(*r_range, (h, w))
        m = np.asarray(m_values)[rng.integers(0, len(m_values), (h, w))]
    height = field - field.mean()
    return MaterialSet(
        basecolor=TextureImage(b),
        normal=normal,
        roughness=TextureImage(r[:, :, None]),
        metalness=TextureImage(np.asarray(m, dtype=np.float64)[:, :, None]),
        height=TextureImage(height[:, :, None]),
    )


def random_light(rng, el_range_deg=(25.0, 80.0), radiance=np.pi):
    az = rng.uniform(0.0, 2.0 * np.pi)
    el = np.deg2rad(rng.uniform(*el_range_deg))
    return DirectionalLight.from_angles(az, el, radiance)


@pytest.fixture
def rng():
    return np.random.default_rng(20240814)
