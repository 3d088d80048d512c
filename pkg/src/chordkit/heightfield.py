"""Height-map integration on a periodic domain.

Normals and heights are linked through central differences with wrap
(materials are tileable), and gradients are integrated with an FFT
Poisson solve whose frequency response matches the same central
difference stencil exactly. That makes height_to_normals followed by
normals_to_gradients followed by integrate_gradients reproduce any
band-limited, mean-zero periodic height field up to rounding.

Axis conventions: image x runs along +columns, tangent y runs along
-rows (up), so q = dh/dy = -(dh/drow).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import TextureImage

__all__ = [
    "NZ_MIN",
    "GradientField",
    "height_to_normals",
    "normals_to_gradients",
    "integrate_gradients",
]

# Floor on nz before the slope division in normals_to_gradients.
NZ_MIN = 0.05


@dataclass(frozen=True, eq=False)
class GradientField:
    """Per-pixel height slopes p = dh/dx and q = dh/dy (tangent frame).

    Slopes are per pixel step; ``pixel_scale`` records world units per
    pixel for export metadata and does not enter the integration.
    """

    p: TextureImage
    q: TextureImage
    pixel_scale: float = 1.0

    def __post_init__(self):
        if self.p.channels != 1 or self.q.channels != 1:
            raise ValueError("gradient fields must be single-channel")
        if self.p.resolution != self.q.resolution:
            raise ValueError("p and q must share a resolution")
        if not self.pixel_scale > 0.0:
            raise ValueError("pixel_scale must be positive")


def height_to_normals(height: TextureImage, height_scale: float = 1.0) -> TextureImage:
    """Derive a unit normal map from a height map.

    Central differences with periodic wrap; the unnormalized normal is
    (-s * dh/dcol, +s * dh/drow, 1) with s = height_scale, then unit
    normalized. nz is kept >= NZ_MIN by construction only when slopes
    are bounded; steep fields simply yield grazing normals.
    """
    if height.channels != 1:
        raise ValueError("height must be single-channel")
    h = height.data[:, :, 0]
    dcol = (np.roll(h, -1, axis=1) - np.roll(h, 1, axis=1)) * 0.5
    drow = (np.roll(h, -1, axis=0) - np.roll(h, 1, axis=0)) * 0.5
    n = np.stack([-height_scale * dcol, height_scale * drow, np.ones_like(h)], axis=2)
    n /= np.sqrt((n * n).sum(axis=2))[:, :, None]
    return TextureImage(n)


def normals_to_gradients(normal: TextureImage, height_scale: float = 1.0) -> GradientField:
    """Convert a normal map to height slopes; inverts height_to_normals.

    nz is clamped to NZ_MIN before the division so grazing normals stay
    finite. p = (-nx/nz) / height_scale, q = (-ny/nz) / height_scale.
    """
    if normal.channels != 3:
        raise ValueError("normal map must be 3-channel")
    if not height_scale > 0.0:
        raise ValueError("height_scale must be positive")
    n = normal.data
    nz = np.maximum(n[:, :, 2], NZ_MIN)
    p = (-n[:, :, 0] / nz) / height_scale
    q = (-n[:, :, 1] / nz) / height_scale
    return GradientField(p=TextureImage(p), q=TextureImage(q))


def integrate_gradients(grad: GradientField) -> TextureImage:
    """Least-squares periodic integration of a slope field via FFT.

    Solves min_h sum |D_x h - p|^2 + |D_y h - q|^2 where D_x, D_y are
    the wrapped central-difference operators, by dividing in frequency
    space:

        H = (-i sin(wx) P - i sin(wy) Q) / (sin^2 wx + sin^2 wy)

    with w* = 2 pi k / N. The DC bin (and any bin where both responses
    vanish, e.g. the shared Nyquist corner) is set to zero. The output
    mean is pinned to exactly 0.0 by snapping samples to a power-of-two
    lattice coarse enough that every float partial sum is exact, then
    zeroing the total in integer arithmetic; the snap perturbs samples
    by < 1e-9 relative, far below the integrator's accuracy.
    """
    p = grad.p.data[:, :, 0]
    q = grad.q.data[:, :, 0]
    rows, cols = p.shape
    gx = p
    gy = -q  # row axis points down; tangent y points up

    fx = np.fft.fft2(gx)
    fy = np.fft.fft2(gy)
    # sin(2 pi f) vanishes analytically at f = +-1/2 (even-size Nyquist
    # bins); float sin leaves ~1e-16 there, which the division would
    # amplify by ~1e16, so pin those responses to exact zero.
    freq_x = np.fft.fftfreq(cols)
    freq_y = np.fft.fftfreq(rows)
    sx = np.where(np.abs(freq_x) == 0.5, 0.0, np.sin(2.0 * np.pi * freq_x))[None, :]
    sy = np.where(np.abs(freq_y) == 0.5, 0.0, np.sin(2.0 * np.pi * freq_y))[:, None]
    denom = sx * sx + sy * sy
    with np.errstate(divide="ignore", invalid="ignore"):
        hf = (-1j * sx * fx - 1j * sy * fy) / denom
    hf[denom == 0.0] = 0.0

    h = np.real(np.fft.ifft2(hf))
    peak = float(np.abs(h).max())
    if peak == 0.0:
        return TextureImage(np.zeros((rows, cols, 1)))
    # Lattice quantum q = 2^e with |samples| <= 2^51 q / npix: every
    # partial sum is an exact multiple of q below 2^53 q, so summation
    # never rounds and the integer-zeroed total stays exactly 0.0.
    npix = rows * cols
    exp = math.ceil(math.log2(peak)) - (51 - math.ceil(math.log2(npix)))
    q = 2.0 ** exp
    ints = np.rint(h / q).astype(np.int64)
    total = int(ints.sum())
    base, rem = divmod(total, npix)
    ints -= base
    ints.ravel()[:rem] -= 1
    return TextureImage((ints.astype(np.float64) * q)[:, :, None])
