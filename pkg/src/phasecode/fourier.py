"""Small FFT utilities shared by the imaging, reconstruction and optimization code."""

from __future__ import annotations

import numpy as np
from scipy import fft as sfft


def shift_multiplier(shape: tuple[int, int], dy: float, dx: float) -> np.ndarray:
    """Frequency-domain multiplier that translates a real image by (dy, dx) pixels.

    The multiplier is Hermitian-symmetric, so applying it to the spectrum of a
    real image yields a real image for both even and odd sizes (the Nyquist bin
    of an even axis gets ``cos`` instead of a complex exponential).
    """
    return _axis_multiplier(shape[0], dy)[:, None] * _axis_multiplier(shape[1], dx)[None, :]


def _axis_multiplier(n: int, d: float) -> np.ndarray:
    f = sfft.fftfreq(n)
    m = np.exp(-2j * np.pi * f * d)
    if n % 2 == 0:
        m[n // 2] = np.cos(np.pi * d)
    return m


def fourier_shift(img: np.ndarray, dy: float, dx: float) -> np.ndarray:
    """Periodic sub-pixel translation of the first two axes of ``img``."""
    shape = img.shape[:2]
    m = shift_multiplier(shape, dy, dx)
    if img.ndim == 3:
        m = m[:, :, None]
    out = sfft.ifft2(sfft.fft2(img, axes=(0, 1)) * m, axes=(0, 1))
    return out.real


def integer_shift(img: np.ndarray, dy: float, dx: float) -> np.ndarray:
    """Periodic translation by the displacement rounded to whole pixels."""
    return np.roll(img, (int(np.rint(dy)), int(np.rint(dx))), axis=(0, 1))


def embed_centered(kernel: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Place a (..., k, k) kernel so its center pixel lands at index (0, 0) of a periodic grid.

    The result is ready for FFT-based circular convolution without a phase
    offset.
    """
    kh, kw = kernel.shape[-2:]
    if kh > shape[0] or kw > shape[1]:
        raise ValueError(f"kernel {kh}x{kw} does not fit in grid {shape}")
    out = np.zeros(kernel.shape[:-2] + tuple(shape), dtype=kernel.dtype)
    out[..., :kh, :kw] = kernel
    return np.roll(out, (-(kh // 2), -(kw // 2)), axis=(-2, -1))


def pad_centered(kernel: np.ndarray, size: int) -> np.ndarray:
    """Zero-pad a (..., k, k) kernel to (..., size, size) keeping its center at ``size // 2``."""
    k = kernel.shape[-1]
    if size < k:
        raise ValueError(f"cannot pad kernel of side {k} to {size}")
    out = np.zeros(kernel.shape[:-2] + (size, size), dtype=kernel.dtype)
    o = size // 2 - k // 2
    out[..., o:o + k, o:o + k] = kernel
    return out


def point_mirror(img: np.ndarray) -> np.ndarray:
    """Reflect the first two axes through the grid center ``(h // 2, w // 2)`` periodically."""
    h, w = img.shape[:2]
    iy = (2 * (h // 2) - np.arange(h)) % h
    ix = (2 * (w // 2) - np.arange(w)) % w
    return img[iy][:, ix]


def circular_convolve(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Circular convolution of an (H, W) image with a centered (k, k) kernel."""
    kf = sfft.fft2(embed_centered(kernel, img.shape[:2]))
    return sfft.ifft2(sfft.fft2(img) * kf).real
