"""Image formation: CRF, conventional and coded motion blur, noise, point traces.

Images are float arrays of shape ``(H, W, 3)`` in signal (linear) space.
Frame sequences are arrays of shape ``(N, H, W, 3)`` or lists of images.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import fft as sfft

from .fourier import embed_centered, pad_centered, shift_multiplier, integer_shift
from .optics import PSFStack, normalized_times

GAMMA = 2.2


def inverse_crf(img: np.ndarray) -> np.ndarray:
    """Gamma-space image in [0, 1] to signal space (``x ** 2.2``)."""
    img = np.asarray(img, dtype=float)
    if img.size and (img.min() < 0.0 or img.max() > 1.0):
        warnings.warn("inverse_crf input outside [0, 1]; clamping", RuntimeWarning, stacklevel=2)
        img = np.clip(img, 0.0, 1.0)
    return img ** GAMMA


def crf(img: np.ndarray) -> np.ndarray:
    """Signal space to gamma space (``x ** (1/2.2)``, negatives mapped to 0)."""
    return np.maximum(np.asarray(img, dtype=float), 0.0) ** (1.0 / GAMMA)


def as_frames(frames) -> np.ndarray:
    """Stack a frame sequence into an ``(N, H, W, C)`` float array, checking shapes."""
    if isinstance(frames, np.ndarray):
        if frames.ndim != 4:
            raise ValueError(f"frame array must be 4-D (N, H, W, C), got shape {frames.shape}")
        if frames.shape[0] == 0:
            raise ValueError("empty frame sequence")
        return frames.astype(float, copy=False)
    frames = list(frames)
    if not frames:
        raise ValueError("empty frame sequence")
    shape = np.shape(frames[0])
    for i, f in enumerate(frames):
        if np.shape(f) != shape:
            raise ValueError(f"frame {i} has shape {np.shape(f)}, expected {shape}")
    return np.asarray(frames, dtype=float)


def temporal_mean(frames) -> np.ndarray:
    """Conventional-camera blur: the plain average of the frames."""
    f = as_frames(frames)
    # averaging deviations from the first frame keeps a static scene exact
    return f[0] + (f - f[0]).mean(axis=0)


def code_image(frames, stack: PSFStack, boundary: str = "reflect") -> np.ndarray:
    """Coded blur ``(1/N) sum_n h_n * S_n`` with per-color kernels.

    ``boundary`` is ``"reflect"`` (symmetric padding; for natural images) or
    ``"periodic"`` (circular convolution; exact FFT identities).
    """
    f = as_frames(frames)
    if f.shape[0] != stack.n:
        raise ValueError(f"{f.shape[0]} frames but the PSF stack has {stack.n} time samples")
    if f.shape[-1] != stack.kernels.shape[1]:
        raise ValueError(f"frames have {f.shape[-1]} channels, stack has {stack.kernels.shape[1]} colors")
    if boundary not in ("reflect", "periodic"):
        raise ValueError(f"unknown boundary mode {boundary!r}")
    h, w = f.shape[1:3]
    p = stack.kernel_size // 2
    if boundary == "reflect":
        f = np.pad(f, ((0, 0), (p, p), (p, p), (0, 0)), mode="symmetric")
    grid = f.shape[1:3]
    out = np.empty(grid + (f.shape[-1],))
    for c in range(f.shape[-1]):
        kf = sfft.fft2(embed_centered(stack.kernels[:, c], grid))
        acc = (sfft.fft2(f[..., c]) * kf).sum(axis=0)
        out[..., c] = sfft.ifft2(acc).real / stack.n
    if boundary == "reflect":
        out = out[p:p + h, p:p + w]
    return out


def displacements(velocity_px, n: int) -> np.ndarray:
    """Per-sample (dy, dx) displacement ``(velocity / 2) * t_n``; velocity is (vx, vy)."""
    vx, vy = float(velocity_px[0]), float(velocity_px[1])
    t = normalized_times(n)
    return np.stack([0.5 * vy * t, 0.5 * vx * t], axis=1)


def shifted_kernel_sum(kernels: np.ndarray, disp: np.ndarray, size: int, integer: bool = False) -> np.ndarray:
    """``(1/N) sum_n shift(pad(kernels[n]), disp[n])`` on a ``size`` x ``size`` periodic canvas.

    ``kernels`` has shape ``(N, C, k, k)``; returns ``(C, size, size)`` with
    the unshifted kernel center at ``size // 2``.
    """
    n = kernels.shape[0]
    if integer:
        padded = pad_centered(kernels, size)
        out = sum(np.roll(padded[i], (int(np.rint(disp[i, 0])), int(np.rint(disp[i, 1]))), axis=(-2, -1))
                  for i in range(n))
        return out / n
    spec = padded_spectrum(kernels, size)
    acc = np.zeros(spec.shape[1:], dtype=complex)
    for i in range(n):
        acc += spec[i] * shift_multiplier((size, size), disp[i, 0], disp[i, 1])
    return sfft.ifft2(acc).real / n


_spectrum_cache: dict = {}


def padded_spectrum(kernels: np.ndarray, size: int) -> np.ndarray:
    """FFT of the kernels zero-padded to ``size``; memoized on the array identity (stacks are immutable)."""
    key = (id(kernels), size)
    hit = _spectrum_cache.get(key)
    if hit is not None and hit[0] is kernels:
        return hit[1]
    spec = sfft.fft2(pad_centered(kernels, size))
    if len(_spectrum_cache) >= 8:
        _spectrum_cache.pop(next(iter(_spectrum_cache)))
    _spectrum_cache[key] = (kernels, spec)
    return spec


def trace_size(kernel_size: int, speed: float) -> int:
    return kernel_size + int(math.ceil(speed)) + 8


def point_trace(stack: PSFStack, velocity_px, integer: bool = False) -> np.ndarray:
    """Image of a point source crossing the field at constant velocity during the exposure.

    Returned as an ``(S, S, 3)`` image where ``S = kernel_size + ceil(|v|) + 8``.
    """
    speed = float(np.hypot(*velocity_px))
    size = trace_size(stack.kernel_size, speed)
    k = shifted_kernel_sum(stack.kernels, displacements(velocity_px, stack.n), size, integer)
    return np.moveaxis(k, 0, -1)


def moving_point_frames(n: int, size: int, velocity_px, channels: int = 3, integer: bool = False) -> np.ndarray:
    """Frames of a unit white point moving through the canvas center, for trace comparisons."""
    delta = np.zeros((size, size, channels))
    delta[size // 2, size // 2] = 1.0
    disp = displacements(velocity_px, n)
    if integer:
        return np.stack([integer_shift(delta, dy, dx) for dy, dx in disp])
    spec = sfft.fft2(delta, axes=(0, 1))
    return np.stack([sfft.ifft2(spec * shift_multiplier((size, size), dy, dx)[:, :, None], axes=(0, 1)).real
                     for dy, dx in disp])


def add_awgn(img: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    """Add i.i.d. Gaussian noise of standard deviation ``sigma`` (fraction of [0, 1]); no clamping."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    img = np.asarray(img, dtype=float)
    if sigma == 0:
        return img.copy()
    rng = np.random.default_rng(seed)
    return img + rng.normal(0.0, sigma, size=img.shape)


def scale_noise_for_exposure(sigma_base: float, exposure_ratio: float) -> float:
    """Noise level that matches a shorter/longer exposure at equal scene brightness."""
    if exposure_ratio <= 0:
        raise ValueError(f"exposure_ratio must be positive, got {exposure_ratio}")
    return sigma_base / exposure_ratio
