"""Synthetic textured scenes under global constant-velocity translation.

Textures live on a periodic grid, so translating them with Fourier shifts and
blurring with periodic boundaries is an exact instance of the coded imaging
model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .fourier import shift_multiplier
from .imaging import displacements
from .optics import normalized_times


def textured_scene(size: int, rng: np.random.Generator, luminance_std: float = 0.18,
                   color_std: float = 0.25, chroma_std: float = 0.03) -> np.ndarray:
    """Colored texture with a power-law spectrum, roughly natural-image statistics.

    A shared luminance field (1/f amplitude) is modulated by smooth per-channel
    gains plus a weak independent per-channel texture.  Values are clipped to
    [0.02, 1.2] in signal space.
    """
    fy = sfft.fftfreq(size)[:, None]
    fx = sfft.fftfreq(size)[None, :]
    f = np.hypot(fy, fx)
    f[0, 0] = 1.0

    def field(beta):
        z = sfft.ifft2(sfft.fft2(rng.normal(size=(size, size))) / f ** beta).real
        return (z - z.mean()) / z.std()

    lum = 0.5 + luminance_std * field(1.0)
    chans = [lum * (1.0 + color_std * field(2.0)) + chroma_std * field(1.0) for _ in range(3)]
    return np.clip(np.stack(chans, axis=-1), 0.02, 1.2)


def translate(img: np.ndarray, disp: np.ndarray) -> np.ndarray:
    """Frames ``shift(img, disp[n])`` for an ``(N, 2)`` array of (dy, dx) displacements."""
    h, w = img.shape[:2]
    spec = sfft.fft2(img, axes=(0, 1))
    # a zero shift is returned exactly rather than through an FFT round trip
    return np.stack([img.astype(float) if dy == 0 and dx == 0 else
                     sfft.ifft2(spec * shift_multiplier((h, w), dy, dx)[:, :, None], axes=(0, 1)).real
                     for dy, dx in disp])


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    """A texture (the scene at mid-exposure) moving by ``velocity_px`` over one baseline exposure."""

    scene_id: str
    texture: np.ndarray
    velocity_px: tuple[float, float]

    def frames(self, n: int, exposure_ratio: float = 1.0) -> np.ndarray:
        """``n`` frames spanning an exposure ``exposure_ratio`` times the baseline."""
        v = (self.velocity_px[0] * exposure_ratio, self.velocity_px[1] * exposure_ratio)
        return translate(self.texture, displacements(v, n))

    def frames_at(self, times, exposure_ratio: float = 1.0) -> np.ndarray:
        """Ground-truth frames at arbitrary normalized times."""
        t = np.asarray(times, dtype=float)
        vx, vy = self.velocity_px[0] * exposure_ratio, self.velocity_px[1] * exposure_ratio
        return translate(self.texture, np.stack([0.5 * vy * t, 0.5 * vx * t], axis=1))


def random_scenes(count: int, size: int = 96, seed: int = 0, speed_range=(8.0, 24.0),
                  horizontal: bool = True) -> list[SyntheticScene]:
    """Reproducible set of textured scenes with random speeds and directions."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        tex = textured_scene(size, rng)
        speed = rng.uniform(*speed_range)
        if horizontal:
            v = (float(rng.choice([-1.0, 1.0]) * speed), 0.0)
        else:
            a = rng.uniform(0, 2 * np.pi)
            v = (float(speed * np.cos(a)), float(speed * np.sin(a)))
        out.append(SyntheticScene(f"scene_{i:03d}", tex, v))
    return out


def gt_times(count: int = 7) -> np.ndarray:
    return normalized_times(count) if count > 1 else np.zeros(1)
