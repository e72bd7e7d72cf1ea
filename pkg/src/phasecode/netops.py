"""Reference versions of the reconstruction network's input and loss primitives.

These are plain numpy functions meant for building the network inputs outside
this package and for formula-level checks; no layers or autodiff live here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PositionalEncodingConfig:
    num_frequencies: int = 5
    freq_min: float = 1.0
    freq_max: float = 20.0

    def __post_init__(self):
        if self.num_frequencies < 1:
            raise ValueError("num_frequencies must be positive")
        if not 0 < self.freq_min <= self.freq_max:
            raise ValueError("need 0 < freq_min <= freq_max")

    @property
    def frequencies(self) -> np.ndarray:
        """Log-linearly spaced frequencies in [freq_min, freq_max]."""
        return np.geomspace(self.freq_min, self.freq_max, self.num_frequencies)

    @property
    def feature_count(self) -> int:
        return 4 * self.num_frequencies


def positional_features(u, v, cfg: PositionalEncodingConfig | None = None) -> np.ndarray:
    """``[cos(w u), sin(w u), cos(w v), sin(w v)]`` for each frequency, concatenated.

    ``u`` and ``v`` are normalized pixel coordinates in [0, 1]; scalars give a
    vector of ``4 * num_frequencies`` values, arrays get a trailing feature
    axis.
    """
    cfg = cfg or PositionalEncodingConfig()
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    for name, x in (("u", u), ("v", v)):
        if np.any(x < 0) or np.any(x > 1):
            raise ValueError(f"{name} must lie in [0, 1]")
    u, v = np.broadcast_arrays(u, v)
    w = cfg.frequencies
    wu = u[..., None] * w
    wv = v[..., None] * w
    feats = np.stack([np.cos(wu), np.sin(wu), np.cos(wv), np.sin(wv)], axis=-1)
    return feats.reshape(u.shape + (cfg.feature_count,))


def positional_feature_maps(height: int, width: int, cfg: PositionalEncodingConfig | None = None) -> np.ndarray:
    """Per-pixel features, shape ``(height, width, 4 * num_frequencies)``; u runs along columns."""
    u = np.linspace(0.0, 1.0, width)[None, :]
    v = np.linspace(0.0, 1.0, height)[:, None]
    return positional_features(np.broadcast_to(u, (height, width)), np.broadcast_to(v, (height, width)), cfg)


def adain(x: np.ndarray, gamma, beta, eps: float = 1e-5) -> np.ndarray:
    """Instance-normalize each channel of a ``(C, H, W)`` map, then scale by gamma and shift by beta."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x, dtype=float)
    gamma = np.asarray(gamma, dtype=float).reshape(-1, *([1] * (x.ndim - 1)))
    beta = np.asarray(beta, dtype=float).reshape(-1, *([1] * (x.ndim - 1)))
    axes = tuple(range(1, x.ndim))
    mu = x.mean(axis=axes, keepdims=True)
    sd = x.std(axis=axes, keepdims=True)
    return gamma * (x - mu) / (sd + eps) + beta


def smooth_l1(a, b, delta: float = 1.0) -> float:
    """Mean Huber-style loss: ``0.5 d^2 / delta`` inside ``|d| <= delta``, ``|d| - 0.5 delta`` outside."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if delta <= 0:
        raise ValueError("delta must be positive")
    d = np.abs(a - b)
    return float(np.mean(np.where(d <= delta, 0.5 * d * d / delta, d - 0.5 * delta)))


DEFAULT_LOSS_WEIGHTS = (1.0, 0.1, 0.1)


def combine_losses(l_l1: float, l_percep: float, l_vid: float, alphas=DEFAULT_LOSS_WEIGHTS) -> float:
    """Weighted sum of the pixel, perceptual and video losses (correctly rounded)."""
    a1, ap, av = alphas
    return math.fsum((a1 * l_l1, ap * l_percep, av * l_vid))


def time_channel(t: float, height: int, width: int) -> np.ndarray:
    """The normalized time broadcast to a constant ``(height, width)`` channel."""
    if not -1.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [-1, 1], got {t}")
    return np.full((height, width), float(t))
