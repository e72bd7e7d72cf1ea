"""Pupil functions and defocus-parameterized RGB point-spread functions.

The PSF of the coded lens is computed with scalar Fourier optics: the circular
pupil is multiplied by the ring phase mask and a quadratic defocus phase
``exp(j * psi * rho**2)``; the incoherent PSF is the squared magnitude of its
Fourier transform.  The pupil grid is sized per wavelength so that one sample
of the FFT output equals one sensor pixel, which makes the red PSF physically
wider than the blue one.

Ring phases and the defocus parameter are specified at a reference wavelength
and scaled by ``lambda_ref / lambda`` for the other colors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import fft as sfft

COLORS = ("R", "G", "B")


@dataclass(frozen=True)
class OpticalConfig:
    aperture_radius_mm: float = 1.15
    wavelengths_nm: tuple[float, float, float] = (610.0, 535.0, 455.0)
    reference_wavelength_nm: float = 455.0
    focal_length_mm: float = 12.0
    pixel_pitch_um: float = 1.25
    pupil_grid: int = 256
    kernel_size: int = 31
    time_samples: int = 49
    exposure_s: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "wavelengths_nm", tuple(float(w) for w in self.wavelengths_nm))
        if len(self.wavelengths_nm) != 3:
            raise ValueError("exactly three wavelengths (R, G, B) are required")
        if min(self.wavelengths_nm) <= 0 or self.reference_wavelength_nm <= 0:
            raise ValueError("wavelengths must be positive")
        if self.aperture_radius_mm <= 0 or self.focal_length_mm <= 0 or self.pixel_pitch_um <= 0:
            raise ValueError("aperture radius, focal length and pixel pitch must be positive")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if self.kernel_size > self.pupil_grid:
            raise ValueError("kernel_size cannot exceed pupil_grid")
        if self.time_samples < 2:
            raise ValueError("time_samples must be at least 2")
        if self.exposure_s <= 0:
            raise ValueError("exposure_s must be positive")

    def pupil_radius_px(self, wavelength_nm: float) -> float:
        """Aperture radius in pupil-grid samples for which the FFT output pitch is one pixel."""
        # pupil sample spacing = lambda * f / (M * pitch)
        spacing = wavelength_nm * 1e-9 * self.focal_length_mm * 1e-3 / (self.pupil_grid * self.pixel_pitch_um * 1e-6)
        return self.aperture_radius_mm * 1e-3 / spacing

    def to_dict(self) -> dict:
        return {
            "aperture_radius_mm": self.aperture_radius_mm,
            "wavelengths_nm": list(self.wavelengths_nm),
            "reference_wavelength_nm": self.reference_wavelength_nm,
            "focal_length_mm": self.focal_length_mm,
            "pixel_pitch_um": self.pixel_pitch_um,
            "pupil_grid": self.pupil_grid,
            "kernel_size": self.kernel_size,
            "time_samples": self.time_samples,
            "exposure_s": self.exposure_s,
        }


@dataclass(frozen=True)
class PhaseMask:
    """Concentric phase rings; radii are fractions of the aperture radius."""

    rings: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        rings = tuple((float(a), float(b), float(p)) for a, b, p in self.rings)
        for a, b, _ in rings:
            if not 0.0 <= a < b <= 1.0:
                raise ValueError(f"ring radii must satisfy 0 <= inner < outer <= 1, got ({a}, {b})")
        ordered = sorted(rings)
        for (_, b0, _), (a1, _, _) in zip(ordered, ordered[1:]):
            if a1 < b0:
                raise ValueError("phase rings overlap")
        object.__setattr__(self, "rings", rings)

    @classmethod
    def default(cls) -> "PhaseMask":
        """Two-ring mask: [0.633, 0.92] mm at 6.5 rad and [0.92, 1.15] mm at 13.2 rad, R = 1.15 mm."""
        r = 1.15
        return cls(((0.633 / r, 0.92 / r, 6.5), (0.92 / r, 1.0, 13.2)))

    @classmethod
    def clear(cls) -> "PhaseMask":
        return cls(())

    def scaled(self, factor: float) -> "PhaseMask":
        """Same geometry with every ring phase multiplied by ``factor``."""
        return PhaseMask(tuple((a, b, p * factor) for a, b, p in self.rings))

    def phase(self, rho: np.ndarray) -> np.ndarray:
        """Mask phase (radians, reference wavelength) at normalized radius ``rho``."""
        out = np.zeros_like(rho, dtype=float)
        for a, b, p in self.rings:
            upper = rho < b if b < 1.0 else rho <= 1.0
            out[(rho >= a) & upper] = p
        return out

    def to_list(self) -> list:
        return [list(r) for r in self.rings]


@dataclass(frozen=True)
class DefocusSchedule:
    """Per-time-sample defocus parameter at the reference wavelength."""

    psi: np.ndarray
    bounds: tuple[float, float] = (-6.0, 6.0)

    def __post_init__(self):
        psi = np.array(self.psi, dtype=float).ravel()
        lo, hi = float(self.bounds[0]), float(self.bounds[1])
        if not lo < hi:
            raise ValueError(f"invalid bounds ({lo}, {hi})")
        if psi.size < 2:
            raise ValueError("a schedule needs at least two samples")
        if not np.all(np.isfinite(psi)):
            raise ValueError("schedule contains non-finite values")
        if psi.min() < lo or psi.max() > hi:
            raise ValueError(f"schedule values outside bounds [{lo}, {hi}]")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "bounds", (lo, hi))

    def __len__(self) -> int:
        return self.psi.size

    @property
    def times(self) -> np.ndarray:
        return normalized_times(self.psi.size)

    @classmethod
    def linear(cls, start: float = -4.0, stop: float = 4.0, n: int = 49, bounds=(-6.0, 6.0)) -> "DefocusSchedule":
        return cls(np.linspace(start, stop, n), bounds)

    @classmethod
    def constant(cls, value: float = 0.0, n: int = 49, bounds=(-6.0, 6.0)) -> "DefocusSchedule":
        return cls(np.full(n, float(value)), bounds)

    @classmethod
    def periodic(cls, amplitude: float = 4.0, cycles: float = 1.0, n: int = 49,
                 bounds=(-6.0, 6.0)) -> "DefocusSchedule":
        """``amplitude * sin(pi * cycles * t)`` over normalized time, an alternative initialization."""
        return cls(amplitude * np.sin(np.pi * cycles * normalized_times(n)), bounds)

    @classmethod
    def random(cls, low: float = -4.0, high: float = 4.0, n: int = 49, seed: int = 0,
               bounds=(-6.0, 6.0)) -> "DefocusSchedule":
        """Independent uniform samples in ``[low, high]``, an alternative initialization."""
        return cls(np.random.default_rng(seed).uniform(low, high, n), bounds)

    def reversed(self) -> "DefocusSchedule":
        return DefocusSchedule(self.psi[::-1].copy(), self.bounds)

    def resampled(self, n: int) -> "DefocusSchedule":
        """Linear interpolation of psi over normalized time onto ``n`` samples."""
        return DefocusSchedule(np.interp(normalized_times(n), self.times, self.psi), self.bounds)


def normalized_times(n: int) -> np.ndarray:
    """t_n = (n - (N-1)/2) / ((N-1)/2), spanning [-1, 1]."""
    half = (n - 1) / 2
    return (np.arange(n) - half) / half


@dataclass(frozen=True, eq=False)
class PSFStack:
    kernels: np.ndarray  # (N, 3, k, k)
    energy_fraction: np.ndarray  # (N, 3)
    psi: np.ndarray = field(default=None)
    mask: PhaseMask = field(default=None)
    config: OpticalConfig = field(default=None)

    @property
    def n(self) -> int:
        return self.kernels.shape[0]

    @property
    def kernel_size(self) -> int:
        return self.kernels.shape[-1]

    def time_mean(self) -> np.ndarray:
        return self.kernels.mean(axis=0)


def defocus_from_geometry(aperture_radius: float, wavelength: float, inv_image_plane: float,
                          inv_ideal_plane: float) -> float:
    """Defocus phase at the pupil edge, ``pi R^2 / lambda * (1/z_img - 1/z_i)``.

    All arguments are in SI units (meters and inverse meters).
    """
    if wavelength <= 0 or aperture_radius <= 0:
        raise ValueError("wavelength and aperture radius must be positive")
    return math.pi * aperture_radius ** 2 / wavelength * (inv_image_plane - inv_ideal_plane)


def pupil_coords(config: OpticalConfig, wavelength: float, radius_px: float | None = None) -> np.ndarray:
    """Normalized radius on the pupil grid, zero at index ``(M//2, M//2)``."""
    if radius_px is None:
        radius_px = config.pupil_radius_px(wavelength)
    m = config.pupil_grid
    x = np.arange(m) - m // 2
    return np.hypot(x[:, None], x[None, :]) / radius_px


def _base_pupil(mask: PhaseMask, config: OpticalConfig, wavelength: float, radius_px=None):
    rho = pupil_coords(config, wavelength, radius_px)
    inside = rho <= 1.0
    scale = config.reference_wavelength_nm / wavelength
    base = np.where(inside, np.exp(1j * mask.phase(rho) * scale), 0.0)
    rho2 = np.where(inside, rho ** 2, 0.0)
    return base, rho2, scale


def pupil_field(mask: PhaseMask, config: OpticalConfig, wavelength: float, psi_ref: float,
                radius_px: float | None = None) -> np.ndarray:
    """Complex coded pupil ``P * C * exp(j psi_lambda rho^2)`` on the ``pupil_grid`` square.

    ``wavelength`` is in nanometers.  ``radius_px`` overrides the physical
    sampling (aperture radius in grid samples).
    """
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    base, rho2, scale = _base_pupil(mask, config, wavelength, radius_px)
    return base * np.exp(1j * psi_ref * scale * rho2)


def _crop_slice(config: OpticalConfig) -> slice:
    c, h = config.pupil_grid // 2, config.kernel_size // 2
    return slice(c - h, c + h + 1)


def _fields_to_psf(fields: np.ndarray, config: OpticalConfig, workers=None):
    """Un-normalized full-grid PSFs and the FFT of the fields, batched over the leading axis."""
    spec = sfft.fftshift(sfft.fft2(sfft.ifftshift(fields, axes=(-2, -1)), norm="ortho", workers=workers),
                         axes=(-2, -1))
    return np.abs(spec) ** 2, spec


def _crop_dft(config: OpticalConfig, support: int) -> np.ndarray:
    """Rows of the centered orthonormal DFT that land inside the kernel crop.

    Restricted to the pupil support ``[-support, support]``; identical to the
    corresponding entries of the full ``pupil_grid`` FFT.
    """
    m, h = config.pupil_grid, config.kernel_size // 2
    u = np.arange(-h, h + 1)
    x = np.arange(-support, support + 1)
    return np.exp(-2j * np.pi * np.outer(u, x) / m) / np.sqrt(m)


def _psf_batch(mask, config, wavelength, psi_refs, with_grad=False):
    base, _, scale = _base_pupil(mask, config, wavelength)
    m = config.pupil_grid
    radius = config.pupil_radius_px(wavelength)
    r = min(int(np.ceil(radius)), m // 2 - 1)
    sl = slice(m // 2 - r, m // 2 + r + 1)
    base = base[sl, sl]
    a = _crop_dft(config, r)
    # rho^2 = x^2 + y^2 makes the defocus chirp separable; base is zero outside the disk
    x2 = (np.arange(-r, r + 1) / radius) ** 2
    # Parseval: total PSF energy equals the pupil energy, independent of psi
    energy = np.sum(np.abs(base) ** 2)
    psis = np.asarray(psi_refs, dtype=float).ravel()
    k = config.kernel_size
    kernels = np.empty((psis.size, k, k))
    frac = np.empty(psis.size)
    dk = np.empty_like(kernels) if with_grad else None
    # samples are processed one at a time so that batched and single calls agree bitwise
    for i, p in enumerate(psis):
        ae = a * np.exp(1j * (p * scale) * x2)[None, :]
        left = ae @ base
        spec = left @ ae.T
        crop = np.abs(spec) ** 2
        s = crop.sum()
        kernels[i] = crop / s
        frac[i] = s / energy
        if with_grad:
            ae2 = ae * x2[None, :]
            dspec = 1j * (ae2 @ base @ ae.T + left @ ae2.T)
            dcrop = 2.0 * np.real(np.conj(spec) * dspec) * scale
            dk[i] = dcrop / s - crop * (dcrop.sum() / s ** 2)
    return kernels, frac, dk


def psf_full(mask: PhaseMask, config: OpticalConfig, wavelength: float, psi_ref: float) -> np.ndarray:
    """Un-cropped, un-normalized PSF on the full pupil grid (energy equals pupil energy)."""
    full, _ = _fields_to_psf(pupil_field(mask, config, wavelength, psi_ref), config)
    return full


def psf(mask: PhaseMask, config: OpticalConfig, wavelength: float, psi_ref: float):
    """Cropped unit-sum PSF kernel and the fraction of energy the crop retains."""
    k, frac, _ = _psf_batch(mask, config, wavelength, [psi_ref])
    return k[0], float(frac[0])


def psf_grad(mask: PhaseMask, config: OpticalConfig, wavelength: float, psi_ref: float) -> np.ndarray:
    """Derivative of the normalized cropped kernel with respect to ``psi_ref``.

    Uses ``dh/dpsi = 2 Re[conj(H) F{j rho^2 P_C}]`` on the full grid, then the
    quotient rule for the crop renormalization.
    """
    _, _, dk = _psf_batch(mask, config, wavelength, [psi_ref], with_grad=True)
    return dk[0]


def psf_full_grad(mask: PhaseMask, config: OpticalConfig, wavelength: float, psi_ref: float) -> np.ndarray:
    """Derivative of the un-cropped, un-normalized PSF with respect to ``psi_ref``."""
    base, rho2, scale = _base_pupil(mask, config, wavelength)
    f = base * np.exp(1j * psi_ref * scale * rho2)
    _, spec = _fields_to_psf(f, config)
    _, dspec = _fields_to_psf(1j * rho2 * f, config)
    return 2.0 * np.real(np.conj(spec) * dspec) * scale


def psf_stack(mask: PhaseMask, config: OpticalConfig, schedule: DefocusSchedule | Sequence[float],
              with_grad: bool = False):
    """Kernels for every (time sample, color) pair.

    Returns a :class:`PSFStack`; with ``with_grad=True`` returns
    ``(stack, grads)`` where ``grads`` has the same shape as the kernels and
    holds d kernel[n, c] / d psi[n].
    """
    psi = schedule.psi if isinstance(schedule, DefocusSchedule) else np.asarray(schedule, dtype=float)
    if psi.size != config.time_samples:
        raise ValueError(f"schedule has {psi.size} samples, config expects {config.time_samples}")
    k = config.kernel_size
    kernels = np.empty((psi.size, 3, k, k))
    grads = np.empty_like(kernels) if with_grad else None
    frac = np.empty((psi.size, 3))
    for c, lam in enumerate(config.wavelengths_nm):
        kc, fc, gc = _psf_batch(mask, config, lam, psi, with_grad=with_grad)
        kernels[:, c], frac[:, c] = kc, fc
        if with_grad:
            grads[:, c] = gc
    stack = PSFStack(kernels, frac, np.array(psi, copy=True), mask, config)
    return (stack, grads) if with_grad else stack
