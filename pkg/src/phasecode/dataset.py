"""Frame ingestion and synthesis of coded/uncoded training samples and VFI blurred videos."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from . import io as pio
from .imaging import add_awgn, as_frames, code_image, crf, inverse_crf, temporal_mean
from .optics import DefocusSchedule, PSFStack, psf_stack

GT_COUNT = 7
MANIFEST_KEYS = ("scene", "schedule_sha256", "sigma", "seed", "timing", "gt_indices", "files")


class IngestionError(ValueError):
    pass


@dataclass(frozen=True)
class TimingSetup:
    exposure_frames: int
    reset_frames: int
    label: str = ""

    def __post_init__(self):
        if self.exposure_frames < 2:
            raise ValueError("exposure_frames must be at least 2")
        if self.reset_frames < 0:
            raise ValueError("reset_frames must be non-negative")
        if not self.label:
            object.__setattr__(self, "label", f"{self.exposure_frames}-{self.reset_frames}")

    @property
    def cycle(self) -> int:
        return self.exposure_frames + self.reset_frames

    @classmethod
    def preset(cls, label: str) -> "TimingSetup":
        presets = {"48-8": (48, 8), "32-16": (32, 16)}
        if label not in presets:
            raise ValueError(f"unknown timing preset {label!r}; known: {sorted(presets)}")
        return cls(*presets[label], label)


def gt_indices(n: int, count: int = GT_COUNT) -> list[int]:
    """Evenly spaced frame indices ``round(k (n - 1) / (count - 1))``; 0, 8, ..., 48 for n = 49."""
    return [int(round(k * (n - 1) / (count - 1))) for k in range(count)]


def scene_seed(seed: int, scene_id: str) -> int:
    """Order-independent per-scene seed: ``seed XOR`` the first 32 bits of sha256(scene id)."""
    h = int.from_bytes(hashlib.sha256(scene_id.encode("utf-8")).digest()[:4], "big")
    return int(seed) ^ h


def _png_files(directory):
    return sorted(f for f in os.listdir(directory) if f.lower().endswith(".png"))


def ingest_scene(directory, n: int = 49) -> np.ndarray:
    """Decode the lexicographically ordered PNG frames of one scene into signal space.

    Returns ``(count, H, W, 3)`` with ``count >= n``.
    """
    if not os.path.isdir(directory):
        raise IngestionError(f"{directory}: not a directory")
    names = _png_files(directory)
    if len(names) < n:
        raise IngestionError(f"{directory}: insufficient frames ({len(names)} found, {n} required)")
    frames, shape = [], None
    for name in names:
        path = os.path.join(directory, name)
        try:
            img = pio.read_png(path)
        except pio.FormatError as exc:
            raise IngestionError(f"undecodable file {path}: {exc}") from exc
        if shape is None:
            shape = img.shape
        elif img.shape != shape:
            raise IngestionError(f"shape mismatch: {path} is {img.shape[:2]}, expected {shape[:2]}")
        frames.append(inverse_crf(img))
    return np.stack(frames)


def discover_scenes(root) -> list[str]:
    """Scene ids: the sub-directories of ``root`` in lexicographic order."""
    return sorted(d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d)))


def synthesize_sample(frames, stack: PSFStack, sigma: float, seed: int, uncoded: bool = False,
                      scene: str = "scene", boundary: str = "reflect"):
    """Blurred image with AWGN, the seven ground-truth frames, and the manifest.

    ``frames`` must hold exactly ``stack.n`` frames.  The manifest's ``files``
    entry names the outputs written by :func:`write_sample`.
    """
    f = as_frames(frames)
    if f.shape[0] != stack.n:
        raise ValueError(f"expected {stack.n} frames, got {f.shape[0]}")
    blurred = temporal_mean(f) if uncoded else code_image(f, stack, boundary)
    blurred = add_awgn(blurred, sigma, seed)
    idx = gt_indices(stack.n)
    manifest = {
        "scene": scene,
        "schedule_sha256": pio.schedule_sha256(stack.psi),
        "sigma": float(sigma),
        "seed": int(seed),
        "timing": "uncoded" if uncoded else "coded",
        "gt_indices": idx,
        "files": ["coded.pfm", "coded.png"] + [f"gt_{k:02d}.pfm" for k in range(len(idx))],
    }
    return blurred, f[idx], manifest


def write_sample(out_dir, blurred, gt, manifest) -> None:
    os.makedirs(out_dir, exist_ok=True)
    pio.write_pfm(os.path.join(out_dir, "coded.pfm"), blurred)
    pio.write_png(os.path.join(out_dir, "coded.png"), crf(blurred))
    for k, g in enumerate(gt):
        pio.write_pfm(os.path.join(out_dir, f"gt_{k:02d}.pfm"), g)
    write_manifest(os.path.join(out_dir, "manifest.json"), manifest)


def write_manifest(path, manifest) -> None:
    if tuple(manifest) != MANIFEST_KEYS:
        raise ValueError(f"manifest keys must be exactly {MANIFEST_KEYS}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, ensure_ascii=False)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        m = json.load(fh)
    if set(m) != set(MANIFEST_KEYS):
        raise ValueError(f"{path}: manifest keys {sorted(m)} differ from {sorted(MANIFEST_KEYS)}")
    return m


def synthesize_vfi(frames, stack: PSFStack, timing: TimingSetup, sigma: float, seed: int,
                   scene: str = "scene", boundary: str = "reflect"):
    """One coded blurred frame per full exposure/reset cycle.

    The schedule is resampled to ``E`` samples and the PSFs recomputed with
    the stack's mask and optics.  Cycle ``c`` gets noise seed ``seed + c``.
    Returns ``(blurred (C, H, W, 3), gt (C, 7, H, W, 3), manifest)``.
    """
    f = as_frames(frames)
    e, cyc = timing.exposure_frames, timing.cycle
    count = f.shape[0] // cyc
    if count < 1:
        raise ValueError(f"sequence of {f.shape[0]} frames is shorter than one {timing.label} cycle of {cyc}")
    sched = DefocusSchedule(stack.psi, (-np.inf, np.inf)).resampled(e)
    if e == stack.n and np.array_equal(sched.psi, stack.psi):
        sub = stack
    else:
        cfg = dataclasses.replace(stack.config, time_samples=e)
        sub = psf_stack(stack.mask, cfg, sched.psi)
    local = gt_indices(e)
    blurred, gts, idx = [], [], []
    for c in range(count):
        seg = f[c * cyc:c * cyc + e]
        blurred.append(add_awgn(code_image(seg, sub, boundary), sigma, seed + c))
        gts.append(seg[local])
        idx.append([c * cyc + i for i in local])
    manifest = {
        "scene": scene,
        "schedule_sha256": pio.schedule_sha256(sub.psi),
        "sigma": float(sigma),
        "seed": int(seed),
        "timing": timing.label,
        "gt_indices": idx,
        "files": [f"blurred_{c:03d}.pfm" for c in range(count)],
    }
    return np.stack(blurred), np.stack(gts), manifest


def synthesize_dataset(root, out_root, stack: PSFStack, sigma: float, seed: int, uncoded: bool = False,
                       workers: int = 1) -> list[dict]:
    """Synthesize one sample per scene directory under ``root`` into ``out_root/<scene>``.

    The first ``N`` frames of each scene are used.  Output does not depend on
    ``workers``.
    """
    scenes = discover_scenes(root)
    if not scenes:
        raise IngestionError(f"{root}: no scene directories")

    def one(sid):
        frames = ingest_scene(os.path.join(root, sid), stack.n)[:stack.n]
        b, gt, m = synthesize_sample(frames, stack, sigma, scene_seed(seed, sid), uncoded, sid)
        write_sample(os.path.join(out_root, sid), b, gt, m)
        return m

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(one, scenes))
    return [one(s) for s in scenes]


def reproduce_sample(manifest_path, scene_dir, stack: PSFStack, out_dir) -> dict:
    """Re-run synthesis from a manifest into ``out_dir``; the stack must match the recorded checksum."""
    m = read_manifest(manifest_path)
    if pio.schedule_sha256(stack.psi) != m["schedule_sha256"]:
        raise ValueError("schedule checksum does not match the manifest")
    if m["timing"] not in ("coded", "uncoded"):
        raise ValueError(f"cannot reproduce timing {m['timing']!r} as a single sample")
    frames = ingest_scene(scene_dir, stack.n)[:stack.n]
    b, gt, m2 = synthesize_sample(frames, stack, m["sigma"], m["seed"], m["timing"] == "uncoded", m["scene"])
    write_sample(out_dir, b, gt, m2)
    return m2
