"""File formats: PFM (signal space), 8-bit PNG (display space), schedule text, kernel sheets."""

from __future__ import annotations

import hashlib
import math
import os
import re

import numpy as np
from PIL import Image

from .imaging import crf
from .optics import DefocusSchedule


class FormatError(ValueError):
    pass


def write_pfm(path, img: np.ndarray) -> None:
    """Write a float image as little-endian PFM ("PF" for 3 channels, "Pf" for 1), scale -1.0."""
    img = np.asarray(img, dtype=np.float32)
    if img.ndim == 3 and img.shape[2] == 3:
        tag = "PF"
    elif img.ndim == 2 or (img.ndim == 3 and img.shape[2] == 1):
        tag, img = "Pf", img.reshape(img.shape[:2])
    else:
        raise ValueError(f"PFM supports 1 or 3 channels, got shape {img.shape}")
    h, w = img.shape[:2]
    data = np.ascontiguousarray(np.flipud(img)).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(f"{tag}\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        tag = fh.readline().strip()
        if tag not in (b"PF", b"Pf"):
            raise FormatError(f"{path}: not a PFM file")
        dims = fh.readline().split()
        scale = fh.readline().strip()
        try:
            w, h = int(dims[0]), int(dims[1])
            scale = float(scale)
        except (IndexError, ValueError) as exc:
            raise FormatError(f"{path}: malformed PFM header") from exc
        ch = 3 if tag == b"PF" else 1
        dtype = "<f4" if scale < 0 else ">f4"
        buf = fh.read()
    count = w * h * ch
    if len(buf) < 4 * count:
        raise FormatError(f"{path}: truncated PFM data")
    data = np.frombuffer(buf[:4 * count], dtype=dtype).reshape(h, w, ch) if ch == 3 else \
        np.frombuffer(buf[:4 * count], dtype=dtype).reshape(h, w)
    return np.flipud(data).astype(np.float32)


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(np.asarray(img, dtype=float), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path, img: np.ndarray, encode: bool = False) -> None:
    """Write a [0, 1] image as 8-bit PNG; ``encode=True`` applies the forward CRF first."""
    img = np.asarray(img, dtype=float)
    if encode:
        img = crf(img)
    Image.fromarray(to_uint8(img)).save(path, format="PNG")


def read_png(path) -> np.ndarray:
    """8-bit PNG as floats in [0, 1] (gamma space, RGB)."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise FormatError(f"{path}: cannot decode image ({exc})") from exc
    return arr / 255.0


def schedule_text(psi) -> str:
    psi = psi.psi if isinstance(psi, DefocusSchedule) else np.asarray(psi, dtype=float)
    return "".join(f"{float(p)!r}\n" for p in psi)


def schedule_sha256(psi) -> str:
    return hashlib.sha256(schedule_text(psi).encode("utf-8")).hexdigest()


def write_schedule(path, schedule) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(schedule_text(schedule))


def read_schedule(path, n: int | None = None, bounds=(-6.0, 6.0)) -> DefocusSchedule:
    """One real per line; blank lines are ignored.  ``n`` enforces the sample count."""
    values = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            try:
                values.append(float(s))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: not a number: {s!r}") from exc
    if n is not None and len(values) != n:
        raise FormatError(f"{path}: expected {n} schedule values, found {len(values)}")
    return DefocusSchedule(np.array(values), bounds)


_SHORTHAND = re.compile(r"^(linear|constant|periodic|random):([^:]+(?::[^:]+)*)$")
_ARITY = {"linear": (2,), "constant": (1,), "periodic": (2,), "random": (2, 3)}


def parse_schedule(spec: str, n: int, bounds=(-6.0, 6.0)) -> DefocusSchedule:
    """A schedule file path or a shorthand.

    Shorthands: ``linear:a:b``, ``constant:c``, ``periodic:amplitude:cycles``
    and ``random:low:high[:seed]``.
    """
    m = _SHORTHAND.match(spec)
    if m and not os.path.exists(spec):
        kind = m.group(1)
        try:
            args = [float(x) for x in m.group(2).split(":")]
        except ValueError as exc:
            raise ValueError(f"bad schedule shorthand {spec!r}") from exc
        if len(args) not in _ARITY[kind]:
            raise ValueError(f"bad schedule shorthand {spec!r}")
        if kind == "linear":
            return DefocusSchedule.linear(args[0], args[1], n, bounds)
        if kind == "constant":
            return DefocusSchedule.constant(args[0], n, bounds)
        if kind == "periodic":
            return DefocusSchedule.periodic(args[0], args[1], n, bounds)
        seed = int(args[2]) if len(args) == 3 else 0
        return DefocusSchedule.random(args[0], args[1], n, seed, bounds)
    if not os.path.exists(spec):
        raise FileNotFoundError(f"schedule file not found: {spec}")
    return read_schedule(spec, n, bounds)


def stack_to_image(kernels: np.ndarray) -> np.ndarray:
    """(N, 3, k, k) kernels stacked top to bottom into an (N*k, k, 3) image."""
    n, c, k, _ = kernels.shape
    return np.moveaxis(kernels, 1, -1).reshape(n * k, k, c)


def image_to_stack(img: np.ndarray, n: int) -> np.ndarray:
    h, k, c = img.shape
    if h != n * k:
        raise FormatError(f"kernel image of height {h} does not hold {n} kernels of side {k}")
    return np.moveaxis(img.reshape(n, k, k, c), -1, 1)


def contact_sheet(kernels: np.ndarray, columns: int | None = None, gap: int = 2, zoom: int = 4) -> np.ndarray:
    """Grid of kernels in row-major time order, each scaled by its own maximum."""
    n, c, k, _ = kernels.shape
    cols = columns or int(math.ceil(math.sqrt(n)))
    rows = int(math.ceil(n / cols))
    cell = k * zoom
    sheet = np.zeros((rows * cell + (rows + 1) * gap, cols * cell + (cols + 1) * gap, c))
    for i in range(n):
        r, q = divmod(i, cols)
        tile = np.moveaxis(kernels[i], 0, -1)
        tile = tile / max(tile.max(), 1e-300)
        tile = np.kron(tile, np.ones((zoom, zoom, 1)))
        y, x = gap + r * (cell + gap), gap + q * (cell + gap)
        sheet[y:y + cell, x:x + cell] = tile
    return sheet


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
