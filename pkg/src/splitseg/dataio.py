"""Synthetic scene generation and dataset files (PPM images, PGM label maps)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .model import SegmentationMap


def class_palette(num_classes: int) -> np.ndarray:
    """Deterministic base color per class, uint8 (K, 3)."""
    k = np.arange(num_classes)
    r = (40 + 97 * k) % 256
    g = (90 + 61 * k) % 256
    b = (160 + 151 * k) % 256
    return np.stack([r, g, b], axis=1).astype(np.uint8)


def _paint_region(labels: np.ndarray, rng: np.random.Generator, num_classes: int) -> None:
    h, w = labels.shape
    cls = int(rng.integers(num_classes))
    cy = int(rng.integers(h))
    cx = int(rng.integers(w))
    ry = int(rng.integers(max(h // 8, 2), max(h // 3, h // 8 + 1)))
    rx = int(rng.integers(max(w // 8, 2), max(w // 3, w // 8 + 1)))
    if rng.integers(2) == 0:
        y0, y1 = max(cy - ry, 0), min(cy + ry, h)
        x0, x1 = max(cx - rx, 0), min(cx + rx, w)
        labels[y0:y1, x0:x1] = cls
    else:
        yy, xx = np.ogrid[:h, :w]
        mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        labels[mask] = cls


def generate_synthetic(
    n: int, num_classes: int, height: int, width: int, seed: int, noise_sigma: float = 8.0,
) -> list[tuple[np.ndarray, SegmentationMap]]:
    """Generate n (RGB raster, ground-truth map) pairs.

    Each scene is a background class plus 3-8 axis-aligned rectangles or
    ellipses; the class of a region fixes its base color, and Gaussian pixel
    noise is added on top. Every map contains at least two distinct classes.
    Deterministic for a fixed (seed, n, dims).
    """
    if num_classes < 2:
        raise ValueError(f"need at least 2 classes, got {num_classes}")
    palette = class_palette(num_classes)
    out = []
    for i in range(n):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(0, i))))
        background = int(rng.integers(num_classes))
        labels = np.full((height, width), background, dtype=np.int32)
        for _ in range(int(rng.integers(3, 9))):
            _paint_region(labels, rng, num_classes)
        if np.unique(labels).size < 2:
            labels[: height // 4, : width // 4] = (background + 1) % num_classes
        img = palette[labels].astype(np.float64) + rng.normal(0.0, noise_sigma, (height, width, 3))
        raster = np.clip(np.rint(img), 0, 255).astype(np.uint8)
        out.append((raster, SegmentationMap(labels)))
    return out


def raster_to_tensor(raster: np.ndarray) -> np.ndarray:
    """uint8 (H, W, 3) raster to float32 (3, H, W) tensor in [0, 1]."""
    return np.ascontiguousarray(raster.transpose(2, 0, 1).astype(np.float32) / np.float32(255.0))


def save_ppm(path, raster: np.ndarray) -> None:
    r = np.asarray(raster)
    if r.dtype != np.uint8 or r.ndim != 3 or r.shape[2] != 3:
        raise ValueError(f"raster must be uint8 (H, W, 3), got {r.dtype} {r.shape}")
    h, w = r.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(r).tobytes())


def save_pgm(path, labels: np.ndarray) -> None:
    a = np.asarray(labels)
    if a.ndim != 2 or a.min() < 0 or a.max() > 255:
        raise ValueError("labels must be a 2-D array of values in [0, 255]")
    h, w = a.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(a.astype(np.uint8).tobytes())


def _read_pnm_header(f, magic: bytes) -> tuple[int, int]:
    if f.read(2) != magic:
        raise ValueError(f"not a {magic.decode()} file")
    fields = []
    while len(fields) < 3:
        tok = b""
        ch = f.read(1)
        while ch.isspace():
            ch = f.read(1)
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = f.read(1)
            continue
        while ch and not ch.isspace():
            tok += ch
            ch = f.read(1)
        if not tok:
            raise ValueError("truncated header")
        fields.append(int(tok))
    w, h, maxval = fields
    if maxval != 255:
        raise ValueError(f"only 8-bit files supported, maxval={maxval}")
    return w, h


def load_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        w, h = _read_pnm_header(f, b"P6")
        data = f.read(w * h * 3)
    if len(data) != w * h * 3:
        raise ValueError(f"truncated pixel data in {path}")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3).copy()


def load_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        w, h = _read_pnm_header(f, b"P5")
        data = f.read(w * h)
    if len(data) != w * h:
        raise ValueError(f"truncated pixel data in {path}")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w).astype(np.int32).copy()


def write_dataset(dirpath, pairs) -> list[str]:
    """Write (raster, map) pairs as img_NNNN.ppm / img_NNNN.pgm files."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    for i, (raster, seg) in enumerate(pairs):
        ppm = d / f"img_{i:04d}.ppm"
        pgm = d / f"img_{i:04d}.pgm"
        save_ppm(ppm, raster)
        save_pgm(pgm, seg.labels)
        written += [str(ppm), str(pgm)]
    return written


def load_dataset_dir(dirpath) -> list[tuple[np.ndarray, SegmentationMap]]:
    """Load every .ppm with its .pgm sibling; report all broken files at once."""
    d = Path(dirpath)
    if not d.is_dir():
        raise FileNotFoundError(str(d))
    ppms = sorted(d.glob("*.ppm"))
    if not ppms:
        raise ValueError(f"no .ppm files in {d}")
    pairs = []
    problems = []
    for ppm in ppms:
        pgm = ppm.with_suffix(".pgm")
        try:
            raster = load_ppm(ppm)
            if not pgm.exists():
                raise ValueError(f"missing label map {pgm.name}")
            labels = load_pgm(pgm)
            if labels.shape != raster.shape[:2]:
                raise ValueError(f"label map {pgm.name} dims {labels.shape} != image {raster.shape[:2]}")
            pairs.append((raster, SegmentationMap(labels)))
        except (OSError, ValueError) as exc:
            problems.append(f"{ppm.name}: {exc}")
    if problems:
        raise ValueError("dataset load failed:\n  " + "\n  ".join(problems))
    return pairs
