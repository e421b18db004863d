"""Synthetic desk-scale fixtures: tiny random images plus a labeled manifest.

Lets the whole pipeline run end to end with the stub encoder and no
dataset downloads.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from PIL import Image

from .data import PROFILES, DatasetManifest, load_manifest


def make_synthetic_images(
    directory: str | Path,
    count: int,
    seed: int = 0,
    image_size: int = 32,
) -> list[Path]:
    """Write `count` seeded random RGB PNGs and return their paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(count):
        pixels = rng.integers(0, 256, size=(image_size, image_size, 3), dtype=np.uint8)
        path = directory / f"img_{i:04d}.png"
        Image.fromarray(pixels, mode="RGB").save(path)
        paths.append(path)
    return paths


def write_manifest_csv(
    path: str | Path,
    rows: Sequence[tuple[str, float] | tuple[str, float, float]],
    with_authenticity: bool = False,
) -> Path:
    """Write manifest rows (image, mos[, authenticity]) as CSV."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["image", "mos"] + (["authenticity"] if with_authenticity else [])
        writer.writerow(header)
        for row in rows:
            writer.writerow([row[0], *(repr(float(v)) for v in row[1:])])
    return path


def make_synthetic_dataset(
    directory: str | Path,
    count: int = 16,
    seed: int = 0,
    image_size: int = 32,
    profile: str = "agiqa-3k",
    labeler: Callable[[list[Path]], Sequence[float]] | None = None,
) -> DatasetManifest:
    """Build a tiny on-disk dataset and load it back through the normal path.

    Labels default to seeded uniforms over the profile's range; pass a
    `labeler` to derive them from the generated images instead.
    """
    directory = Path(directory)
    prof = PROFILES[profile]
    images = make_synthetic_images(directory / "images", count, seed, image_size)
    if labeler is not None:
        labels = list(labeler(images))
    else:
        lo, hi = prof.label_range
        rng = np.random.default_rng(seed + 1)
        labels = list(rng.uniform(lo, hi, size=count))
    rows: list[tuple[str, ...]] = []
    aux = len(prof.target_dims) > 1
    if aux:
        rng_aux = np.random.default_rng(seed + 2)
        lo, hi = prof.label_range
        aux_labels = rng_aux.uniform(lo, hi, size=count)
        rows = [
            (str(p.relative_to(directory)), float(l), float(a))
            for p, l, a in zip(images, labels, aux_labels)
        ]
    else:
        rows = [(str(p.relative_to(directory)), float(l)) for p, l in zip(images, labels)]
    manifest_path = write_manifest_csv(directory / "manifest.csv", rows, with_authenticity=aux)
    return load_manifest(manifest_path, profile)
