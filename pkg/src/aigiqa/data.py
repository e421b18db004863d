"""Dataset manifests, deterministic splits, and image preprocessing.

Both benchmark datasets and synthetic desk-scale fixtures share one plain
CSV ingestion path: `image,mos[,authenticity]` with UTF-8 and dot decimals.
"""

from __future__ import annotations

import csv
import json
import logging
import random
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .errors import (
    DecodeFailure,
    DuplicateRecord,
    EmptySplit,
    MissingColumn,
    OutOfRangeLabel,
    UnreadableImage,
    ZeroRange,
)

logger = logging.getLogger(__name__)

# channel stats published with the pretrained dual-encoder weights
CHANNEL_MEAN = (0.48145466, 0.4578275, 0.40821073)
CHANNEL_STD = (0.26862954, 0.26130258, 0.27577711)


@dataclass(frozen=True)
class DatasetProfile:
    name: str
    label_range: tuple[float, float]
    target_dims: tuple[str, ...]
    expected_records: int | None = None


PROFILES = {
    "agiqa-3k": DatasetProfile("agiqa-3k", (0.0, 5.0), ("quality",), 2982),
    "aigciqa2023": DatasetProfile("aigciqa2023", (0.0, 100.0), ("quality", "authenticity")),
}


@dataclass
class ImageRecord:
    image_path: str
    mos: float
    aux_scores: dict[str, float] = field(default_factory=dict)
    split: str | None = None

    def label(self, dim: str = "quality") -> float:
        if dim == "quality":
            return self.mos
        try:
            return self.aux_scores[dim]
        except KeyError:
            raise KeyError(f"record has no {dim!r} label") from None


@dataclass
class DatasetManifest:
    name: str
    label_range: tuple[float, float]
    records: list[ImageRecord]
    target_dims: tuple[str, ...] = ("quality",)
    normalized: bool = False

    def __len__(self) -> int:
        return len(self.records)

    def split_records(self, split: str) -> list[ImageRecord]:
        return [r for r in self.records if r.split == split]

    @property
    def train_records(self) -> list[ImageRecord]:
        return self.split_records("train")

    @property
    def test_records(self) -> list[ImageRecord]:
        return self.split_records("test")

    def normalize_value(self, value: float) -> float:
        lo, hi = self.label_range
        return (value - lo) / (hi - lo)

    def denormalize_value(self, value: float) -> float:
        lo, hi = self.label_range
        return value * (hi - lo) + lo


def load_manifest(
    path: str | Path,
    profile: str | DatasetProfile = "agiqa-3k",
    validate_images: bool = False,
) -> DatasetManifest:
    """Read and validate a CSV manifest against a dataset profile."""
    if isinstance(profile, str):
        try:
            profile = PROFILES[profile]
        except KeyError:
            raise ValueError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}") from None

    path = Path(path)
    base = path.parent
    lo, hi = profile.label_range
    aux_dims = tuple(d for d in profile.target_dims if d != "quality")

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        columns = reader.fieldnames or []
        for col in ("image", "mos", *aux_dims):
            if col not in columns:
                raise MissingColumn(f"manifest {path.name} lacks required column {col!r}")

        records: list[ImageRecord] = []
        seen: set[str] = set()
        for line_no, row in enumerate(reader, start=2):
            image = row["image"].strip()
            if image in seen:
                raise DuplicateRecord(f"line {line_no}: duplicate image path {image!r}")
            seen.add(image)

            def parse(col: str) -> float:
                cell = row[col]
                if cell is None or cell.strip() == "":
                    raise MissingColumn(f"line {line_no}: empty {col!r} cell")
                value = float(cell)
                if not (lo <= value <= hi):
                    raise OutOfRangeLabel(
                        f"line {line_no}: {col}={value} outside [{lo}, {hi}]"
                    )
                return value

            record = ImageRecord(
                image_path=str((base / image) if not Path(image).is_absolute() else Path(image)),
                mos=parse("mos"),
                aux_scores={d: parse(d) for d in aux_dims},
            )
            if not Path(record.image_path).is_file():
                raise UnreadableImage(f"line {line_no}: missing image file {record.image_path}")
            if validate_images:
                try:
                    with Image.open(record.image_path) as img:
                        img.verify()
                except (UnidentifiedImageError, OSError) as exc:
                    raise UnreadableImage(f"line {line_no}: cannot decode {record.image_path}: {exc}")
            records.append(record)

    if profile.expected_records is not None and len(records) != profile.expected_records:
        logger.warning(
            "%s profile expects %d records, manifest has %d",
            profile.name, profile.expected_records, len(records),
        )
    return DatasetManifest(
        name=profile.name,
        label_range=profile.label_range,
        records=records,
        target_dims=profile.target_dims,
    )


def make_split(manifest: DatasetManifest, ratio: float = 0.8, seed: int = 0) -> DatasetManifest:
    """Deterministic shuffled train/test partition: floor(n*ratio), clamped non-empty."""
    if not (0.0 < ratio < 1.0):
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    n = len(manifest.records)
    if n < 2:
        raise EmptySplit(f"cannot split {n} record(s) into two non-empty sides")
    n_train = min(max(int(n * ratio), 1), n - 1)
    order = list(range(n))
    random.Random(seed).shuffle(order)
    train_idx = set(order[:n_train])
    records = [
        replace(r, split="train" if i in train_idx else "test")
        for i, r in enumerate(manifest.records)
    ]
    return replace(manifest, records=records)


def save_split(manifest: DatasetManifest, path: str | Path, ratio: float, seed: int) -> None:
    """Write the split sidecar: (seed, ratio, train_ids, test_ids) as JSON."""
    payload = {
        "seed": seed,
        "ratio": ratio,
        "train_ids": [r.image_path for r in manifest.train_records],
        "test_ids": [r.image_path for r in manifest.test_records],
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")


def apply_split(manifest: DatasetManifest, path: str | Path) -> DatasetManifest:
    """Assign splits from a sidecar written by `save_split`."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    train = set(payload["train_ids"])
    test = set(payload["test_ids"])
    records = []
    for r in manifest.records:
        if r.image_path in train:
            records.append(replace(r, split="train"))
        elif r.image_path in test:
            records.append(replace(r, split="test"))
        else:
            raise EmptySplit(f"record {r.image_path} missing from split sidecar")
    return replace(manifest, records=records)


def normalize_labels(manifest: DatasetManifest) -> DatasetManifest:
    """Map all labels to [0, 1] by the declared range; range kept for the inverse."""
    lo, hi = manifest.label_range
    if hi == lo:
        raise ZeroRange(f"cannot normalize over the empty range [{lo}, {hi}]")
    if manifest.normalized:
        return manifest
    records = [
        replace(
            r,
            mos=manifest.normalize_value(r.mos),
            aux_scores={k: manifest.normalize_value(v) for k, v in r.aux_scores.items()},
        )
        for r in manifest.records
    ]
    return replace(manifest, records=records, normalized=True)


def preprocess_image(path: str | Path, image_size: int = 224) -> torch.Tensor:
    """Deterministic eval-style preprocessing for the pretrained backbone.

    Resize the shorter side to `image_size` (bicubic), center-crop, scale
    to [0, 1], and normalize with the backbone's published channel stats.
    Grayscale inputs are replicated to three channels. No augmentation.
    """
    try:
        with Image.open(path) as img:
            img = img.convert("RGB")
            w, h = img.size
            scale = image_size / min(w, h)
            new_w = max(image_size, round(w * scale))
            new_h = max(image_size, round(h * scale))
            img = img.resize((new_w, new_h), Image.BICUBIC)
            left = (new_w - image_size) // 2
            top = (new_h - image_size) // 2
            img = img.crop((left, top, left + image_size, top + image_size))
            pixels = np.asarray(img, dtype=np.float32) / 255.0
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeFailure(f"cannot decode image {path}: {exc}") from exc

    mean = np.asarray(CHANNEL_MEAN, dtype=np.float32)
    std = np.asarray(CHANNEL_STD, dtype=np.float32)
    pixels = (pixels - mean) / std
    return torch.from_numpy(pixels.transpose(2, 0, 1).copy())


class ImageCache:
    """Preprocessed-image store; pure function of (path, size), optionally cached."""

    def __init__(self, image_size: int, cache: bool = True):
        self.image_size = image_size
        self._cache: dict[str, torch.Tensor] | None = {} if cache else None

    def get(self, path: str) -> torch.Tensor:
        if self._cache is not None and path in self._cache:
            return self._cache[path]
        tensor = preprocess_image(path, self.image_size)
        if self._cache is not None:
            self._cache[path] = tensor
        return tensor

    def batch(self, records: list[ImageRecord]) -> torch.Tensor:
        return torch.stack([self.get(r.image_path) for r in records])
