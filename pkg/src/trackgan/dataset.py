"""Corpus layout, ingestion and deterministic train/test splitting.

On disk a corpus is::

    root/images/<name>.png|jpg
    root/masks/<name>.png        # 0 background, 255 track
    root/tags.csv                # optional rows: <image filename>,<tag>;<tag>

Camera is read from the filename prefix (``front_left_``, ``front_right_``).
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import imaging

log = logging.getLogger(__name__)


class CorpusError(ValueError):
    pass


class ScenarioTag(str, Enum):
    NORMAL = "normal"
    CURVED_ROAD = "curved_road"
    COLOR_IMBALANCE_GREEN = "color_imbalance_green"
    COLOR_IMBALANCE_UNDEREXPOSED = "color_imbalance_underexposed"
    BLURRY = "blurry"
    DAZZLE_LIGHT = "dazzle_light"


class Camera(str, Enum):
    FRONT_LEFT = "front_left"
    FRONT_RIGHT = "front_right"
    SYNTHETIC = "synthetic"


def camera_from_name(name: str) -> Camera:
    for cam in (Camera.FRONT_LEFT, Camera.FRONT_RIGHT):
        if name.startswith(cam.value + "_"):
            return cam
    return Camera.SYNTHETIC


def check_tags(tags: frozenset[ScenarioTag]) -> None:
    if not tags:
        raise CorpusError("a sample needs at least one scenario tag")
    if ScenarioTag.NORMAL in tags and len(tags) > 1:
        raise CorpusError(f"'normal' cannot be combined with other tags: {sorted(t.value for t in tags)}")


@dataclass
class Sample:
    name: str
    image: np.ndarray
    mask: np.ndarray
    camera: Camera = Camera.SYNTHETIC
    tags: frozenset[ScenarioTag] = frozenset({ScenarioTag.NORMAL})

    def __post_init__(self):
        if self.image.shape[:2] != self.mask.shape:
            raise CorpusError(
                f"{self.name}: image {self.image.shape[:2]} and mask {self.mask.shape} differ in size"
            )
        check_tags(self.tags)


@dataclass
class CorpusSplit:
    train: list[Sample]
    test: list[Sample]
    seed: int
    ratio: float
    train_names: list[str] = field(init=False)
    test_names: list[str] = field(init=False)

    def __post_init__(self):
        self.train_names = [s.name for s in self.train]
        self.test_names = [s.name for s in self.test]


def parse_tags(text: str) -> frozenset[ScenarioTag]:
    parts = [p.strip() for p in text.split(";") if p.strip()]
    try:
        return frozenset(ScenarioTag(p) for p in parts)
    except ValueError as exc:
        raise CorpusError(f"unknown scenario tag in {text!r}") from exc


def format_tags(tags: frozenset[ScenarioTag]) -> str:
    return ";".join(sorted(t.value for t in tags))


def read_tags(path: Path) -> dict[str, frozenset[ScenarioTag]]:
    out: dict[str, frozenset[ScenarioTag]] = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "filename":
                continue
            out[row[0]] = parse_tags(row[1] if len(row) > 1 else "")
    return out


def _listing(folder: Path, suffixes: tuple[str, ...]) -> dict[str, Path]:
    found: dict[str, Path] = {}
    for p in sorted(folder.iterdir()):
        if p.is_file() and p.suffix.lower() in suffixes:
            if p.stem in found:
                raise CorpusError(f"duplicate stem {p.stem!r} in {folder}")
            found[p.stem] = p
    return found


def load_corpus(root: str | Path) -> list[Sample]:
    root = Path(root)
    images_dir, masks_dir = root / "images", root / "masks"
    for d in (images_dir, masks_dir):
        if not d.is_dir():
            raise CorpusError(f"missing directory: {d}")
    images = _listing(images_dir, imaging.IMAGE_SUFFIXES)
    masks = _listing(masks_dir, (".png",))

    missing = sorted(images[s].name for s in images if s not in masks)
    if missing:
        shown = ", ".join(missing[:20]) + (" ..." if len(missing) > 20 else "")
        raise CorpusError(f"{len(missing)} image(s) without a mask: {shown}")
    orphans = sorted(masks[s].name for s in masks if s not in images)
    if orphans:
        log.warning("%d mask(s) without an image ignored: %s", len(orphans), ", ".join(orphans[:20]))

    tags = read_tags(root / "tags.csv") if (root / "tags.csv").is_file() else {}
    samples = []
    for stem, ipath in images.items():
        image = imaging.load_image(ipath)
        mask = imaging.load_mask(masks[stem])
        if image.shape[:2] != mask.shape:
            raise CorpusError(f"{ipath.name}: image {image.shape[:2]} vs mask {mask.shape}")
        samples.append(
            Sample(
                name=stem,
                image=image,
                mask=mask,
                camera=camera_from_name(stem),
                tags=tags.get(ipath.name, tags.get(stem, frozenset({ScenarioTag.NORMAL}))),
            )
        )
    return samples


def save_corpus(samples: list[Sample], root: str | Path) -> None:
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    with open(root / "tags.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for s in samples:
            imaging.save_image(root / "images" / f"{s.name}.png", s.image)
            imaging.save_mask(root / "masks" / f"{s.name}.png", s.mask)
            writer.writerow([f"{s.name}.png", format_tags(s.tags)])


def split(samples: list[Sample], ratio: float = 0.8, seed: int = 0) -> CorpusSplit:
    """Seeded shuffle; the first ``floor(ratio * n)`` samples go to training."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    n = len(samples)
    if n == 0:
        raise CorpusError("cannot split an empty corpus")
    # rounding guards values like 0.29 * 100 = 28.999...
    n_train = math.floor(round(ratio * n, 9))
    order = np.random.default_rng(seed).permutation(n)
    return CorpusSplit(
        train=[samples[i] for i in order[:n_train]],
        test=[samples[i] for i in order[n_train:]],
        seed=seed,
        ratio=ratio,
    )
