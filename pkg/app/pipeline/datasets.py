"""
Image datasets: a class-per-directory tree read with Pillow, or a
procedural generator whose classes differ in blob position and stripe
texture.
"""
from dataclasses import dataclass, field
import logging
import math
from pathlib import Path

from django.conf import settings
import numpy as np
from PIL import Image, UnidentifiedImageError
import torch

from core.exceptions import DatasetError
from encoder.model import DTYPE

logger = logging.getLogger(__name__)

SPLITS = ("base", "validation", "novel")
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".gif"}
SYNTHETIC = "synthetic"


@dataclass
class DatasetManifest:
    """Class names, the items of every class and the split of every class"""
    classes: list
    items: dict
    splits: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in self.classes:
            if not self.items.get(name):
                raise DatasetError(name, "class has no items")
            if self.splits.setdefault(name, "base") not in SPLITS:
                raise DatasetError(name, f"unknown split {self.splits[name]}")

    def classes_in(self, split):
        return [c for c in self.classes if self.splits[c] == split]

    def counts(self):
        return {s: len(self.classes_in(s)) for s in SPLITS}


def assign_splits(classes, split):
    """First ``split[0]`` classes are base, then validation, then novel"""
    if split is None:
        return {c: "base" for c in classes}
    if sum(split) != len(classes):
        raise DatasetError(
            "SPLIT", f"{sum(split)} classes requested, {len(classes)} found"
        )
    tags = [tag for tag, count in zip(SPLITS, split) for _ in range(count)]
    return dict(zip(classes, tags))


def _grid(side):
    coords = (torch.arange(side, dtype=DTYPE) + 0.5) / side
    return torch.meshgrid(coords, coords, indexing="ij")


def class_signature(label, seed):
    """Blob centre, stripe frequency/angle and tint of one class"""
    gen = torch.Generator().manual_seed(seed * 7919 + label)
    u = torch.rand(6, generator=gen, dtype=DTYPE)
    return {
        "centre": (0.2 + 0.6 * u[0].item(), 0.2 + 0.6 * u[1].item()),
        "frequency": 2.0 + 6.0 * u[2].item(),
        "angle": math.pi * u[3].item(),
        "tint": (u[4].item(), u[5].item()),
    }


def synthetic_image(label, index, side=32, channels=3, seed=0):
    """One (C, side, side) image in [0, 1] of class ``label``"""
    sig = class_signature(label, seed)
    gen = torch.Generator().manual_seed(
        (seed * 1_000_003 + label) * 100_003 + index
    )
    jitter = (torch.rand(4, generator=gen, dtype=DTYPE) - 0.5) * 0.1
    rows, cols = _grid(side)
    cy, cx = sig["centre"][0] + jitter[0], sig["centre"][1] + jitter[1]
    blob = torch.exp(-((rows - cy) ** 2 + (cols - cx) ** 2) / 0.02)
    angle = sig["angle"] + jitter[2]
    phase = 2 * math.pi * jitter[3]
    wave = (rows * torch.cos(angle) + cols * torch.sin(angle))
    stripes = 0.5 + 0.5 * torch.sin(
        2 * math.pi * sig["frequency"] * wave + phase
    )
    noise = torch.rand(channels, side, side, generator=gen, dtype=DTYPE)
    tint = torch.tensor(
        [sig["tint"][i % 2] for i in range(channels)], dtype=DTYPE
    )[:, None, None]
    image = 0.45 * stripes * tint + 0.4 * blob + 0.15 * noise
    return image.clamp(0, 1)


class SyntheticSource:

    def __init__(self, side, channels, seed):
        self.side = side
        self.channels = channels
        self.seed = seed

    def __call__(self, name, index):
        return synthetic_image(int(name), index, self.side, self.channels,
                               self.seed)


def synthetic_dataset(n_classes, per_class, split=None, side=32, channels=3,
                      seed=0):
    """Manifest and image accessor of the procedural dataset"""
    classes = [str(c) for c in range(n_classes)]
    items = {c: list(range(per_class)) for c in classes}
    manifest = DatasetManifest(classes, items, assign_splits(classes, split))
    return manifest, SyntheticSource(side, channels, seed)


def read_image(path, channels=3, side=None):
    """(C, H, W) image in [0, 1]; resized to side x side when given"""
    try:
        with Image.open(path) as img:
            img = img.convert("L" if channels == 1 else "RGB")
            if side is not None:
                img = img.resize((side, side), Image.Resampling.BILINEAR)
            array = np.asarray(img, dtype=np.float64) / 255.0
    except (OSError, UnidentifiedImageError) as e:
        raise DatasetError(path, f"unreadable image ({e})")
    if array.ndim == 2:
        array = array[None]
    else:
        array = array.transpose(2, 0, 1)
    return torch.from_numpy(np.ascontiguousarray(array))


class DirectorySource:
    """Reads, resizes and scales one image file per call"""

    def __init__(self, root, side, channels):
        self.root = Path(root)
        self.side = side
        self.channels = channels

    def __call__(self, name, item):
        return read_image(self.root / name / item, self.channels, self.side)


def directory_dataset(root, split=None, side=32, channels=3):
    """Every sub-directory of ``root`` is a class of image files"""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(root, "no such directory")
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not classes:
        raise DatasetError(root, "no class directories")
    items = {
        c: sorted(p.name for p in (root / c).iterdir()
                  if p.suffix.lower() in IMAGE_SUFFIXES)
        for c in classes
    }
    for c in classes:
        if not items[c]:
            raise DatasetError(root / c, "class has no images")
    manifest = DatasetManifest(classes, items, assign_splits(classes, split))
    logger.info("loaded %d classes from %s", len(classes), root)
    return manifest, DirectorySource(root, side, channels)


def load_dataset(source, split=None, side=32, channels=3, n_classes=10,
                 per_class=40, seed=0):
    """Manifest and accessor for ``source``: a directory or 'synthetic'"""
    if source == SYNTHETIC:
        return synthetic_dataset(n_classes, per_class, split, side,
                                 channels, seed)
    return directory_dataset(source, split, side, channels)


def load_run_dataset(cfg):
    source = cfg.dataset or settings.HCTX_DATA_DIR or SYNTHETIC
    return load_dataset(source, cfg.split, cfg.image_side, cfg.channels,
                        cfg.synth_classes, cfg.synth_per_class, cfg.seed)


def split_tensors(manifest, accessor, split):
    """Stacked images and labels 0..C-1 of the classes in ``split``"""
    classes = manifest.classes_in(split)
    if not classes:
        raise DatasetError(split, "split has no classes")
    images, labels = [], []
    for label, name in enumerate(classes):
        for item in manifest.items[name]:
            images.append(accessor(name, item))
            labels.append(label)
    return torch.stack(images).to(DTYPE), torch.tensor(labels)
