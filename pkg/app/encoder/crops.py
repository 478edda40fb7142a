"""
Multi-crop view generation: two large global crops and m small local crops
per image, each randomly placed, resized and flipped.
"""
from dataclasses import dataclass, field
import math

import torch
import torch.nn.functional as F


@dataclass
class CropConfig:
    global_size: int = 32
    local_size: int = 16
    n_local: int = 2
    global_scale: tuple = (0.4, 1.0)
    local_scale: tuple = (0.05, 0.4)
    flip_prob: float = 0.5

    def __post_init__(self):
        if self.n_local < 0:
            raise ValueError("n_local must be >= 0")
        if self.local_size >= self.global_size:
            raise ValueError("local crops must be smaller than global crops")


@dataclass
class ViewSet:
    """Views of one image (C, S, S) each, or of a batch (B, C, S, S)"""
    globals: list = field(default_factory=list)
    locals: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.globals) != 2:
            raise ValueError(
                f"A view set has exactly 2 global views, got "
                f"{len(self.globals)}"
            )

    @property
    def all_views(self):
        return [*self.globals, *self.locals]

    @property
    def n_local(self):
        return len(self.locals)


def _uniform(generator, low, high):
    u = torch.rand((), generator=generator, dtype=torch.float64).item()
    return low + (high - low) * u


def _randint(generator, high):
    return int(torch.randint(high, (), generator=generator))


def random_resized_crop(image, size, scale, generator, flip_prob=0.5):
    """Crop a random box covering ``scale`` of the area, resize to size"""
    _, h, w = image.shape
    area = h * w
    log_ratio = (math.log(3 / 4), math.log(4 / 3))
    target = _uniform(generator, *scale) * area
    ratio = math.exp(_uniform(generator, *log_ratio))
    crop_w = min(w, max(1, int(round(math.sqrt(target * ratio)))))
    crop_h = min(h, max(1, int(round(math.sqrt(target / ratio)))))
    top = _randint(generator, h - crop_h + 1)
    left = _randint(generator, w - crop_w + 1)
    crop = image[:, top:top + crop_h, left:left + crop_w]
    crop = F.interpolate(
        crop.unsqueeze(0), size=(size, size),
        mode="bilinear", align_corners=False,
    ).squeeze(0)
    if _uniform(generator, 0.0, 1.0) < flip_prob:
        crop = torch.flip(crop, dims=(-1,))
    return crop


def multi_crop(image, generator, config):
    """2 global + ``config.n_local`` local views of one (C, H, W) image"""
    if image.dim() != 3:
        raise ValueError("Expected a single (C, H, W) image")
    _, h, w = image.shape
    if min(h, w) < config.local_size:
        raise ValueError(
            f"Image {h}x{w} is smaller than the local crop "
            f"{config.local_size}"
        )
    globals_ = [
        random_resized_crop(image, config.global_size, config.global_scale,
                            generator, config.flip_prob)
        for _ in range(2)
    ]
    locals_ = [
        random_resized_crop(image, config.local_size, config.local_scale,
                            generator, config.flip_prob)
        for _ in range(config.n_local)
    ]
    return ViewSet(globals_, locals_)


def multi_crop_batch(images, generator, config):
    """Crop every image of a batch and stack the views per position"""
    views = [multi_crop(image, generator, config) for image in images]
    return ViewSet(
        [torch.stack([v.globals[i] for v in views]) for i in range(2)],
        [torch.stack([v.locals[i] for v in views])
         for i in range(config.n_local)],
    )
