"""
Learnable per-class attribute surrogates
"""
import torch
from torch import nn

from encoder.model import DTYPE

KINDS = ("class", "patch")
INIT_STD = 0.02


class SurrogateTable(nn.Module):
    """C x D_s descriptors, one row per training class.

    ``class`` tables live in the projection space or the [cls] feature
    space, ``patch`` tables in the encoder's token space.
    """

    def __init__(self, kind, descriptors):
        super().__init__()
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
        if descriptors.dim() != 2:
            raise ValueError("descriptors must be a (classes, dim) matrix")
        self.kind = kind
        self.descriptors = nn.Parameter(descriptors.to(DTYPE))

    @property
    def n_classes(self):
        return self.descriptors.shape[0]

    @property
    def dim(self):
        return self.descriptors.shape[1]

    def rows(self, y):
        """z(y) for a batch of class ids"""
        y = torch.as_tensor(y, dtype=torch.long,
                            device=self.descriptors.device)
        if y.numel() and (y.min() < 0 or y.max() >= self.n_classes):
            raise ValueError(
                f"class id out of range [0, {self.n_classes})"
            )
        return self.descriptors[y]

    def extra_repr(self):
        return f"kind={self.kind}, classes={self.n_classes}, dim={self.dim}"


def init_surrogates(n_classes, dim, generator, kind="class", std=INIT_STD):
    """Gaussian-initialised table, reproducible under ``generator``"""
    if n_classes < 1 or dim < 1:
        raise ValueError("A surrogate table needs C >= 1 and D_s >= 1")
    descriptors = torch.randn(n_classes, dim, generator=generator,
                              dtype=DTYPE) * std
    return SurrogateTable(kind, descriptors)
