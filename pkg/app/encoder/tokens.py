"""
Containers passed between the patch embedding, the transformer sets and the
pooling layers. All tensors carry a leading batch axis.
"""
from dataclasses import dataclass
from typing import Optional

import torch


@dataclass
class TokenSequence:
    """[cls] token (B, D) plus patch tokens (B, N, D).

    grid_h/grid_w describe the patch layout of a fresh embedding; pooled
    sequences have no grid and leave both as None.
    """
    cls: torch.Tensor
    patches: torch.Tensor
    grid_h: Optional[int] = None
    grid_w: Optional[int] = None

    def __post_init__(self):
        if self.patches.dim() != 3:
            raise ValueError("patches must be (batch, tokens, dim)")
        batch, n, dim = self.patches.shape
        if n < 1 or dim < 1:
            raise ValueError("Token sequence needs N >= 1 and D >= 1")
        if self.cls.shape != (batch, dim):
            raise ValueError(
                f"cls shape {tuple(self.cls.shape)} does not match "
                f"patches {tuple(self.patches.shape)}"
            )
        if (self.grid_h is None) != (self.grid_w is None):
            raise ValueError("grid_h and grid_w must be given together")
        if self.grid_h is not None and self.grid_h * self.grid_w != n:
            raise ValueError(
                f"grid {self.grid_h}x{self.grid_w} does not hold {n} tokens"
            )

    @property
    def num_tokens(self):
        return self.patches.shape[1]

    @property
    def dim(self):
        return self.patches.shape[2]

    @property
    def grid(self):
        if self.grid_h is None:
            return None
        return self.grid_h, self.grid_w


@dataclass
class AttentionRecord:
    """Final-block attention averaged over heads, (B, N+1, N+1)"""
    full: torch.Tensor

    @property
    def cls_row(self):
        """A_c: [cls] to patch attention, renormalised to sum to 1"""
        row = self.full[:, 0, 1:]
        return row / row.sum(dim=-1, keepdim=True)

    @property
    def patch_block(self):
        """A_p: patch to patch attention"""
        return self.full[:, 1:, 1:]


@dataclass
class EncoderOutput:
    f_c: torch.Tensor
    f_p: torch.Tensor
    attention: AttentionRecord
    projection: torch.Tensor
