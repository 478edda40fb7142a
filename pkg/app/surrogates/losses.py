"""
Surrogate supervision losses.

Both surrogate losses compare a model distribution with the softmax of the
label's descriptor row and average the two global views. Local views never
reach these losses: the signatures only take a pair of global outputs.
"""
from dataclasses import dataclass

import torch
from torch import nn
import torch.nn.functional as F

from encoder.model import DTYPE
from numerics.probability import kl_divergence_from_logits


@dataclass
class LossWeights:
    alpha: float = 1.0
    beta: float = 0.1

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("Loss weights must be nonnegative")


def _global_pair(views, name):
    if len(views) != 2:
        raise ValueError(f"{name} needs exactly the 2 global views")
    return views


def _check_kind(table, kind):
    if table.kind != kind:
        raise ValueError(f"Expected a {kind} table, got {table.kind}")


def class_surrogate_loss(global_logits, table, y, temperature):
    """1/2 sum_g KL(P_s(x_g) || softmax(z_c(y))), averaged over the batch.

    ``global_logits`` are the student projections of the two global views;
    P_s uses the student temperature.
    """
    _check_kind(table, "class")
    first, second = _global_pair(global_logits, "class surrogate loss")
    target = table.rows(y)
    loss = sum(
        kl_divergence_from_logits(view, target, p_temperature=temperature)
        for view in (first, second)
    )
    return (loss / 2).mean()


def aggregate_patch_tokens(a_c, f_p):
    """F_p = A_c f_p: attention-weighted sum of patch features, (B, D)"""
    if a_c.shape[-1] != f_p.shape[-2] or a_c.shape[:-1] != f_p.shape[:-2]:
        raise ValueError(
            f"cls attention {tuple(a_c.shape)} does not match patch "
            f"features {tuple(f_p.shape)}"
        )
    return torch.einsum("...n,...nd->...d", a_c, f_p)


def patch_surrogate_loss(global_patches, global_cls_attention, table, y):
    """1/2 sum_g KL(softmax(F_p(x_g)) || softmax(z_p(y))), batch mean"""
    _check_kind(table, "patch")
    patches = _global_pair(global_patches, "patch surrogate loss")
    weights = _global_pair(global_cls_attention, "patch surrogate loss")
    target = table.rows(y)
    loss = sum(
        kl_divergence_from_logits(aggregate_patch_tokens(a_c, f_p), target)
        for f_p, a_c in zip(patches, weights)
    )
    return (loss / 2).mean()


class LinearClassifier(nn.Module):
    """Linear head on the projection, for the cross-entropy baseline"""

    def __init__(self, in_dim, n_classes):
        super().__init__()
        self.linear = nn.Linear(in_dim, n_classes).to(DTYPE)
        nn.init.zeros_(self.linear.bias)

    def forward(self, x):
        return self.linear(x)


def cross_entropy_loss(global_logits, classifier, y):
    """One-hot cross entropy of a linear classifier on both global views"""
    first, second = _global_pair(global_logits, "cross entropy loss")
    y = torch.as_tensor(y, dtype=torch.long, device=first.device)
    return sum(
        F.cross_entropy(classifier(view), y) for view in (first, second)
    ) / 2
