"""
Probability utilities over the last axis of float64 tensors.

A distribution is any tensor whose last axis is nonnegative and sums to one;
batches of distributions share the leading axes.
"""
import torch

from core.exceptions import NonFiniteError


KL_FLOOR = 1e-12
DISTRIBUTION_ATOL = 1e-9


def _check_logits(v, temperature, name="logits"):
    if v.dim() == 0 or v.shape[-1] == 0:
        raise ValueError(f"{name} must be a non-empty vector")
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if not torch.isfinite(v).all():
        raise NonFiniteError(name)


def check_distribution(p, atol=DISTRIBUTION_ATOL):
    """Raise ValueError unless every row of p is a probability vector"""
    if (p < 0).any():
        raise ValueError("Distribution has negative entries")
    total = p.sum(dim=-1)
    if not torch.allclose(total, torch.ones_like(total), rtol=0, atol=atol):
        raise ValueError("Distribution does not sum to 1")
    return p


def softmax(v, temperature=1.0):
    """exp(v / temperature), normalised over the last axis"""
    _check_logits(v, temperature)
    # torch.softmax subtracts the row max before exponentiating
    return torch.softmax(v / temperature, dim=-1)


def log_softmax(v, temperature=1.0):
    _check_logits(v, temperature)
    return torch.log_softmax(v / temperature, dim=-1)


def kl_divergence(p, q, floor=KL_FLOOR):
    """sum_i p_i ln(p_i / q_i) over the last axis, 0 ln 0 taken as 0.

    q is clamped to ``floor`` so that targets with zero mass stay finite.
    """
    if p.shape != q.shape:
        raise ValueError(
            f"Distribution shapes differ: {tuple(p.shape)} vs {tuple(q.shape)}"
        )
    log_q = torch.log(q.clamp_min(floor))
    return (torch.xlogy(p, p) - p * log_q).sum(dim=-1)


def kl_divergence_from_logits(p_logits, q_logits,
                              p_temperature=1.0, q_temperature=1.0):
    """KL(softmax(p_logits / tp) || softmax(q_logits / tq)) in log space.

    Equal to ``kl_divergence(softmax(p), softmax(q))`` but keeps exact
    gradients when probabilities underflow.
    """
    if p_logits.shape[-1] != q_logits.shape[-1]:
        raise ValueError(
            f"Logit widths differ: {p_logits.shape[-1]} "
            f"vs {q_logits.shape[-1]}"
        )
    log_p = log_softmax(p_logits, p_temperature)
    log_q = log_softmax(q_logits, q_temperature)
    return (log_p.exp() * (log_p - log_q)).sum(dim=-1)


def soft_cross_entropy(target, logits, temperature=1.0):
    """-sum_i target_i log softmax(logits / temperature)_i"""
    if target.shape[-1] != logits.shape[-1]:
        raise ValueError("Target and logits widths differ")
    return -(target * log_softmax(logits, temperature)).sum(dim=-1)
