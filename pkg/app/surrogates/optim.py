"""
AdamW over model parameters (lr gamma1) and surrogate tables (lr gamma2)
with a linear warm-up followed by cosine decay.
"""
import logging
import math

import torch
from torch.optim.lr_scheduler import LambdaLR

from core.exceptions import NonFiniteError

logger = logging.getLogger(__name__)


def warmup_cosine(total_steps, warmup_fraction):
    """LR multiplier per step; constant 1 when total_steps is None"""
    if total_steps is None:
        return lambda step: 1.0
    warmup = int(round(total_steps * warmup_fraction))

    def factor(step):
        if step < warmup:
            return (step + 1) / warmup
        span = max(1, total_steps - warmup)
        progress = min(1.0, (step - warmup) / span)
        return 0.5 * (1 + math.cos(math.pi * progress))
    return factor


class OptimizerState:
    """Optimizer, schedule and the names of what they update"""

    def __init__(self, optimizer, scheduler, named_params):
        self.optimizer = optimizer
        self.scheduler = scheduler
        self.named_params = named_params

    @property
    def step_count(self):
        return self.scheduler.last_epoch

    def learning_rates(self):
        return [group["lr"] for group in self.optimizer.param_groups]

    def zero_grad(self):
        self.optimizer.zero_grad(set_to_none=True)


def build_optimizer(model_params, surrogate_params, lr, surrogate_lr=None,
                    weight_decay=0.04, surrogate_weight_decay=0.0,
                    total_steps=None, warmup_fraction=0.1, betas=(0.9, 0.999),
                    on_step=None):
    """AdamW with one group for the encoder and one for surrogates.

    Both take ``(name, parameter)`` pairs. ``surrogate_lr`` defaults to
    ``lr``. ``on_step`` runs after every optimizer step.
    """
    model_params = [(n, p) for n, p in model_params if p.requires_grad]
    surrogate_params = [(n, p) for n, p in surrogate_params
                        if p.requires_grad]
    if not model_params and not surrogate_params:
        raise ValueError("Nothing to optimize")
    groups = []
    if model_params:
        groups.append({
            "params": [p for _, p in model_params],
            "lr": lr,
            "weight_decay": weight_decay,
        })
    if surrogate_params:
        groups.append({
            "params": [p for _, p in surrogate_params],
            "lr": lr if surrogate_lr is None else surrogate_lr,
            "weight_decay": surrogate_weight_decay,
        })
    optimizer = torch.optim.AdamW(groups, betas=betas)
    if on_step is not None:
        optimizer.register_step_post_hook(
            lambda opt, args, kwargs: on_step()
        )
    scheduler = LambdaLR(optimizer, warmup_cosine(total_steps,
                                                  warmup_fraction))
    return OptimizerState(optimizer, scheduler,
                          model_params + surrogate_params)


def optimizer_step(state, clip_grad=None):
    """One AdamW update; refuses to apply non-finite gradients"""
    for name, p in state.named_params:
        if p.grad is not None and not torch.isfinite(p.grad).all():
            raise NonFiniteError(f"gradient of {name}")
    if clip_grad:
        torch.nn.utils.clip_grad_norm_(
            [p for _, p in state.named_params], clip_grad
        )
    state.optimizer.step()
    state.scheduler.step()
    state.zero_grad()
    for name, p in state.named_params:
        if not torch.isfinite(p).all():
            raise NonFiniteError(name)
    logger.debug("optimizer step %d, lr %s", state.step_count,
                 state.learning_rates())
