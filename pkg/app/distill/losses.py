"""
Self-distillation loss over multi-crop views and the two training-stage
objectives built on it.
"""
from dataclasses import dataclass, field
from typing import Optional

import torch

from numerics.probability import soft_cross_entropy, softmax
from surrogates.losses import (
    class_surrogate_loss,
    cross_entropy_loss,
    patch_surrogate_loss,
)


def dino_pair_indices(n_local):
    """(teacher view, student view) pairs; same-view pairs are skipped"""
    return [
        (t, s) for t in range(2) for s in range(2 + n_local) if s != t
    ]


def dino_loss(teacher_logits, student_logits, center, student_temp,
              teacher_temp):
    """Mean cross entropy from centred, sharpened teacher distributions on
    the 2 global views to student distributions on every other view."""
    if len(teacher_logits) != 2:
        raise ValueError(
            f"Teacher sees exactly 2 global views, got {len(teacher_logits)}"
        )
    if len(student_logits) < 2:
        raise ValueError("Student needs at least the 2 global views")
    targets = [
        softmax(t.detach() - center, temperature=teacher_temp)
        for t in teacher_logits
    ]
    pairs = dino_pair_indices(len(student_logits) - 2)
    total = sum(
        soft_cross_entropy(targets[t], student_logits[s],
                           temperature=student_temp).mean()
        for t, s in pairs
    )
    return total / len(pairs)


@dataclass
class StageOutputs:
    """What one training step's forward passes hand to the losses.

    ``student_logits`` holds every view, the two globals first.
    ``global_patches`` and ``global_cls_attention`` are the student's f_p
    and A_c on the two global views, needed only for patch supervision.
    ``global_cls`` holds f_c on the two global views when the class
    surrogates live in the [cls] feature space instead of P(x).
    """
    student_logits: list
    teacher_logits: list
    labels: torch.Tensor
    global_patches: Optional[list] = None
    global_cls_attention: Optional[list] = None
    global_cls: Optional[list] = None

    @property
    def global_logits(self):
        return self.student_logits[:2]

    @property
    def n_local(self):
        return len(self.student_logits) - 2


@dataclass
class LossBreakdown:
    total: torch.Tensor
    dino: torch.Tensor
    components: dict = field(default_factory=dict)

    def __add__(self, other):
        keys = list(dict.fromkeys([*self.components, *other.components]))
        components = {
            key: self.components.get(key, 0) + other.components.get(key, 0)
            for key in keys
        }
        return LossBreakdown(self.total + other.total,
                             self.dino + other.dino, components)

    def as_metrics(self):
        metrics = {"loss": float(self.total), "dino": float(self.dino)}
        metrics.update({k: float(v) for k, v in self.components.items()})
        return metrics


def _dino(outputs, cfg, center, teacher_temp):
    if outputs.n_local != cfg.n_local:
        raise ValueError(
            f"Expected {cfg.n_local} local views, got {outputs.n_local}"
        )
    return dino_loss(
        outputs.teacher_logits, outputs.student_logits, center,
        cfg.student_temp,
        cfg.teacher_temp if teacher_temp is None else teacher_temp,
    )


def _patch_term(outputs, patch_table):
    if outputs.global_patches is None or outputs.global_cls_attention is None:
        raise ValueError("Patch supervision needs global f_p and A_c")
    return patch_surrogate_loss(outputs.global_patches,
                                outputs.global_cls_attention,
                                patch_table, outputs.labels)


def _class_term(outputs, class_table, cfg):
    if outputs.global_cls is not None:
        return class_surrogate_loss(outputs.global_cls, class_table,
                                    outputs.labels, 1.0)
    return class_surrogate_loss(outputs.global_logits, class_table,
                                outputs.labels, cfg.student_temp)


def supervised_loss(outputs, class_table, patch_table, weights, cfg, center,
                    teacher_temp=None):
    """L_DINO + alpha L_cls + beta L_pth"""
    if class_table is None or patch_table is None:
        raise ValueError("Class and patch surrogate tables are both required")
    dino = _dino(outputs, cfg, center, teacher_temp)
    cls = _class_term(outputs, class_table, cfg)
    patch = _patch_term(outputs, patch_table)
    total = dino + weights.alpha * cls + weights.beta * patch
    return LossBreakdown(total, dino, {"cls": cls, "patch": patch})


def stage1_loss(outputs, class_table, patch_table, weights, cfg, center,
                teacher_temp=None):
    """First transformer set: distillation plus both surrogate terms"""
    return supervised_loss(outputs, class_table, patch_table, weights, cfg,
                           center, teacher_temp)


def stage2_loss(outputs, class_table, weights, cfg, center,
                teacher_temp=None, patch_table=None):
    """Pooled transformer sets: only the [cls] token is supervised"""
    if patch_table is not None:
        raise ValueError(
            "Stage 2 supervises only the [cls] token; use "
            "stage2_patch_ablation_loss for patch supervision"
        )
    if class_table is None:
        raise ValueError("A class surrogate table is required")
    dino = _dino(outputs, cfg, center, teacher_temp)
    cls = _class_term(outputs, class_table, cfg)
    return LossBreakdown(dino + weights.alpha * cls, dino, {"cls": cls})


def stage2_patch_ablation_loss(outputs, class_table, patch_table, weights,
                               cfg, center, teacher_temp=None):
    """Stage 2 with the patch term put back, for the ablation run"""
    return supervised_loss(outputs, class_table, patch_table, weights, cfg,
                           center, teacher_temp)


def cross_entropy_stage_loss(outputs, classifier, weights, cfg, center,
                             teacher_temp=None):
    """L_DINO + alpha CE: one-hot labels instead of surrogates"""
    dino = _dino(outputs, cfg, center, teacher_temp)
    ce = cross_entropy_loss(outputs.global_logits, classifier,
                            outputs.labels)
    return LossBreakdown(dino + weights.alpha * ce, dino, {"ce": ce})


def distillation_only_loss(outputs, cfg, center, teacher_temp=None):
    dino = _dino(outputs, cfg, center, teacher_temp)
    return LossBreakdown(dino, dino, {})
