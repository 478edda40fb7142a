"""
EMA teacher: a gradient-free copy of a student transformer set plus the
running center of its projections.
"""
import copy
import math

import torch


class TeacherState:

    def __init__(self, params, center, momentum):
        self.params = params
        self.center = center
        self.momentum = momentum
        for p in self.params.parameters():
            p.requires_grad_(False)

    @classmethod
    def from_student(cls, student, out_dim, momentum):
        teacher = copy.deepcopy(student)
        center = torch.zeros(out_dim, dtype=next(student.parameters()).dtype)
        return cls(teacher, center, momentum)


def momentum_schedule(step, total_steps, start, end):
    """Cosine ramp of the EMA momentum from ``start`` to ``end``"""
    if total_steps <= 0:
        return end
    progress = min(1.0, step / total_steps)
    return end - (end - start) * (math.cos(math.pi * progress) + 1) / 2


def teacher_temperature(epoch, cfg):
    """Linear warm-up of the teacher temperature, then constant"""
    if epoch >= cfg.warmup_teacher_temp_epochs:
        return cfg.teacher_temp
    frac = epoch / cfg.warmup_teacher_temp_epochs
    return (cfg.warmup_teacher_temp
            + frac * (cfg.teacher_temp - cfg.warmup_teacher_temp))


@torch.no_grad()
def update_center(teacher, teacher_logits, momentum):
    """center <- m center + (1 - m) mean of this batch's teacher outputs"""
    batch = torch.cat([t.detach() for t in teacher_logits]).mean(dim=0)
    teacher.center = teacher.center * momentum + batch * (1 - momentum)
    return teacher


@torch.no_grad()
def ema_update(teacher, student, momentum=None, teacher_logits=None,
               center_momentum=0.9):
    """theta_t <- m theta_t + (1 - m) theta_s for every parameter"""
    m = teacher.momentum if momentum is None else momentum
    if not 0 <= m <= 1:
        raise ValueError(f"momentum must lie in [0, 1], got {m}")
    student_params = dict(student.named_parameters())
    for name, p_t in teacher.params.named_parameters():
        p_s = student_params.get(name)
        if p_s is None or p_s.shape != p_t.shape:
            raise ValueError(f"Teacher parameter {name} has no match")
        p_t.mul_(m).add_(p_s.detach(), alpha=1 - m)
    teacher.momentum = m
    if teacher_logits is not None:
        update_center(teacher, teacher_logits, center_momentum)
    return teacher
