import torch
from torch import nn

from django.test import SimpleTestCase

from distill.config import DistillConfig
from distill.teacher import (
    TeacherState,
    ema_update,
    momentum_schedule,
    teacher_temperature,
    update_center,
)


def scalar_module(value):
    module = nn.Linear(1, 1, bias=False).to(torch.float64)
    with torch.no_grad():
        module.weight.fill_(value)
    return module


def random_pair(seed):
    torch.manual_seed(seed)
    student = nn.Sequential(nn.Linear(5, 7), nn.Linear(7, 3)).double()
    torch.manual_seed(seed + 1000)
    teacher = TeacherState.from_student(
        nn.Sequential(nn.Linear(5, 7), nn.Linear(7, 3)).double(), 3, 0.9
    )
    return student, teacher


class EmaUpdateTests(SimpleTestCase):

    def test_momentum_one_keeps_teacher(self):
        student, teacher = random_pair(0)
        before = [p.clone() for p in teacher.params.parameters()]
        ema_update(teacher, student, 1.0)
        for p, saved in zip(teacher.params.parameters(), before):
            self.assertTrue(torch.equal(p, saved))

    def test_momentum_zero_copies_student(self):
        student, teacher = random_pair(1)
        ema_update(teacher, student, 0.0)
        for p_t, p_s in zip(teacher.params.parameters(),
                            student.parameters()):
            self.assertTrue(torch.equal(p_t, p_s))

    def test_scalar_midpoint(self):
        teacher = TeacherState(scalar_module(2.0), torch.zeros(1), 0.5)
        ema_update(teacher, scalar_module(4.0))
        self.assertEqual(teacher.params.weight.item(), 3.0)

    def test_affine_identity_on_random_tensors(self):
        for seed in range(5):
            student, teacher = random_pair(seed)
            m = 0.3 + 0.1 * seed
            expected = [m * p_t + (1 - m) * p_s for p_t, p_s in zip(
                teacher.params.parameters(), student.parameters()
            )]
            ema_update(teacher, student, m)
            for p, e in zip(teacher.params.parameters(), expected):
                self.assertLessEqual((p - e).abs().max().item(), 1e-15)

    def test_teacher_never_requires_grad(self):
        student, teacher = random_pair(2)
        self.assertTrue(all(not p.requires_grad
                            for p in teacher.params.parameters()))
        self.assertTrue(all(p.requires_grad for p in student.parameters()))

    def test_shape_mismatch_raises(self):
        _, teacher = random_pair(3)
        with self.assertRaises(ValueError):
            ema_update(teacher, nn.Linear(5, 7).double(), 0.5)

    def test_center_follows_teacher_outputs(self):
        teacher = TeacherState(scalar_module(1.0),
                               torch.zeros(2, dtype=torch.float64), 0.9)
        logits = [torch.tensor([[1.0, 3.0]], dtype=torch.float64),
                  torch.tensor([[3.0, 5.0]], dtype=torch.float64)]
        ema_update(teacher, scalar_module(1.0), teacher_logits=logits,
                   center_momentum=0.5)
        self.assertTrue(torch.allclose(
            teacher.center, torch.tensor([1.0, 2.0], dtype=torch.float64)
        ))
        update_center(teacher, logits, 0.5)
        self.assertTrue(torch.allclose(
            teacher.center, torch.tensor([1.5, 3.0], dtype=torch.float64)
        ))


class ScheduleTests(SimpleTestCase):

    def test_momentum_ramps_from_start_to_end(self):
        self.assertAlmostEqual(momentum_schedule(0, 100, 0.996, 1.0), 0.996)
        self.assertAlmostEqual(momentum_schedule(50, 100, 0.996, 1.0), 0.998)
        self.assertAlmostEqual(momentum_schedule(100, 100, 0.996, 1.0), 1.0)

    def test_teacher_temperature_warms_up(self):
        cfg = DistillConfig(warmup_teacher_temp=0.02, teacher_temp=0.06,
                            warmup_teacher_temp_epochs=4)
        self.assertAlmostEqual(teacher_temperature(0, cfg), 0.02)
        self.assertAlmostEqual(teacher_temperature(2, cfg), 0.04)
        self.assertAlmostEqual(teacher_temperature(4, cfg), 0.06)
        self.assertAlmostEqual(teacher_temperature(9, cfg), 0.06)


class DistillConfigTests(SimpleTestCase):

    def test_teacher_temperature_bounded_by_student(self):
        with self.assertRaises(ValueError):
            DistillConfig(student_temp=0.1, teacher_temp=0.2)
        with self.assertRaises(ValueError):
            DistillConfig(teacher_temp=0.0)

    def test_momenta_in_unit_interval(self):
        with self.assertRaises(ValueError):
            DistillConfig(center_momentum=1.5)


class TeacherStateTests(SimpleTestCase):

    def test_teacher_copy_is_frozen_and_independent(self):
        student, _ = random_pair(3)
        teacher = TeacherState.from_student(student, 3, 0.9)
        self.assertFalse(any(p.requires_grad
                             for p in teacher.params.parameters()))
        self.assertTrue(all(p.requires_grad for p in student.parameters()))
        self.assertFalse(callable(teacher))
        self.assertTrue(torch.equal(teacher.center, torch.zeros(3)
                                    .double()))
