import math

import torch
from torch import nn

from django.test import SimpleTestCase

from core.exceptions import NonFiniteError
from surrogates.optim import build_optimizer, optimizer_step, warmup_cosine


def scalar(value):
    return nn.Parameter(torch.tensor([value], dtype=torch.float64))


class OptimizerStepTests(SimpleTestCase):

    def test_zero_gradient_without_decay_is_a_fixed_point(self):
        theta, z = scalar(1.5), scalar(-0.5)
        state = build_optimizer([("theta", theta)], [("z", z)], lr=0.1,
                                weight_decay=0.0)
        for _ in range(3):
            theta.grad = torch.zeros_like(theta)
            z.grad = torch.zeros_like(z)
            optimizer_step(state)
        self.assertEqual(theta.item(), 1.5)
        self.assertEqual(z.item(), -0.5)

    def test_first_step_matches_hand_computation(self):
        """Test step 1: m = (1-b1) g, v = (1-b2) g^2, bias corrected"""
        theta = scalar(1.0)
        lr, g, eps = 0.01, 0.5, 1e-8
        state = build_optimizer([("theta", theta)], [], lr=lr,
                                weight_decay=0.0)
        theta.grad = torch.tensor([g], dtype=torch.float64)
        optimizer_step(state)
        m_hat = (1 - 0.9) * g / (1 - 0.9)
        v_hat = (1 - 0.999) * g * g / (1 - 0.999)
        expected = 1.0 - lr * m_hat / (math.sqrt(v_hat) + eps)
        self.assertAlmostEqual(theta.item(), expected, places=14)

    def test_decoupled_weight_decay_scales_values(self):
        theta = scalar(2.0)
        lr, decay = 0.1, 0.5
        state = build_optimizer([("theta", theta)], [], lr=lr,
                                weight_decay=decay)
        for _ in range(4):
            theta.grad = torch.zeros_like(theta)
            optimizer_step(state)
        self.assertAlmostEqual(theta.item(), 2.0 * (1 - lr * decay) ** 4,
                               places=14)

    def test_surrogates_use_their_own_rate(self):
        theta, z = scalar(0.0), scalar(0.0)
        state = build_optimizer([("theta", theta)], [("z", z)], lr=0.1,
                                surrogate_lr=0.01, weight_decay=0.0)
        self.assertEqual(state.learning_rates(), [0.1, 0.01])
        theta.grad = torch.ones_like(theta)
        z.grad = torch.ones_like(z)
        optimizer_step(state)
        self.assertAlmostEqual(theta.item(), -0.1, places=6)
        self.assertAlmostEqual(z.item(), -0.01, places=6)

    def test_non_finite_gradient_is_named(self):
        theta = scalar(1.0)
        state = build_optimizer([("set1.head.weight", theta)], [], lr=0.1)
        theta.grad = torch.tensor([math.nan], dtype=torch.float64)
        with self.assertRaises(NonFiniteError) as ctx:
            optimizer_step(state)
        self.assertIn("set1.head.weight", str(ctx.exception))
        self.assertEqual(theta.item(), 1.0)

    def test_step_hook_runs_after_update(self):
        theta = scalar(1.0)
        calls = []
        state = build_optimizer([("theta", theta)], [], lr=0.1,
                                on_step=lambda: calls.append(theta.item()))
        theta.grad = torch.ones_like(theta)
        optimizer_step(state)
        self.assertEqual(len(calls), 1)
        self.assertLess(calls[0], 1.0)
        self.assertEqual(state.step_count, 1)

    def test_frozen_parameters_are_left_out(self):
        theta = scalar(1.0)
        theta.requires_grad_(False)
        with self.assertRaises(ValueError):
            build_optimizer([("theta", theta)], [], lr=0.1)


class ScheduleTests(SimpleTestCase):

    def test_warmup_then_cosine(self):
        factor = warmup_cosine(100, 0.1)
        self.assertAlmostEqual(factor(0), 0.1)
        self.assertAlmostEqual(factor(9), 1.0)
        self.assertAlmostEqual(factor(10), 1.0)
        self.assertAlmostEqual(factor(55), 0.5)
        self.assertAlmostEqual(factor(100), 0.0)

    def test_constant_without_horizon(self):
        self.assertEqual(warmup_cosine(None, 0.1)(1000), 1.0)
