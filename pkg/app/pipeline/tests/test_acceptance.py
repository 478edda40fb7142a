"""
Full desk-scale training runs on the synthetic dataset. Minutes per run, so
they only execute with HCTX_RUN_SLOW=1.
"""
import tempfile
import unittest
from statistics import fmean

import torch

from django.conf import settings
from django.test import SimpleTestCase

from pipeline.cascade import build_cascade
from pipeline.config import RunConfig
from pipeline.reports import evaluate_model
from pipeline.trainer import read_metrics, train


def stage1_epoch_losses(metrics_path):
    by_epoch = {}
    for row in read_metrics(metrics_path):
        if row["stage"] == "1":
            by_epoch.setdefault(int(row["epoch"]), []).append(
                float(row["loss"])
            )
    return [fmean(by_epoch[e]) for e in sorted(by_epoch)]


@unittest.skipUnless(settings.HCTX_RUN_SLOW, "set HCTX_RUN_SLOW=1")
class SyntheticBenchmarkTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        cls.runs = {}
        for name, changes in (
            ("surrogate", {}),
            ("dino", {"supervision": "none"}),
            ("patch", {"stage2_patch_loss": True}),
        ):
            cfg = RunConfig(name=name, output_dir=cls.tmp.name,
                            deterministic=True, **changes)
            result, trainer = train(cfg)
            cls.runs[name] = (cfg, result, evaluate_model(cfg,
                                                          trainer.model))

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()

    def accuracy(self, name):
        return self.runs[name][2].accuracy

    def test_training_beats_random_initialisation(self):
        cfg = self.runs["surrogate"][0]
        torch.manual_seed(cfg.seed)
        untrained = evaluate_model(cfg, build_cascade(cfg).eval())
        self.assertEqual(untrained.episodes, 500)
        self.assertGreaterEqual(self.accuracy("surrogate"),
                                untrained.accuracy + 0.25)

    def test_surrogates_beat_pure_self_distillation(self):
        self.assertGreater(self.accuracy("surrogate"), self.accuracy("dino"))

    def test_class_only_stage2_not_worse_than_patch_variant(self):
        self.assertGreaterEqual(self.accuracy("surrogate"),
                                self.accuracy("patch"))

    def test_stage1_loss_decreases(self):
        losses = stage1_epoch_losses(self.runs["surrogate"][1].metrics_path)
        self.assertEqual(len(losses), 10)
        self.assertLess(losses[-1], losses[0])
