import math
import os
import statistics
import tempfile

import torch
import torch.nn.functional as F

from django.test import SimpleTestCase

from fewshot.episodes import FeatureSet, sample_episode
from fewshot.evaluation import (
    EvalReport,
    cosine_classify,
    evaluate,
    format_report,
    write_episode_accuracies,
)


def random_set(classes=8, per_class=20, dim=16, seed=0):
    gen = torch.Generator().manual_seed(seed)
    features = torch.randn(classes * per_class, dim, generator=gen,
                           dtype=torch.float64)
    labels = torch.arange(classes).repeat_interleave(per_class)
    return FeatureSet(features, labels)


def one_hot_set(classes=6, per_class=20):
    labels = torch.arange(classes).repeat_interleave(per_class)
    return FeatureSet(F.one_hot(labels, classes).double(), labels)


class SampleEpisodeTests(SimpleTestCase):

    def test_five_way_one_shot_shapes(self):
        episode = sample_episode(random_set(), 5, 1, 15,
                                 torch.Generator().manual_seed(0))
        self.assertEqual(len(episode.support_index), 5)
        self.assertEqual(len(episode.query_index), 75)
        self.assertEqual(len(set(episode.classes.tolist())), 5)
        self.assertEqual(episode.support.shape, (5, 16))
        self.assertEqual(episode.queries.shape, (75, 16))

    def test_support_and_query_are_disjoint_and_in_class(self):
        dataset = random_set()
        gen = torch.Generator().manual_seed(1)
        for _ in range(20):
            episode = sample_episode(dataset, 5, 5, 10, gen)
            support = set(episode.support_index.tolist())
            self.assertFalse(support & set(episode.query_index.tolist()))
            for idx, local in zip(episode.support_index,
                                  episode.support_labels):
                self.assertEqual(dataset.labels[idx],
                                 episode.classes[local])
            for idx, local in zip(episode.query_index,
                                  episode.query_labels):
                self.assertEqual(dataset.labels[idx],
                                 episode.classes[local])

    def test_only_eligible_classes_are_drawn(self):
        """Test classes short of shot+query items are never picked"""
        labels = torch.tensor([0] * 6 + [1] * 6 + [2] * 2 + [3] * 3)
        dataset = FeatureSet(torch.randn(len(labels), 4,
                                         dtype=torch.float64), labels)
        episode = sample_episode(dataset, 2, 1, 5,
                                 torch.Generator().manual_seed(2))
        self.assertEqual(sorted(episode.classes.tolist()), [0, 1])

    def test_insufficient_data_raises(self):
        with self.assertRaises(ValueError):
            sample_episode(random_set(classes=4), 5, 1, 15,
                           torch.Generator().manual_seed(0))
        with self.assertRaises(ValueError):
            sample_episode(random_set(per_class=10), 5, 1, 15,
                           torch.Generator().manual_seed(0))
        with self.assertRaises(ValueError):
            sample_episode(random_set(), 5, 0, 15,
                           torch.Generator().manual_seed(0))

    def test_same_seed_same_episode(self):
        dataset = random_set()
        a = sample_episode(dataset, 5, 1, 15,
                           torch.Generator().manual_seed(7))
        b = sample_episode(dataset, 5, 1, 15,
                           torch.Generator().manual_seed(7))
        self.assertTrue(torch.equal(a.support_index, b.support_index))
        self.assertTrue(torch.equal(a.query_index, b.query_index))

    def test_mismatched_feature_set_raises(self):
        with self.assertRaises(ValueError):
            FeatureSet(torch.zeros(3, 2), torch.tensor([0, 1]))


def brute_force_predictions(episode):
    protos = []
    for c in range(episode.way):
        rows = [episode.support[i] for i in range(len(episode.support))
                if episode.support_labels[i] == c]
        mean = sum(rows) / len(rows)
        protos.append(mean / mean.norm())
    predictions = []
    for q in episode.queries:
        q = q / q.norm()
        scores = [float(q @ p) for p in protos]
        predictions.append(scores.index(max(scores)))
    return predictions


class CosineClassifyTests(SimpleTestCase):

    def test_queries_equal_to_support_are_recovered(self):
        dataset = random_set()
        episode = sample_episode(dataset, 5, 1, 15,
                                 torch.Generator().manual_seed(0))
        episode.queries = episode.support.clone()
        episode.query_labels = episode.support_labels.clone()
        predictions, accuracy = cosine_classify(episode)
        self.assertEqual(accuracy, 1.0)
        self.assertTrue(torch.equal(predictions, episode.support_labels))

    def test_orthogonal_classes_are_perfect(self):
        episode = sample_episode(one_hot_set(), 5, 5, 15,
                                 torch.Generator().manual_seed(0))
        self.assertEqual(cosine_classify(episode)[1], 1.0)

    def test_matches_brute_force(self):
        dataset = random_set(dim=6)
        gen = torch.Generator().manual_seed(3)
        for _ in range(100):
            episode = sample_episode(dataset, 5, 2, 4, gen)
            predictions, accuracy = cosine_classify(episode)
            expected = brute_force_predictions(episode)
            self.assertEqual(predictions.tolist(), expected)
            hits = sum(p == t for p, t in zip(
                expected, episode.query_labels.tolist()))
            self.assertAlmostEqual(accuracy, hits / len(expected))

    def test_feature_scale_does_not_matter(self):
        dataset = random_set()
        episode = sample_episode(dataset, 5, 3, 5,
                                 torch.Generator().manual_seed(4))
        predictions, _ = cosine_classify(episode)
        episode.support = episode.support * 7.5
        episode.queries = episode.queries * 0.01
        scaled, _ = cosine_classify(episode)
        self.assertTrue(torch.equal(predictions, scaled))

    def test_ties_go_to_lowest_class(self):
        labels = torch.tensor([0, 0, 1, 1])
        features = torch.tensor([[1.0, 0.0], [1.0, 0.0],
                                 [0.0, 1.0], [0.0, 1.0]],
                                dtype=torch.float64)
        episode = sample_episode(FeatureSet(features, labels), 2, 1, 1,
                                 torch.Generator().manual_seed(0))
        episode.queries = torch.tensor([[1.0, 1.0], [1.0, 1.0]],
                                       dtype=torch.float64)
        predictions, _ = cosine_classify(episode)
        self.assertEqual(predictions.tolist(), [0, 0])

    def test_zero_feature_raises(self):
        episode = sample_episode(random_set(), 5, 1, 2,
                                 torch.Generator().manual_seed(0))
        episode.queries[0].zero_()
        with self.assertRaises(ValueError):
            cosine_classify(episode)


class EvaluateTests(SimpleTestCase):

    def test_perfect_extractor(self):
        labels = torch.arange(6).repeat_interleave(20)
        images = F.one_hot(labels, 6).double()
        report = evaluate(lambda x: x, images, labels, 50, 5, 1, 15,
                          torch.Generator().manual_seed(0))
        self.assertEqual(report.accuracy, 1.0)
        self.assertEqual(report.ci95, 0.0)
        self.assertEqual(report.episodes, 50)

    def test_random_features_sit_at_chance(self):
        dataset = random_set(classes=10, per_class=30, dim=32, seed=5)
        report = evaluate(lambda x: x, dataset.features, dataset.labels,
                          1000, 5, 1, 15, torch.Generator().manual_seed(6))
        self.assertLess(abs(report.accuracy - 0.2), 0.03)

    def test_mean_and_interval_by_hand(self):
        accuracies = [0.5, 1.0, 0.75]
        report = EvalReport.from_accuracies(accuracies, 5, 1, 15)
        self.assertAlmostEqual(report.accuracy, 0.75)
        expected = 1.96 * statistics.pstdev(accuracies) / math.sqrt(3)
        self.assertAlmostEqual(report.ci95, expected)
        self.assertAlmostEqual(report.ci95, 0.230988, places=5)

    def test_empty_report_raises(self):
        with self.assertRaises(ValueError):
            EvalReport.from_accuracies([], 5, 1, 15)

    def test_format_report(self):
        report = EvalReport.from_accuracies([0.5, 1.0], 5, 5, 15)
        self.assertEqual(format_report(report),
                         "5-way 5-shot: 75.00% +- 34.65% over 2 episodes")

    def test_episode_accuracies_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "episodes.tsv")
            write_episode_accuracies(path, [0.25, 1.0])
            with open(path) as f:
                lines = f.read().splitlines()
        self.assertEqual(lines, ["episode\taccuracy", "0\t0.250000",
                                 "1\t1.000000"])
