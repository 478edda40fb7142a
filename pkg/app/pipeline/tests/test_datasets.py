import os
import tempfile

import numpy as np
from PIL import Image
import torch

from django.test import SimpleTestCase

from core.exceptions import DatasetError
from pipeline.datasets import (
    DatasetManifest,
    load_dataset,
    split_tensors,
    synthetic_image,
)


def write_image(path, colour, size=(12, 10)):
    array = np.zeros((size[1], size[0], 3), dtype=np.uint8)
    array[:] = colour
    Image.fromarray(array).save(path)


class SyntheticDatasetTests(SimpleTestCase):

    def test_split_counts(self):
        manifest, _ = load_dataset("synthetic", split=(6, 2, 2),
                                   n_classes=10, per_class=40)
        self.assertEqual(len(manifest.classes), 10)
        self.assertEqual(manifest.counts(),
                         {"base": 6, "validation": 2, "novel": 2})
        self.assertTrue(all(len(manifest.items[c]) == 40
                            for c in manifest.classes))
        novel = set(manifest.classes_in("novel"))
        self.assertFalse(novel & set(manifest.classes_in("base")))

    def test_images_are_seeded_and_in_range(self):
        a = synthetic_image(3, 7, side=16, seed=1)
        b = synthetic_image(3, 7, side=16, seed=1)
        self.assertEqual(a.shape, (3, 16, 16))
        self.assertTrue(torch.equal(a, b))
        self.assertGreaterEqual(a.min().item(), 0.0)
        self.assertLessEqual(a.max().item(), 1.0)
        self.assertFalse(torch.equal(a, synthetic_image(3, 8, side=16,
                                                        seed=1)))

    def test_classes_differ_more_than_their_items(self):
        def mean_image(label, first):
            return torch.stack([synthetic_image(label, i, side=16)
                                for i in range(first, first + 10)]
                               ).mean(dim=0)
        within = (mean_image(0, 0) - mean_image(0, 10)).abs().mean()
        between = (mean_image(0, 0) - mean_image(1, 0)).abs().mean()
        self.assertGreater(between, 2 * within)

    def test_split_tensors_relabel_classes(self):
        manifest, accessor = load_dataset("synthetic", split=(3, 0, 2),
                                          side=8, n_classes=5, per_class=4)
        images, labels = split_tensors(manifest, accessor, "novel")
        self.assertEqual(images.shape, (8, 3, 8, 8))
        self.assertEqual(labels.tolist(), [0] * 4 + [1] * 4)
        with self.assertRaises(DatasetError):
            split_tensors(manifest, accessor, "validation")

    def test_split_must_cover_every_class(self):
        with self.assertRaises(DatasetError):
            load_dataset("synthetic", split=(6, 2, 1), n_classes=10)


class DirectoryDatasetTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def make_class(self, name, colours):
        os.makedirs(os.path.join(self.root, name))
        for i, colour in enumerate(colours):
            write_image(os.path.join(self.root, name, f"{i}.png"), colour)

    def test_two_class_tree(self):
        self.make_class("cat", [(255, 0, 0), (0, 255, 0)])
        self.make_class("dog", [(0, 0, 255)])
        manifest, accessor = load_dataset(self.root, side=8)
        self.assertEqual(manifest.classes, ["cat", "dog"])
        self.assertEqual(manifest.items["cat"], ["0.png", "1.png"])
        image = accessor("dog", "0.png")
        self.assertEqual(image.shape, (3, 8, 8))
        self.assertAlmostEqual(image[2].mean().item(), 1.0)
        self.assertAlmostEqual(image[0].max().item(), 0.0)

    def test_grey_images(self):
        self.make_class("a", [(128, 128, 128)])
        _, accessor = load_dataset(self.root, side=4, channels=1)
        self.assertEqual(accessor("a", "0.png").shape, (1, 4, 4))

    def test_missing_directory_names_path(self):
        missing = os.path.join(self.root, "nowhere")
        with self.assertRaises(DatasetError) as ctx:
            load_dataset(missing)
        self.assertEqual(str(ctx.exception.path), missing)

    def test_empty_class_raises(self):
        self.make_class("full", [(1, 2, 3)])
        os.makedirs(os.path.join(self.root, "empty"))
        with self.assertRaises(DatasetError):
            load_dataset(self.root)

    def test_unreadable_image_raises(self):
        self.make_class("a", [(1, 2, 3)])
        with open(os.path.join(self.root, "a", "bad.png"), "w") as f:
            f.write("not an image")
        _, accessor = load_dataset(self.root)
        with self.assertRaises(DatasetError):
            accessor("a", "bad.png")

    def test_manifest_rejects_empty_class(self):
        with self.assertRaises(DatasetError):
            DatasetManifest(["a"], {"a": []})
