import os
import tempfile

import numpy as np
from PIL import Image
import torch

from django.test import SimpleTestCase

from pooling.render import (
    render_attention_heatmap,
    render_cluster_map,
    save_ppm,
)
from pooling.spectral import ClusterAssignment


class ClusterMapTests(SimpleTestCase):

    def test_singletons_flatten_each_patch(self):
        image = torch.rand(3, 4, 4, dtype=torch.float64)
        out = render_cluster_map(ClusterAssignment.identity(4), image, 2)
        for top, left in [(0, 0), (0, 2), (2, 0), (2, 2)]:
            patch = image[:, top:top + 2, left:left + 2]
            mean = patch.mean(dim=(1, 2))
            block = out[:, top:top + 2, left:left + 2]
            self.assertTrue(torch.allclose(block, mean[:, None, None]
                                           .expand_as(block)))

    def test_single_cluster_is_uniform(self):
        image = torch.rand(3, 4, 6, dtype=torch.float64)
        out = render_cluster_map(ClusterAssignment(np.zeros(6), 1), image, 2)
        expected = image.mean(dim=(1, 2))[:, None, None].expand_as(out)
        self.assertTrue(torch.allclose(out, expected))

    def test_two_tone_image_keeps_its_tones(self):
        """Test planted clusters on a two-tone image give flat regions"""
        image = torch.zeros(3, 2, 4, dtype=torch.float64)
        image[:, :, :2] = torch.tensor([1.0, 0.0, 0.0])[:, None, None]
        image[:, :, 2:] = torch.tensor([0.0, 0.0, 1.0])[:, None, None]
        out = render_cluster_map(ClusterAssignment(np.array([0, 1]), 2),
                                 image, 2)
        self.assertTrue(torch.allclose(out, image))

    def test_pixel_average_oracle(self):
        image = torch.rand(1, 4, 4, dtype=torch.float64,
                           generator=torch.Generator().manual_seed(0))
        assignment = ClusterAssignment(np.array([0, 1, 1, 0]), 2)
        out = render_cluster_map(assignment, image, 2)
        first = torch.cat([image[0, :2, :2].reshape(-1),
                           image[0, 2:, 2:].reshape(-1)]).mean()
        self.assertAlmostEqual(out[0, 0, 0].item(), first.item(), places=12)
        self.assertAlmostEqual(out[0, 3, 3].item(), first.item(), places=12)

    def test_grid_mismatch_raises(self):
        with self.assertRaises(ValueError):
            render_cluster_map(ClusterAssignment.identity(3),
                               torch.rand(3, 4, 4), 2)
        with self.assertRaises(ValueError):
            render_cluster_map(ClusterAssignment.identity(4),
                               torch.rand(3, 5, 4), 2)


class HeatmapTests(SimpleTestCase):

    def test_scaled_to_unit_range(self):
        heat = render_attention_heatmap(
            torch.tensor([0.1, 0.2, 0.3, 0.4]), (2, 2), (8, 8)
        )
        self.assertEqual(heat.shape, (8, 8))
        self.assertAlmostEqual(heat.min().item(), 0.0)
        self.assertAlmostEqual(heat.max().item(), 1.0)
        self.assertTrue(torch.all(heat[:4, :4] == heat[0, 0]))

    def test_flat_attention_is_finite(self):
        heat = render_attention_heatmap(torch.full((4,), 0.25), (2, 2),
                                        (4, 4))
        self.assertTrue(torch.isfinite(heat).all())
        self.assertFalse(heat.any())

    def test_size_mismatch_raises(self):
        with self.assertRaises(ValueError):
            render_attention_heatmap(torch.ones(4), (2, 3), (6, 6))
        with self.assertRaises(ValueError):
            render_attention_heatmap(torch.ones(4), (2, 2), (5, 4))


class SavePpmTests(SimpleTestCase):

    def test_writes_binary_pixmap(self):
        image = torch.zeros(3, 2, 2, dtype=torch.float64)
        image[0] = 1.0
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "map.ppm")
            save_ppm(path, image)
            with open(path, "rb") as f:
                self.assertEqual(f.read(2), b"P6")
            with Image.open(path) as saved:
                self.assertEqual(saved.size, (2, 2))
                self.assertEqual(saved.getpixel((0, 0)), (255, 0, 0))

    def test_grey_maps_are_saved_as_rgb(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "heat.ppm")
            save_ppm(path, torch.full((3, 3), 0.5))
            with Image.open(path) as saved:
                self.assertEqual(saved.mode, "RGB")
                self.assertEqual(saved.getpixel((1, 1)), (128, 128, 128))
