"""
Pictures of pooling results: cluster maps and [cls] attention heatmaps
"""
import numpy as np
from PIL import Image
import torch


def _pixel_labels(labels, grid, patch_size):
    gh, gw = grid
    label_grid = torch.as_tensor(labels).reshape(gh, gw)
    return (label_grid.repeat_interleave(patch_size, dim=0)
            .repeat_interleave(patch_size, dim=1))


def render_cluster_map(assignment, image, patch_size):
    """Paint every patch of a cluster with the cluster's mean colour.

    ``image`` is (C, H, W); the assignment covers its (H/P) x (W/P) grid.
    """
    image = torch.as_tensor(image)
    if image.dim() != 3:
        raise ValueError("Expected a (C, H, W) image")
    c, h, w = image.shape
    if h % patch_size or w % patch_size:
        raise ValueError(
            f"Image {h}x{w} is not divisible by patch size {patch_size}"
        )
    grid = (h // patch_size, w // patch_size)
    if grid[0] * grid[1] != assignment.n_tokens:
        raise ValueError(
            f"Assignment covers {assignment.n_tokens} tokens, image grid "
            f"is {grid[0]}x{grid[1]}"
        )
    pixels = _pixel_labels(assignment.labels, grid, patch_size).reshape(-1)
    colours = image.reshape(c, -1).T
    sums = colours.new_zeros(assignment.n_clusters, c).index_add_(
        0, pixels, colours
    )
    counts = torch.bincount(pixels, minlength=assignment.n_clusters)
    means = sums / counts.to(sums.dtype)[:, None]
    return means[pixels].T.reshape(c, h, w)


def render_attention_heatmap(a_c, grid, image_size):
    """[cls] attention over the patch grid, min-max scaled to [0, 1] and
    upsampled (nearest) to ``image_size`` = (H, W). Flat attention maps to
    all zeros."""
    a_c = torch.as_tensor(a_c).detach().reshape(-1)
    gh, gw = grid
    h, w = image_size
    if gh * gw != a_c.numel():
        raise ValueError(
            f"Attention row has {a_c.numel()} entries for a {gh}x{gw} grid"
        )
    if h % gh or w % gw:
        raise ValueError(f"Image {h}x{w} is not a multiple of grid {grid}")
    low, high = a_c.min(), a_c.max()
    span = high - low
    if span > 0:
        heat = (a_c - low) / span
    else:
        heat = torch.zeros_like(a_c)
    heat = heat.reshape(gh, gw)
    return (heat.repeat_interleave(h // gh, dim=0)
            .repeat_interleave(w // gw, dim=1))


def to_pixels(image):
    """(C, H, W) or (H, W) floats in [0, 1] -> (H, W, 3) uint8"""
    array = torch.as_tensor(image).detach().cpu().to(torch.float64)
    if array.dim() == 2:
        array = array.unsqueeze(0)
    if array.shape[0] == 1:
        array = array.expand(3, -1, -1)
    if array.shape[0] != 3:
        raise ValueError("Only grey or RGB images can be saved")
    scaled = (array.clamp(0, 1) * 255).round().to(torch.uint8)
    return np.ascontiguousarray(scaled.permute(1, 2, 0).numpy())


def save_ppm(path, image):
    """Write a binary (P6) portable pixmap"""
    Image.fromarray(to_pixels(image)).save(path, format="PPM")
