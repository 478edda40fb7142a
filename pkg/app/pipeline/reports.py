"""
Artifacts of a trained checkpoint: few-shot accuracy on the novel split and
pictures of the pooling and the [cls] attention.
"""
import logging
from pathlib import Path

import numpy as np
import torch

from fewshot.evaluation import evaluate, write_episode_accuracies
from pipeline.cascade import build_cascade, extract_features
from pipeline.checkpoint import load_checkpoint, load_into
from pipeline.datasets import load_run_dataset, read_image, split_tensors
from pooling.render import (
    render_attention_heatmap,
    render_cluster_map,
    save_ppm,
)
from pooling.spectral import compose_assignments, dump_assignment

logger = logging.getLogger(__name__)

STUDENT = "student"


def load_model(cfg, path):
    """Cascade of ``cfg`` holding the student weights stored at ``path``"""
    tensors, metadata = load_checkpoint(path)
    model = build_cascade(cfg)
    student = {name: t for name, t in tensors.items()
               if name.startswith(STUDENT + ".")}
    load_into({STUDENT: model}, student)
    model.eval()
    return model, metadata


def evaluate_model(cfg, model, split="novel", accuracies_path=None):
    """Episodic accuracy of set ``cfg.stage_select``'s [cls] features"""
    manifest, accessor = load_run_dataset(cfg)
    images, labels = split_tensors(manifest, accessor, split)
    rng = np.random.default_rng(cfg.seed)

    def extractor(batch):
        return extract_features(model, batch, cfg.stage_select, rng)

    report = evaluate(extractor, images, labels, cfg.episodes, cfg.way,
                      cfg.shot, cfg.query,
                      torch.Generator().manual_seed(cfg.seed))
    if accuracies_path:
        write_episode_accuracies(accuracies_path, report.accuracies)
    return report


def evaluate_checkpoint(cfg, path, accuracies_path=None):
    model, _ = load_model(cfg, path)
    return evaluate_model(cfg, model, accuracies_path=accuracies_path)


def check_image(cfg, image):
    expected = (cfg.channels, cfg.image_side, cfg.image_side)
    if tuple(image.shape) != expected:
        raise ValueError(
            f"Image is {tuple(image.shape)}, the model expects {expected}"
        )
    return image


def default_image(cfg):
    """First image of the novel split"""
    manifest, accessor = load_run_dataset(cfg)
    name = manifest.classes_in("novel")[0]
    return accessor(name, manifest.items[name][0])


def visualize(cfg, model, image, out_dir):
    """Cluster maps after both poolings and the [cls] attention heatmap.

    Returns the written paths.
    """
    image = check_image(cfg, torch.as_tensor(image, dtype=torch.float64))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    with torch.no_grad():
        trace = model(image[None], rng)
    first = trace.assignments[0][0]
    second = compose_assignments(first, trace.assignments[1][0])
    tokens = trace.outputs[0]
    grid = (cfg.image_side // cfg.patch_size,) * 2
    heat = render_attention_heatmap(tokens.attention.cls_row[0], grid,
                                    image.shape[1:])
    written = {
        "input.ppm": image,
        "cluster_map_1.ppm": render_cluster_map(first, image,
                                                cfg.patch_size),
        "cluster_map_2.ppm": render_cluster_map(second, image,
                                                cfg.patch_size),
        "cls_attention.ppm": heat,
    }
    paths = []
    for name, picture in written.items():
        save_ppm(out_dir / name, picture)
        paths.append(out_dir / name)
    for level, assignment in enumerate((first, second), start=1):
        path = out_dir / f"assignment_{level}.txt"
        dump_assignment(path, assignment)
        paths.append(path)
    logger.info("wrote %d visualisation files to %s", len(paths), out_dir)
    return paths


def load_image(cfg, path):
    return check_image(cfg, read_image(path, cfg.channels))
