"""
Two-stage training driver.

Stage 1 trains the first transformer set (or the first two, with
``STAGE1_SETS=2``). Stage 2 freezes them and trains the remaining sets,
jointly or one after another. Every trained set has its own EMA teacher,
projection center and class surrogate table.
"""
from contextlib import contextmanager
from dataclasses import dataclass
import logging
import math
import os
from pathlib import Path

from django.conf import settings
import numpy as np
import torch
from torch import nn

from core.exceptions import NonFiniteError
from distill.losses import (
    StageOutputs,
    cross_entropy_stage_loss,
    distillation_only_loss,
    stage1_loss,
    stage2_loss,
    stage2_patch_ablation_loss,
)
from distill.teacher import (
    TeacherState,
    ema_update,
    momentum_schedule,
    teacher_temperature,
)
from encoder.crops import multi_crop_batch
from encoder.model import set_requires_grad
from pipeline.cascade import build_cascade
from pipeline.checkpoint import (
    load_checkpoint,
    load_into,
    module_tensors,
    save_checkpoint,
)
from pipeline.config import config_dict
from pipeline.datasets import load_run_dataset, split_tensors
from surrogates.losses import LinearClassifier, LossWeights
from surrogates.optim import build_optimizer, optimizer_step
from surrogates.tables import init_surrogates

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ("stage", "phase", "epoch", "step", "loss", "dino", "cls",
                  "patch", "ce", "lr_model", "lr_surrogate")


class SurrogateBank(nn.Module):
    """Label-side parameters of every transformer set.

    One class table per set. Patch tables for set 1, and for the pooled
    sets when their patch tokens are supervised too. Linear classifiers
    replace the class tables under cross-entropy supervision.
    """

    def __init__(self, n_classes, out_dim, dims, generator,
                 supervision="surrogate", patch_sets=(0,), class_dims=None):
        super().__init__()
        self.supervision = supervision
        class_dims = class_dims or [out_dim] * len(dims)
        self.class_tables = nn.ModuleList(
            init_surrogates(n_classes, d, generator) for d in class_dims
        )
        self.patch_tables = nn.ModuleDict({
            str(k): init_surrogates(n_classes, dims[k], generator,
                                    kind="patch")
            for k in patch_sets
        })
        self.classifiers = nn.ModuleList(
            LinearClassifier(out_dim, n_classes) for _ in dims
        ) if supervision == "ce" else None

    def patch_table(self, k):
        return self.patch_tables[str(k)] if str(k) in self.patch_tables \
            else None

    def named_for(self, k):
        """``(name, parameter)`` pairs used by set ``k``'s loss"""
        modules = {f"class_tables.{k}": self.class_tables[k]}
        if self.patch_table(k) is not None:
            modules[f"patch_tables.{k}"] = self.patch_table(k)
        if self.classifiers is not None:
            modules = {f"classifiers.{k}": self.classifiers[k]}
        return [(f"{prefix}.{name}", p)
                for prefix, module in modules.items()
                for name, p in module.named_parameters()]


def build_bank(cfg, n_classes):
    generator = torch.Generator().manual_seed(cfg.seed + 1)
    patch_sets = (0, 1, 2) if cfg.stage2_patch_loss else (0,)
    class_dims = cfg.dims if cfg.surrogate_space == "cls" else None
    return SurrogateBank(n_classes, cfg.out_dim, cfg.dims, generator,
                         cfg.supervision, patch_sets, class_dims)


def training_phases(cfg):
    """(stage, sets trained together, epochs) in execution order"""
    first = tuple(range(cfg.stage1_sets))
    rest = tuple(range(cfg.stage1_sets, len(cfg.dims)))
    phases = [(1, first, cfg.stage1_epochs)]
    if cfg.stage2_mode == "end_to_end":
        phases.append((2, rest, cfg.stage2_epochs))
    else:
        phases += [(2, (k,), cfg.stage2_epochs) for k in rest]
    return phases


def set_loss(cfg, bank, k, views, teacher_logits, labels, center,
             teacher_temp):
    """Loss of transformer set ``k`` given its outputs on every view"""
    outputs = StageOutputs(
        [o.projection for o in views],
        teacher_logits,
        labels,
        [o.f_p for o in views[:2]],
        [o.attention.cls_row for o in views[:2]],
        [o.f_c for o in views[:2]] if cfg.surrogate_space == "cls"
        else None,
    )
    weights = LossWeights(cfg.alpha, cfg.beta)
    dcfg = cfg.distill_config()
    if cfg.supervision == "none":
        return distillation_only_loss(outputs, dcfg, center, teacher_temp)
    if cfg.supervision == "ce":
        return cross_entropy_stage_loss(outputs, bank.classifiers[k],
                                        weights, dcfg, center, teacher_temp)
    if k == 0:
        return stage1_loss(outputs, bank.class_tables[0], bank.patch_table(0),
                           weights, dcfg, center, teacher_temp)
    if cfg.stage2_patch_loss:
        return stage2_patch_ablation_loss(
            outputs, bank.class_tables[k], bank.patch_table(k), weights,
            dcfg, center, teacher_temp,
        )
    return stage2_loss(outputs, bank.class_tables[k], weights, dcfg, center,
                       teacher_temp)


class MetricsLog:
    """Tab-separated metrics, one row per optimizer step.

    Columns are ``METRIC_COLUMNS``; loss terms a step does not compute
    are left empty.
    """

    def __init__(self, path, append=False):
        self.path = Path(path)
        if append and self.path.exists():
            return
        with open(self.path, "w") as f:
            f.write("\t".join(METRIC_COLUMNS) + "\n")

    def write(self, row):
        cells = []
        for column in METRIC_COLUMNS:
            value = row.get(column, "")
            cells.append(f"{value:.10g}" if isinstance(value, float)
                         else str(value))
        with open(self.path, "a") as f:
            f.write("\t".join(cells) + "\n")


def read_metrics(path):
    with open(path) as f:
        lines = f.read().splitlines()
    columns = lines[0].split("\t")
    return [dict(zip(columns, line.split("\t"))) for line in lines[1:]]


@dataclass
class TrainResult:
    checkpoints: dict
    metrics_path: Path
    final_loss: float
    steps: int


@contextmanager
def deterministic_mode(enabled):
    """Deterministic kernels on one thread inside the block; the previous
    settings are restored on exit"""
    if not enabled:
        yield
        return
    was_deterministic = torch.are_deterministic_algorithms_enabled()
    threads = torch.get_num_threads()
    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(1)
    try:
        yield
    finally:
        torch.use_deterministic_algorithms(was_deterministic)
        torch.set_num_threads(threads)


class Trainer:

    def __init__(self, cfg, images, labels, n_classes, run_dir):
        self.cfg = cfg
        self.images = images
        self.labels = labels
        self.run_dir = Path(run_dir)
        torch.manual_seed(cfg.seed)
        self.model = build_cascade(cfg)
        self.bank = build_bank(cfg, n_classes)
        self.generator = torch.Generator().manual_seed(cfg.seed + 2)
        self.rng = np.random.default_rng(cfg.seed + 3)
        self.crop_cfg = cfg.crop_config()
        self.dcfg = cfg.distill_config()
        self.final_loss = math.nan
        self.steps = 0

    def checkpoint_path(self, stage):
        return self.run_dir / f"stage{stage}.ckpt"

    def save(self, stage, epoch):
        tensors = module_tensors("student", self.model)
        tensors.update(module_tensors("surrogates", self.bank))
        save_checkpoint(self.checkpoint_path(stage), tensors, {
            "config": config_dict(self.cfg),
            "stage": stage,
            "epoch": epoch,
        })

    def resume(self, path):
        """Continue from a checkpoint written by ``save``"""
        tensors, metadata = load_checkpoint(path)
        load_into({"student": self.model, "surrogates": self.bank}, tensors)
        logger.info("resumed from %s (stage %s)", path,
                    metadata.get("stage"))

    def batches(self):
        order = torch.randperm(len(self.images), generator=self.generator)
        for i in range(0, len(order), self.cfg.batch_size):
            yield order[i:i + self.cfg.batch_size]

    def forward_step(self, trained, teachers, idx, temp):
        """Sum of the trained sets' losses on one batch"""
        depth = max(trained) + 1
        frozen = min(trained)
        views = multi_crop_batch(self.images[idx], self.generator,
                                 self.crop_cfg)
        student = []
        for view in views.all_views:
            start = None
            if frozen:
                with torch.no_grad():
                    start = self.model(view, self.rng, depth=frozen)
            student.append(self.model(view, self.rng, depth=depth,
                                      start=start))
        teacher_sets = [
            teachers[k].params if k in teachers else s
            for k, s in enumerate(self.model.sets)
        ]
        with torch.no_grad():
            teacher = [
                self.model(view, self.rng, depth=depth, sets=teacher_sets,
                           start=student[i].prefix(frozen) if frozen
                           else None)
                for i, view in enumerate(views.globals)
            ]
        total, teacher_logits = None, {}
        for k in trained:
            teacher_logits[k] = [t.outputs[k].projection for t in teacher]
            loss = set_loss(self.cfg, self.bank, k,
                            [s.outputs[k] for s in student],
                            teacher_logits[k], self.labels[idx],
                            teachers[k].center, temp)
            total = loss if total is None else total + loss
        return total, teacher_logits

    def run_phase(self, stage, phase, trained, epochs, log):
        set_requires_grad(self.model, False)
        for k in trained:
            set_requires_grad(self.model.sets[k], True)
        teachers = {
            k: TeacherState.from_student(self.model.sets[k],
                                         self.cfg.out_dim,
                                         self.cfg.momentum_start)
            for k in trained
        }
        steps_per_epoch = math.ceil(len(self.images) / self.cfg.batch_size)
        total_steps = max(1, epochs * steps_per_epoch)
        model_params = [
            (f"sets.{k}.{name}", p) for k in trained
            for name, p in self.model.sets[k].named_parameters()
        ]
        surrogate_params = [pair for k in trained
                            for pair in self.bank.named_for(k)]
        state = build_optimizer(
            model_params, surrogate_params, self.cfg.lr,
            surrogate_lr=self.cfg.surrogate_rate(),
            weight_decay=self.cfg.weight_decay,
            total_steps=total_steps,
            warmup_fraction=self.cfg.warmup_fraction,
            on_step=lambda: [self.model.sets[k].bump_generation()
                             for k in trained],
        )
        self.save(stage, 0)
        step = 0
        for epoch in range(epochs):
            temp = teacher_temperature(epoch, self.dcfg)
            for idx in self.batches():
                loss, teacher_logits = self.forward_step(trained, teachers,
                                                         idx, temp)
                if not torch.isfinite(loss.total):
                    raise NonFiniteError(f"stage {stage} loss")
                loss.total.backward()
                optimizer_step(state, self.cfg.clip_grad or None)
                step += 1
                m = momentum_schedule(step, total_steps,
                                      self.cfg.momentum_start,
                                      self.cfg.momentum_end)
                for k in trained:
                    ema_update(teachers[k], self.model.sets[k], m,
                               teacher_logits[k], self.cfg.center_momentum)
                rates = state.learning_rates()
                log.write({
                    "stage": stage, "phase": phase, "epoch": epoch,
                    "step": step, **loss.as_metrics(),
                    "lr_model": rates[0], "lr_surrogate": rates[-1],
                })
                self.final_loss = float(loss.total)
                self.steps += 1
            self.save(stage, epoch + 1)
            logger.info("stage %d phase %d epoch %d/%d loss %.4f", stage,
                        phase, epoch + 1, epochs, self.final_loss)
        set_requires_grad(self.model, False)

    def train(self, stages=(1, 2)):
        """Run the phases of ``stages``; a non-finite loss stops training
        with the last completed epoch's checkpoint on disk."""
        self.run_dir.mkdir(parents=True, exist_ok=True)
        log = MetricsLog(self.run_dir / "metrics.tsv",
                         append=1 not in stages)
        for phase, (stage, trained, epochs) in enumerate(
                training_phases(self.cfg)):
            if stage in stages:
                self.run_phase(stage, phase, trained, epochs, log)
        return TrainResult(
            {stage: self.checkpoint_path(stage) for stage in stages},
            log.path, self.final_loss, self.steps,
        )


def run_dir(cfg):
    root = cfg.output_dir or settings.HCTX_OUTPUT_DIR
    return Path(root) / cfg.name


def train(cfg, stages=(1, 2)):
    """Load the base split of ``cfg``'s dataset and train on it"""
    manifest, accessor = load_run_dataset(cfg)
    images, labels = split_tensors(manifest, accessor, "base")
    logger.info("training on %d images of %d classes", len(images),
                int(labels.max()) + 1)
    with deterministic_mode(cfg.deterministic):
        trainer = Trainer(cfg, images, labels, int(labels.max()) + 1,
                          run_dir(cfg))
        if 1 not in stages:
            trainer.resume(stage_checkpoint(cfg, 1))
        return trainer.train(stages), trainer


def stage_checkpoint(cfg, stage):
    return os.fspath(run_dir(cfg) / f"stage{stage}.ckpt")
