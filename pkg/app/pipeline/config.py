"""
Run configuration.

Every key of ``RunConfig`` can be set, from lowest to highest precedence,
by its default, by a ``KEY=value`` line in a config file, by the
``HCTX_<KEY>`` environment variable, or by a command-line flag.
"""
from dataclasses import dataclass, field, fields
import os

from dotenv import dotenv_values

from core.exceptions import ConfigError
from distill.config import DistillConfig
from encoder.crops import CropConfig
from pooling.spectral import BACKWARD_MODES

ENV_PREFIX = "HCTX_"
SUPERVISION_MODES = ("surrogate", "ce", "none")
STAGE2_MODES = ("end_to_end", "one_by_one")
SURROGATE_SPACES = ("projection", "cls")
N_SETS = 3

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off", ""}


def key(doc, item=None):
    """Field metadata: a one-line description and, for lists, item type"""
    return {"doc": doc, "item": item}


@dataclass(frozen=True)
class RunConfig:
    name: str = field(default="hctx", metadata=key(
        "run name, also the output sub-directory"))
    dataset: str = field(default="", metadata=key(
        "class-per-directory image tree, or 'synthetic'; empty uses "
        "HCTX_DATA_DIR, then 'synthetic'"))
    synth_classes: int = field(default=10, metadata=key(
        "synthetic dataset: number of classes"))
    synth_per_class: int = field(default=40, metadata=key(
        "synthetic dataset: images per class"))
    split: tuple = field(default=(5, 0, 5), metadata=key(
        "base,validation,novel class counts", int))
    image_side: int = field(default=32, metadata=key(
        "global view side in pixels"))
    channels: int = field(default=3, metadata=key("image channels"))
    patch_size: int = field(default=4, metadata=key("patch side P"))
    dims: tuple = field(default=(32, 32, 32), metadata=key(
        "token width of each transformer set", int))
    depths: tuple = field(default=(2, 1, 1), metadata=key(
        "attention blocks in each transformer set", int))
    heads: int = field(default=4, metadata=key("attention heads"))
    mlp_ratio: float = field(default=2.0, metadata=key(
        "MLP hidden width over token width"))
    out_dim: int = field(default=128, metadata=key(
        "projection width D'"))
    head_hidden: int = field(default=64, metadata=key(
        "projection head hidden width"))
    head_bottleneck: int = field(default=32, metadata=key(
        "projection head bottleneck width"))
    pool_schedule: tuple = field(default=(64, 32, 16), metadata=key(
        "tokens entering each set for a global view", int))
    pool_backward: str = field(default="copy", metadata=key(
        "pooling gradient rule: copy or adjoint"))
    pool_restarts: int = field(default=20, metadata=key(
        "k-means restarts per pooling"))
    pool_iterations: int = field(default=100, metadata=key(
        "k-means iterations per restart"))
    alpha: float = field(default=1.0, metadata=key(
        "weight of the class surrogate (or CE) loss"))
    beta: float = field(default=0.1, metadata=key(
        "weight of the patch surrogate loss"))
    supervision: str = field(default="surrogate", metadata=key(
        "label supervision: surrogate, ce or none"))
    surrogate_space: str = field(default="projection", metadata=key(
        "class surrogates match the projection or the [cls] feature"))
    stage1_sets: int = field(default=1, metadata=key(
        "transformer sets trained in stage 1 (1 or 2)"))
    stage2_mode: str = field(default="end_to_end", metadata=key(
        "stage 2 schedule: end_to_end or one_by_one"))
    stage2_patch_loss: bool = field(default=False, metadata=key(
        "also supervise pooled patch tokens in stage 2"))
    n_local: int = field(default=2, metadata=key("local views per image"))
    local_side: int = field(default=16, metadata=key(
        "local view side in pixels"))
    global_scale: tuple = field(default=(0.4, 1.0), metadata=key(
        "area fraction range of global crops", float))
    local_scale: tuple = field(default=(0.05, 0.4), metadata=key(
        "area fraction range of local crops", float))
    flip_prob: float = field(default=0.5, metadata=key(
        "horizontal flip probability"))
    batch_size: int = field(default=16, metadata=key("images per step"))
    lr: float = field(default=1e-3, metadata=key(
        "peak learning rate of the encoder"))
    surrogate_lr: float = field(default=0.0, metadata=key(
        "peak learning rate of surrogates and classifiers, 0 follows LR"))
    weight_decay: float = field(default=0.04, metadata=key(
        "AdamW weight decay of the encoder"))
    warmup_fraction: float = field(default=0.1, metadata=key(
        "share of steps with linear learning-rate warm-up"))
    clip_grad: float = field(default=3.0, metadata=key(
        "gradient norm clip, 0 disables"))
    student_temp: float = field(default=0.1, metadata=key(
        "student softmax temperature"))
    teacher_temp: float = field(default=0.04, metadata=key(
        "teacher softmax temperature"))
    warmup_teacher_temp: float = field(default=0.04, metadata=key(
        "teacher temperature at epoch 0"))
    warmup_teacher_temp_epochs: int = field(default=0, metadata=key(
        "epochs of teacher temperature warm-up"))
    center_momentum: float = field(default=0.9, metadata=key(
        "momentum of the teacher output center"))
    momentum_start: float = field(default=0.996, metadata=key(
        "EMA teacher momentum at the first step"))
    momentum_end: float = field(default=1.0, metadata=key(
        "EMA teacher momentum at the last step"))
    stage1_epochs: int = field(default=10, metadata=key(
        "epochs of stage 1"))
    stage2_epochs: int = field(default=10, metadata=key(
        "epochs of stage 2 (per set when one_by_one)"))
    seed: int = field(default=0, metadata=key("seed of every generator"))
    deterministic: bool = field(default=False, metadata=key(
        "single-threaded, deterministic kernels"))
    output_dir: str = field(default="", metadata=key(
        "artifact root; empty uses HCTX_OUTPUT_DIR"))
    way: int = field(default=5, metadata=key("evaluation classes N"))
    shot: int = field(default=1, metadata=key("support images per class K"))
    query: int = field(default=15, metadata=key(
        "query images per class Q"))
    episodes: int = field(default=500, metadata=key(
        "evaluation episodes"))
    stage_select: int = field(default=2, metadata=key(
        "transformer set whose [cls] feature is evaluated"))

    def __post_init__(self):
        for name in ("dims", "depths", "pool_schedule"):
            if len(getattr(self, name)) != N_SETS:
                raise ConfigError(_key(name), f"needs {N_SETS} values")
        if len(self.split) != 3 or min(self.split) < 0:
            raise ConfigError("SPLIT", "needs 3 non-negative class counts")
        if self.image_side % self.patch_size:
            raise ConfigError("IMAGE_SIDE", "must be divisible by PATCH_SIZE")
        if self.local_side % self.patch_size:
            raise ConfigError("LOCAL_SIDE", "must be divisible by PATCH_SIZE")
        if not self.patch_size <= self.local_side < self.image_side:
            raise ConfigError("LOCAL_SIDE",
                              "must lie in [PATCH_SIZE, IMAGE_SIDE)")
        schedule = self.pool_schedule
        if any(b >= a for a, b in zip(schedule, schedule[1:])):
            raise ConfigError("POOL_SCHEDULE", "must be strictly decreasing")
        if schedule[0] != self.tokens(self.image_side):
            raise ConfigError(
                "POOL_SCHEDULE",
                f"must start at {self.tokens(self.image_side)} tokens",
            )
        if schedule[-1] < 1:
            raise ConfigError("POOL_SCHEDULE", "must stay positive")
        local = self.tokens(self.local_side)
        for count in schedule[1:]:
            if (local * count) % schedule[0]:
                raise ConfigError(
                    "POOL_SCHEDULE",
                    f"{local}-token local views cannot pool at ratio "
                    f"{count}/{schedule[0]}",
                )
        for dim in self.dims:
            if dim < 1 or dim % self.heads:
                raise ConfigError("DIMS", f"{dim} is not divisible by HEADS")
        if min(self.depths) < 0:
            raise ConfigError("DEPTHS", "must be non-negative")
        if self.pool_backward not in BACKWARD_MODES:
            raise ConfigError("POOL_BACKWARD", f"one of {BACKWARD_MODES}")
        if self.supervision not in SUPERVISION_MODES:
            raise ConfigError("SUPERVISION", f"one of {SUPERVISION_MODES}")
        if self.stage2_mode not in STAGE2_MODES:
            raise ConfigError("STAGE2_MODE", f"one of {STAGE2_MODES}")
        if self.surrogate_space not in SURROGATE_SPACES:
            raise ConfigError("SURROGATE_SPACE",
                              f"one of {SURROGATE_SPACES}")
        if self.stage1_sets not in (1, 2):
            raise ConfigError("STAGE1_SETS", "must be 1 or 2")
        if self.stage_select not in range(1, N_SETS + 1):
            raise ConfigError("STAGE_SELECT", "must be 1, 2 or 3")
        for name in ("alpha", "beta", "clip_grad", "weight_decay",
                     "surrogate_lr"):
            if getattr(self, name) < 0:
                raise ConfigError(_key(name), "must be non-negative")
        for name in ("batch_size", "pool_restarts", "pool_iterations",
                     "way", "shot", "query", "episodes", "channels",
                     "synth_classes", "synth_per_class"):
            if getattr(self, name) < 1:
                raise ConfigError(_key(name), "must be >= 1")
        for name in ("stage1_epochs", "stage2_epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(_key(name), "must be >= 0")
        try:
            self.distill_config()
            self.crop_config()
        except ValueError as e:
            raise ConfigError("DISTILL", str(e))

    def tokens(self, side):
        return (side // self.patch_size) ** 2

    def surrogate_rate(self):
        """Surrogate learning rate, or None to share the encoder rate"""
        return self.surrogate_lr or None

    def distill_config(self):
        return DistillConfig(
            student_temp=self.student_temp,
            teacher_temp=self.teacher_temp,
            warmup_teacher_temp=self.warmup_teacher_temp,
            warmup_teacher_temp_epochs=self.warmup_teacher_temp_epochs,
            center_momentum=self.center_momentum,
            momentum_start=self.momentum_start,
            momentum_end=self.momentum_end,
            n_local=self.n_local,
        )

    def crop_config(self):
        return CropConfig(
            global_size=self.image_side,
            local_size=self.local_side,
            n_local=self.n_local,
            global_scale=self.global_scale,
            local_scale=self.local_scale,
            flip_prob=self.flip_prob,
        )


def _key(name):
    return name.upper()


def _parse(f, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if f.type is bool:
            lowered = raw.lower()
            if lowered not in _TRUE | _FALSE:
                raise ValueError(raw)
            return lowered in _TRUE
        if f.type is tuple:
            item = f.metadata["item"]
            return tuple(item(part) for part in raw.split(",") if part)
        return f.type(raw)
    except ValueError:
        raise ConfigError(_key(f.name), f"cannot parse {raw!r}")


def _format(value):
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def resolve_config(config_path=None, environ=None, overrides=None):
    """Defaults < config file < HCTX_ environment < ``overrides``"""
    environ = os.environ if environ is None else environ
    by_key = {_key(f.name): f for f in fields(RunConfig)}
    values = {}
    if config_path:
        if not os.path.isfile(config_path):
            raise ConfigError("CONFIG", f"no such file {config_path}")
        for name, raw in dotenv_values(config_path).items():
            if name not in by_key:
                raise ConfigError(name, "unknown key")
            values[by_key[name].name] = _parse(by_key[name], raw or "")
    for name, f in by_key.items():
        if ENV_PREFIX + name in environ:
            values[f.name] = _parse(f, environ[ENV_PREFIX + name])
    for name, value in (overrides or {}).items():
        if value is not None:
            values[name] = value
    return RunConfig(**values)


def format_config(cfg):
    """``KEY=value`` lines with each key's description as a comment"""
    lines = []
    for f in fields(cfg):
        lines.append(f"# {f.metadata['doc']}")
        lines.append(f"{_key(f.name)}={_format(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def config_dict(cfg):
    return {_key(f.name): _format(getattr(cfg, f.name)) for f in fields(cfg)}
