"""
A run configuration small enough to train in seconds
"""
from pipeline.config import RunConfig


def tiny_config(output_dir="", **changes):
    values = dict(
        name="tiny",
        dataset="synthetic",
        synth_classes=5,
        synth_per_class=6,
        split=(3, 0, 2),
        image_side=8,
        patch_size=2,
        dims=(8, 8, 8),
        depths=(1, 1, 1),
        heads=2,
        out_dim=8,
        head_hidden=8,
        head_bottleneck=4,
        pool_schedule=(16, 8, 4),
        local_side=4,
        n_local=1,
        batch_size=4,
        pool_restarts=2,
        pool_iterations=10,
        stage1_epochs=1,
        stage2_epochs=1,
        output_dir=str(output_dir),
        way=2,
        shot=1,
        query=2,
        episodes=5,
        deterministic=True,
    )
    values.update(changes)
    return RunConfig(**values)
