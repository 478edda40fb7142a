"""
Django command to train the cascade
"""
import math

from django.core.management.base import BaseCommand, CommandError

from core.exceptions import (
    CheckpointMismatchError,
    DatasetError,
    NonFiniteError,
)
from core.models import TrainingRun
from pipeline.config import format_config
from pipeline.management.commands._options import (
    add_config_arguments,
    config_from_options,
)
from pipeline.trainer import train


class Command(BaseCommand):
    help = "Train the transformer sets in two stages"

    def add_arguments(self, parser):
        add_config_arguments(parser)
        parser.add_argument("--stage", type=int, choices=(1, 2),
                            help="run only this stage")

    def handle(self, *args, **options):
        cfg = config_from_options(options)
        if options["print_config"]:
            self.stdout.write(format_config(cfg), ending="")
            return
        stages = (options["stage"],) if options["stage"] else (1, 2)
        run = TrainingRun.objects.create(
            name=cfg.name,
            seed=cfg.seed,
            stage=stages[-1],
            config_text=format_config(cfg),
        )
        self.stdout.write(f"Training {cfg.name}, stages {stages}...")
        try:
            result, _ = train(cfg, stages)
        except (NonFiniteError, DatasetError, CheckpointMismatchError,
                FileNotFoundError) as e:
            run.status = TrainingRun.STATUS_FAILED
            run.save()
            raise CommandError(f"Training failed: {e}")

        run.status = TrainingRun.STATUS_DONE
        run.checkpoint_path = str(result.checkpoints[stages[-1]])
        run.metrics_path = str(result.metrics_path)
        if not math.isnan(result.final_loss):
            run.final_loss = result.final_loss
        run.save()
        self.stdout.write(self.style.SUCCESS(
            f"Trained {result.steps} steps, checkpoint "
            f"{run.checkpoint_path}"
        ))
