"""
Django command for episodic few-shot evaluation of a checkpoint
"""
from django.core.management.base import BaseCommand, CommandError

from core.exceptions import CheckpointMismatchError, DatasetError
from core.models import EvaluationReport, TrainingRun
from fewshot.evaluation import format_report
from pipeline.config import format_config
from pipeline.management.commands._options import (
    add_config_arguments,
    add_protocol_arguments,
    config_from_options,
)
from pipeline.reports import evaluate_checkpoint
from pipeline.trainer import stage_checkpoint


class Command(BaseCommand):
    help = "Few-shot accuracy of a checkpoint on the novel classes"

    def add_arguments(self, parser):
        add_config_arguments(parser)
        add_protocol_arguments(parser)
        parser.add_argument("--checkpoint",
                            help="defaults to the run's stage 2 checkpoint")
        parser.add_argument("--accuracies",
                            help="write per-episode accuracies here")

    def handle(self, *args, **options):
        cfg = config_from_options(options)
        if options["print_config"]:
            self.stdout.write(format_config(cfg), ending="")
            return
        path = str(options["checkpoint"] or stage_checkpoint(cfg, 2))
        try:
            report = evaluate_checkpoint(cfg, path, options["accuracies"])
        except FileNotFoundError:
            raise CommandError(f"No checkpoint at {path}")
        except (CheckpointMismatchError, DatasetError, ValueError) as e:
            raise CommandError(str(e))

        EvaluationReport.objects.create(
            run=TrainingRun.objects.filter(checkpoint_path=path)
            .order_by("-created").first(),
            checkpoint_path=path,
            stage_select=cfg.stage_select,
            way=report.way,
            shot=report.shot,
            query=report.query,
            episodes=report.episodes,
            accuracy=report.accuracy,
            ci95=report.ci95,
        )
        self.stdout.write(self.style.SUCCESS(
            f"set {cfg.stage_select} {format_report(report)}"
        ))
