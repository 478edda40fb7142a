"""
Django command to draw cluster maps and the [cls] attention of one image
"""
from django.core.management.base import BaseCommand, CommandError

from core.exceptions import CheckpointMismatchError, DatasetError
from pipeline.config import format_config
from pipeline.management.commands._options import (
    add_config_arguments,
    config_from_options,
)
from pipeline.reports import default_image, load_image, load_model, visualize
from pipeline.trainer import run_dir, stage_checkpoint


class Command(BaseCommand):
    help = "Write pooling cluster maps and the [cls] attention heatmap"

    def add_arguments(self, parser):
        add_config_arguments(parser)
        parser.add_argument("--checkpoint",
                            help="defaults to the run's stage 2 checkpoint")
        parser.add_argument("--image",
                            help="defaults to the first novel-class image")
        parser.add_argument("--out", help="defaults to <run dir>/viz")

    def handle(self, *args, **options):
        cfg = config_from_options(options)
        if options["print_config"]:
            self.stdout.write(format_config(cfg), ending="")
            return
        path = options["checkpoint"] or stage_checkpoint(cfg, 2)
        out = options["out"] or run_dir(cfg) / "viz"
        try:
            model, _ = load_model(cfg, path)
            if options["image"]:
                image = load_image(cfg, options["image"])
            else:
                image = default_image(cfg)
            paths = visualize(cfg, model, image, out)
        except FileNotFoundError:
            raise CommandError(f"No checkpoint at {path}")
        except (CheckpointMismatchError, DatasetError, ValueError) as e:
            raise CommandError(str(e))

        for written in paths:
            self.stdout.write(str(written))
        self.stdout.write(self.style.SUCCESS(f"Wrote {len(paths)} files"))
