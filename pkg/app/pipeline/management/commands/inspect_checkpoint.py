"""
Django command to list what a checkpoint holds
"""
import json

from django.core.management.base import BaseCommand, CommandError

from pipeline.checkpoint import load_checkpoint


class Command(BaseCommand):
    help = "Print the metadata and tensor shapes of a checkpoint"

    def add_arguments(self, parser):
        parser.add_argument("path")
        parser.add_argument("--config", action="store_true",
                            help="also print the stored run configuration")

    def handle(self, *args, **options):
        try:
            tensors, metadata = load_checkpoint(options["path"])
        except FileNotFoundError:
            raise CommandError(f"No checkpoint at {options['path']}")
        except ValueError as e:
            raise CommandError(str(e))

        config = metadata.pop("config", {})
        self.stdout.write(json.dumps(metadata, sort_keys=True))
        total = 0
        for name, tensor in tensors.items():
            shape = "x".join(str(s) for s in tensor.shape) or "scalar"
            self.stdout.write(f"{name}\t{shape}")
            total += tensor.numel()
        if options["config"]:
            for key, value in config.items():
                self.stdout.write(f"{key}={value}")
        self.stdout.write(self.style.SUCCESS(
            f"{len(tensors)} tensors, {total} values"
        ))
