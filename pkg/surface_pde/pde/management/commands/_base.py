import csv
import logging
import time
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from django.utils import timezone
from rest_framework import serializers
from rest_framework.renderers import JSONRenderer

from pde.exceptions import EXIT_OK, EXIT_VALIDATION, ConfigError, PdeError
from pde.experiments import load_config
from pde.models import RunRecord

logger = logging.getLogger(__name__)


def write_rows(path, rows, columns):
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)


class PdeCommand(BaseCommand):
    """Shared plumbing for experiment commands.

    Subclasses set ``config_serializer`` and implement ``run``. Every invocation
    gets a ``RunRecord`` row; failures are written to stderr as
    ``{"error": ..., "details": ...}`` and end with the exception's exit code.
    """

    config_serializer = None

    def add_arguments(self, parser):
        parser.add_argument("--config", required=True, help="JSON experiment description")
        parser.add_argument("--out", help="Output directory (default: PDE_OUTPUT_ROOT/<command>-<run id>)")
        parser.add_argument("--threads", type=int, default=None, help="Worker threads for independent solves")
        parser.add_argument("--seed", type=int, default=0, help="Seed for every random choice in the run")

    @property
    def command_name(self):
        return self.__module__.rsplit(".", 1)[-1]

    def run(self, config, out_dir, threads, seed):
        raise NotImplementedError

    def write_manifest(self, out_dir, config, seed, threads, **extra):
        manifest = {"command": self.command_name, "seed": seed, "threads": threads, "config": config, **extra}
        (Path(out_dir) / "manifest.json").write_bytes(JSONRenderer().render(manifest))

    def handle(self, *args, **options):
        started = time.perf_counter()
        record = RunRecord.objects.create(command=self.command_name)
        threads = settings.PDE_THREADS if options["threads"] is None else options["threads"]
        try:
            if threads < 1:
                raise ConfigError(f"--threads must be at least 1, got {threads}", {"threads": threads})
            config = load_config(options["config"], self.config_serializer)
            record.config = config
            out_dir = Path(options["out"] or Path(settings.PDE_OUTPUT_ROOT) / f"{self.command_name}-{record.pk}")
            out_dir.mkdir(parents=True, exist_ok=True)
            record.output_dir = str(out_dir)
            record.save()
            logger.info(f"Run {record.pk}: {self.command_name} writing to {out_dir}")
            summary = self.run(config, out_dir, threads, options["seed"])
        except serializers.ValidationError as e:
            self.fail(record, started, "Invalid configuration", serializers.as_serializer_error(e), EXIT_VALIDATION)
        except PdeError as e:
            self.fail(record, started, e.message, e.details, e.exit_code)
        except Exception as e:
            logger.exception(f"Run {record.pk} crashed")
            self.fail(record, started, "Unexpected failure", {"exception": repr(e)}, 1)

        record.status = RunRecord.SUCCEEDED
        record.exit_code = EXIT_OK
        record.wall_time = time.perf_counter() - started
        record.finished_at = timezone.now()
        record.save()
        logger.info(f"Run {record.pk} finished in {record.wall_time:.2f}s")
        if summary:
            self.stdout.write(summary)

    def fail(self, record, started, message, details, exit_code):
        error = {"error": message, "details": details}
        logger.error(f"Run {record.pk} failed with exit code {exit_code}: {message}")
        record.status = RunRecord.FAILED
        record.exit_code = exit_code
        record.error = error
        record.wall_time = time.perf_counter() - started
        record.finished_at = timezone.now()
        record.save()
        self.stderr.write(JSONRenderer().render(error).decode())
        raise CommandError(message, returncode=exit_code)
