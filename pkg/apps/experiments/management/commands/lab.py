import json
import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from django.db import DatabaseError
from django.utils import timezone

from apps.common.exceptions import LabError, SampleFailureError
from apps.experiments.models import ExperimentRun
from apps.experiments.serializers import ExperimentConfigSerializer
from apps.experiments.services.artifacts import build_document, output_directory, write_artifacts
from apps.experiments.services.builders import build_ensemble_config, resolve_config
from apps.experiments.services.dispatch import dispatch

logger = logging.getLogger(__name__)


EXIT_PASSED = 0
EXIT_VERDICT_FAILED = 1
EXIT_CONFIG_ERROR = 2

# Flag -> top-level config key
OVERRIDES = {
    'seed': 'seed',
    'out': 'out',
    'h': 'h',
    'n_samples': 'n_samples',
    'threads': 'threads',
}


def format_errors(errors, prefix='') -> str:
    """Flatten nested serializer errors into 'path: message' lines."""
    lines = []
    if isinstance(errors, dict):
        for key, value in errors.items():
            lines.extend(format_errors(value, f"{prefix}{key}.").splitlines())
    elif isinstance(errors, list) and errors and not all(isinstance(item, str) for item in errors):
        for index, value in enumerate(errors):
            if value:
                lines.extend(format_errors(value, f"{prefix}{index}.").splitlines())
    else:
        messages = errors if isinstance(errors, list) else [errors]
        lines.extend(f"{prefix.rstrip('.') or 'config'}: {message}" for message in messages)
    return '\n'.join(lines)


class Command(BaseCommand):
    help = 'Run a laboratory experiment (green-check, solve, ensemble, clt, lln, borel-cantelli) from a JSON config.'

    def add_arguments(self, parser):
        parser.add_argument('command_name', choices=[choice for choice, _ in ExperimentRun.Command.choices])
        parser.add_argument('--config', required=True, help='Path to the JSON experiment config')
        parser.add_argument('--seed', type=int, help='Override the master seed')
        parser.add_argument('--out', help='Override the output directory')
        parser.add_argument('--h', type=float, help='Override the grid spacing')
        parser.add_argument('--n-samples', dest='n_samples', type=int, help='Override the sample count')
        parser.add_argument('--threads', type=int, help='Override the worker thread count')

    def handle(self, *args, **options):
        document = self.load_document(options)
        serializer = ExperimentConfigSerializer(data=document)
        if not serializer.is_valid():
            message = format_errors(serializer.errors)
            logger.error(f"Invalid experiment config {options['config']}:\n{message}")
            raise CommandError(f"Invalid config:\n{message}", returncode=EXIT_CONFIG_ERROR)
        data = serializer.validated_data

        directory = output_directory(data)
        run = ExperimentRun(command=data['command'], seed=data['seed'], output_dir=str(directory))
        try:
            cfg = build_ensemble_config(data)
            resolved = resolve_config(data, cfg, directory)
            run.config = resolved
            logger.info(f"Resolved config: {json.dumps(resolved, default=str)}")
            result = dispatch(data, cfg)
        except LabError as exc:
            run.status = ExperimentRun.Status.ERROR
            run.exit_code = exc.exit_code
            run.error_message = exc.message
            self.record(run)
            if isinstance(exc, SampleFailureError):
                logger.error(f"Sample {exc.sample_index} failed: {exc.cause.message}")
            raise CommandError(exc.message, returncode=exc.exit_code) from exc

        document = build_document(run.config, result.report, result.verdicts)
        write_artifacts(directory, document, result.tables)

        run.report = document['report']
        run.status = ExperimentRun.Status.PASSED if result.passed else ExperimentRun.Status.FAILED
        run.exit_code = EXIT_PASSED if result.passed else EXIT_VERDICT_FAILED
        self.record(run)

        for name, verdict in result.verdicts.items():
            self.stdout.write(f"{name}: {'pass' if verdict else 'FAIL'}")
        if not result.passed:
            failed = ', '.join(name for name, verdict in result.verdicts.items() if not verdict)
            raise CommandError(f"Verdict(s) failed: {failed}", returncode=EXIT_VERDICT_FAILED)
        self.stdout.write(self.style.SUCCESS(f"All verdicts passed; report in {directory}"))

    def load_document(self, options) -> dict:
        path = Path(options['config'])
        try:
            document = json.loads(path.read_text(encoding='utf-8'))
        except FileNotFoundError:
            raise CommandError(f"Config file not found: {path}", returncode=EXIT_CONFIG_ERROR)
        except json.JSONDecodeError as exc:
            raise CommandError(f"Config is not valid JSON: {exc}", returncode=EXIT_CONFIG_ERROR)
        if not isinstance(document, dict):
            raise CommandError("Config must be a JSON object", returncode=EXIT_CONFIG_ERROR)

        document.setdefault('command', options['command_name'])
        if document['command'] != options['command_name']:
            raise CommandError(
                f"Config is for '{document['command']}' but '{options['command_name']}' was requested",
                returncode=EXIT_CONFIG_ERROR,
            )
        for flag, key in OVERRIDES.items():
            if options.get(flag) is not None:
                document[key] = options[flag]
        return document

    def record(self, run: ExperimentRun) -> None:
        if not settings.LAB_RECORD_RUNS:
            return
        run.finished_at = timezone.now()
        try:
            run.save()
        except DatabaseError as exc:
            logger.warning(f"Could not record run: {exc}")
