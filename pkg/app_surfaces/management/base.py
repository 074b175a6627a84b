import argparse
import json
import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError
from ..exceptions import GateFailureError, SurfaceError

logger = logging.getLogger(__name__)

EXIT_ERROR = 1
EXIT_GATE = 2


class SurfaceCommand(BaseCommand):
    """
    Base for the surfaces commands.

    Subclasses implement ``run``; surface errors become CommandError with
    exit code 1, failed gates with exit code 2.
    """

    def add_resolution_arguments(self, parser):
        parser.add_argument('--resolution', type=int, help='Mesh resolution R (default from settings)')
        parser.add_argument('--eigs', type=int, help='Number of nonzero eigenpairs L (default from settings)')

    def load_spec(self, path, serializer_class):
        """Parse a JSON input file and validate it with ``serializer_class``."""
        try:
            payload = json.loads(Path(path).read_text())
        except OSError as exc:
            raise CommandError(f"cannot read {path}: {exc}", returncode=EXIT_ERROR)
        except json.JSONDecodeError as exc:
            raise CommandError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
                               returncode=EXIT_ERROR)
        serializer = serializer_class(data=payload)
        if not serializer.is_valid():
            raise CommandError(f"{path}: {format_errors(serializer.errors)}", returncode=EXIT_ERROR)
        return serializer.validated_data

    def handle(self, *args, **options):
        try:
            self.run(**options)
        except GateFailureError as exc:
            raise CommandError(f"gate failed: {exc}", returncode=EXIT_GATE)
        except SurfaceError as exc:
            logger.error(f"stage=command error={type(exc).__name__} detail={exc}")
            raise CommandError(f"{type(exc).__name__}: {exc}", returncode=EXIT_ERROR)

    def run(self, **options):
        raise NotImplementedError


def format_errors(errors) -> str:
    """Flatten serializer errors into one diagnostic line."""
    if isinstance(errors, dict):
        return '; '.join(f"{key}: {format_errors(value)}" for key, value in errors.items())
    if isinstance(errors, list):
        return ', '.join(format_errors(e) for e in errors)
    return str(errors)


def parse_complex(text: str) -> complex:
    """``RE,IM`` as given to --tau."""
    try:
        re_part, im_part = (float(p) for p in text.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected RE,IM, got {text!r}")
    return complex(re_part, im_part)
