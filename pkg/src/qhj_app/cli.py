# path: src/qhj_app/cli.py
"""
Shared plumbing of the management commands: the exit-code contract, artifact
bookkeeping and execute_command() for running a subcommand from an argv list.
"""
import logging
import sys
from dataclasses import dataclass, field
from importlib import import_module
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from .derive import DerivationError, UnknownPipeline
from .fields import FieldError
from .solvers import ConfigError, SolverError, StabilityError
from .traj import TrajectoryError
from .utils import get_setting, write_csv, write_json

logger = logging.getLogger(__name__)

COMMANDS = ('derive', 'simulate', 'residuals', 'trajectories', 'report')

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

# Bibliotheksfehler, bei denen schon die Anfrage unbrauchbar war
USAGE_ERRORS = (ConfigError, StabilityError, UnknownPipeline, TrajectoryError)
CHECK_ERRORS = (DerivationError, FieldError, SolverError)


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float = None
    tolerance: float = None
    detail: str = ''

    def line(self):
        text = f"{'PASS' if self.passed else 'FAIL'} {self.name}"
        if self.value is not None:
            text += f": {self.value:.3e}"
            if self.tolerance is not None:
                text += f" (tolerance {self.tolerance:.1e})"
        if self.detail:
            text += f" {self.detail}"
        return text

    def to_dict(self):
        return {
            'name': self.name,
            'passed': self.passed,
            'value': self.value,
            'tolerance': self.tolerance,
            'detail': self.detail,
        }


@dataclass
class CommandOutcome:
    exit_code: int = EXIT_OK
    artifacts: list = field(default_factory=list)
    summary: list = field(default_factory=list)

    @property
    def passed(self):
        return self.exit_code == EXIT_OK


class QHJCommand(BaseCommand):
    """
    Base class of the qhj_app commands. Subclasses implement add_command_arguments()
    and run(**options); checks registered with self.check() decide the exit code,
    artifacts written through write_artifact_json()/write_artifact_csv() embed the
    resolved configuration.
    """
    requires_system_checks = []

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.outcome = CommandOutcome()
        self.checks = []
        self.resolved_config = {}
        self.out_dir = None

    def add_arguments(self, parser):
        parser.add_argument(
            '--out', type=str, default=str(get_setting('QHJ_ARTIFACT_DIR', 'artifacts')),
            help="Verzeichnis für die JSON/CSV-Artefakte",
        )
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def run(self, **options):
        raise NotImplementedError

    def handle(self, *args, **options):
        self.out_dir = Path(options['out'])
        try:
            self.run(**options)
        except USAGE_ERRORS as exc:
            logger.error(f"{self.command_name()}: {exc}")
            raise CommandError(str(exc), returncode=EXIT_USAGE)
        except CHECK_ERRORS as exc:
            logger.error(f"{self.command_name()}: {exc}")
            self.check(type(exc).__name__, False, detail=str(exc))
        failed = [c.name for c in self.checks if not c.passed]
        if failed:
            raise CommandError(f"Fehlgeschlagene Prüfungen: {', '.join(failed)}", returncode=EXIT_CHECK_FAILED)
        self.stdout.write(self.style.SUCCESS(f"{self.command_name()}: alle {len(self.checks)} Prüfungen bestanden"))

    def command_name(self):
        return self.__module__.rsplit('.', 1)[-1]

    def check(self, name, passed, value=None, tolerance=None, detail=''):
        result = CheckResult(name, bool(passed), value, tolerance, detail)
        self.checks.append(result)
        self.outcome.summary.append(result.line())
        writer = self.style.SUCCESS if result.passed else self.style.ERROR
        (self.stdout if result.passed else self.stderr).write(writer(result.line()))
        return result

    def check_tolerance(self, name, value, tolerance, detail=''):
        return self.check(name, value <= tolerance, value, tolerance, detail)

    def artifact_payload(self, payload):
        return {
            'command': self.command_name(),
            'config': self.resolved_config,
            'checks': [c.to_dict() for c in self.checks],
            'passed': all(c.passed for c in self.checks),
            **payload,
        }

    def write_artifact_json(self, name, payload):
        path = write_json(self.out_dir / name, self.artifact_payload(payload))
        self.outcome.artifacts.append(path)
        return path

    def write_artifact_text(self, name, text):
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding='utf-8')
        self.outcome.artifacts.append(path)
        return path

    def write_artifact_csv(self, name, header, rows):
        path = write_csv(self.out_dir / name, header, rows)
        self.outcome.artifacts.append(path)
        return path

    def register_artifact(self, path):
        self.outcome.artifacts.append(Path(path))
        return path


def load_command(name, stdout=None, stderr=None):
    module = import_module(f'qhj_app.management.commands.{name}')
    return module.Command(stdout=stdout, stderr=stderr)


def execute_command(argv, stdout=None, stderr=None):
    """
    Run `argv` = [subcommand, args...] like `manage.py` would and return its
    CommandOutcome. Usage errors exit 2, failed checks exit 1.
    """
    stderr = stderr or sys.stderr
    if not argv or argv[0] not in COMMANDS:
        name = argv[0] if argv else ''
        stderr.write(f"Unbekannter Befehl '{name}'. Verfügbar: {', '.join(COMMANDS)}\n")
        return CommandOutcome(EXIT_USAGE, [], [f"unknown command '{name}'"])
    command = load_command(argv[0], stdout, stderr)
    exit_code = EXIT_OK
    try:
        command.run_from_argv(['manage.py', *argv])
    except SystemExit as exc:
        exit_code = exc.code if isinstance(exc.code, int) else EXIT_USAGE
    command.outcome.exit_code = exit_code
    return command.outcome
