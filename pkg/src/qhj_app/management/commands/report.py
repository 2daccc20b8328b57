# path: src/qhj_app/management/commands/report.py

import json
import logging
from pathlib import Path

from qhj_app.cli import QHJCommand
from qhj_app.solvers import ConfigError

logger = logging.getLogger(__name__)

SUMMARY_NAME = 'summary.json'


class Command(QHJCommand):
    help = "Fasst die JSON-Artefakte eines Verzeichnisses zu einer Übersicht zusammen"

    def add_command_arguments(self, parser):
        parser.add_argument('directory', type=str, help="Verzeichnis mit den Artefakten früherer Läufe")

    def add_arguments(self, parser):
        super().add_arguments(parser)
        # Übersicht landet neben den Artefakten, sofern --out nichts anderes angibt
        parser.set_defaults(out=None)

    def handle(self, *args, **options):
        options['out'] = options['out'] or options['directory']
        return super().handle(*args, **options)

    def run(self, **options):
        directory = Path(options['directory'])
        if not directory.is_dir():
            raise ConfigError(f"Artifact directory {directory} does not exist")
        self.resolved_config = {'directory': str(directory)}
        entries = []
        for path in sorted(directory.rglob('*.json')):
            if path.name == SUMMARY_NAME:
                continue
            try:
                data = json.loads(path.read_text(encoding='utf-8'))
            except json.JSONDecodeError as exc:
                logger.warning(f"Skipping unreadable artifact {path}: {exc}")
                continue
            if not isinstance(data, dict) or 'command' not in data:
                logger.debug(f"Skipping {path}: not a command artifact")
                continue
            entry = {
                'artifact': path.relative_to(directory).as_posix(),
                'command': data['command'],
                'passed': bool(data.get('passed')),
                'checks': data.get('checks', []),
                'config': data.get('config', {}),
            }
            entries.append(entry)
            self.check(entry['artifact'], entry['passed'], detail=f"({entry['command']}, {len(entry['checks'])} checks)")
        if not entries:
            raise ConfigError(f"No command artifacts found in {directory}")
        self.write_artifact_json(SUMMARY_NAME, {
            'artifacts': entries,
            'total_checks': sum(len(e['checks']) for e in entries),
            'failed_checks': [
                f"{e['artifact']}:{c['name']}" for e in entries for c in e['checks'] if not c.get('passed')
            ],
        })
