# path: src/qhj_app/management/commands/derive.py

import logging

from qhj_app.cli import QHJCommand
from qhj_app.derive import PIPELINES, golden_check

logger = logging.getLogger(__name__)


class Command(QHJCommand):
    help = "Spielt eine Herleitung symbolisch nach und vergleicht jeden Schritt mit den Referenzausdrücken"

    def add_command_arguments(self, parser):
        parser.add_argument('pipeline', type=str, choices=PIPELINES, help="Auszuführende Herleitung")

    def run(self, **options):
        pipeline = options['pipeline']
        report = golden_check(pipeline)
        self.resolved_config = {'pipeline': pipeline, 'hamiltonian': report.spec, 'goldens_sha256': report.goldens_sha256}
        for step in report.steps:
            self.check(f"{pipeline}:{step.label}", step.matched, detail='' if step.matched else f"diff {step.difference()}")
        for note in report.notes:
            self.stdout.write(f"note [{note.topic}]: {note.text}")
        self.write_artifact_json(f'derive-{pipeline}.json', report.to_dict())
        self.write_artifact_text(f'derive-{pipeline}.txt', report.to_text())
        logger.info(f"derive {pipeline}: {len(report.steps)} steps, {len(report.notes)} notes")
