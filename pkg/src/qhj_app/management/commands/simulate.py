# path: src/qhj_app/management/commands/simulate.py

import logging

import numpy as np

from qhj_app.cli import QHJCommand
from qhj_app.fields import field_rows, polar_decompose
from qhj_app.forms import load_scenario
from qhj_app.solvers import solve

logger = logging.getLogger(__name__)

# Erlaubte Drift der diskreten Norm (Schrödinger) bzw. relative Energiedrift (Klein-Gordon)
NORM_TOLERANCE = 1e-10
ENERGY_TOLERANCE = 1e-6


class Command(QHJCommand):
    help = "Propagiert ein Szenario und exportiert die Zeitschichten als JSON und als CSV pro Schicht"

    def add_command_arguments(self, parser):
        parser.add_argument('config', type=str, help="ScenarioConfig als JSON-Dokument")

    def run(self, **options):
        config = load_scenario(options['config'])
        self.resolved_config = config.to_dict()
        record = solve(config)

        if record.solver == 'tdse':
            norms = [record.wave_function(n).norm() for n in range(len(record))]
            self.check_tolerance('norm-conservation', max(abs(n - norms[0]) for n in norms), NORM_TOLERANCE)
        else:
            self.check_tolerance('energy-conservation', record.metadata['energy_drift'], ENERGY_TOLERANCE)

        slice_files = []
        for n in range(len(record)):
            name = f'slices/slice-{n:04d}.csv'
            self.write_slice(name, record, n, config.mask_threshold)
            slice_files.append(name)
        self.write_artifact_json('record.json', {**record.to_dict(), 'slice_files': slice_files})
        logger.info(f"simulate {config.name}: {len(record)} slices written to {self.out_dir}")

    def write_slice(self, name, record, n, threshold):
        psi = record.wave_function(n)
        R, S = polar_decompose(psi, threshold)
        columns = [psi.values.real, psi.values.imag, R.values, S.values]
        header = ['real', 'imag', 'R', 'S']
        if record.rates is not None:
            rate = np.asarray(record.rates[n])
            columns += [rate.real, rate.imag]
            header += ['dt_real', 'dt_imag']
        axes = ['x', 'y'][:record.grid.dim]
        return self.write_artifact_csv(name, ['t'] + axes + header, (
            [float(record.times[n])] + row for row in field_rows(record.grid, columns)
        ))
