# path: src/qhj_app/management/commands/trajectories.py

import argparse
import logging
import math
from pathlib import Path

import numpy as np

from qhj_app.cli import QHJCommand
from qhj_app.forms import load_scenario
from qhj_app.solvers import ConfigError, solve
from qhj_app.traj import integrate_trajectories, ks_statistic, non_crossing, sample_seeds

logger = logging.getLogger(__name__)

# Erlaubter KS-Abstand zwischen den Bahnen und |psi|^2 zur Endzeit
KS_TOLERANCE = 0.02


def _u64(value):
    try:
        seed = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed '{value}'")
    if not 0 <= seed < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return seed


def _empirical_cdf(psi):
    grid = psi.grid
    density = np.abs(psi.values) ** 2
    h = grid.spacing[0]
    edges = grid.axis(0)[0] - h / 2 + h * np.arange(grid.points[0] + 1)
    cdf = np.concatenate([[0.0], np.cumsum(density) / density.sum()])

    def evaluate(x):
        wrapped, _ = grid.wrap(np.asarray(x)[:, None])
        return np.interp(wrapped[:, 0], edges, cdf)
    return evaluate


class Command(QHJCommand):
    help = "Integriert Bahnen nach dem Führungsgesetz durch ein simuliertes Szenario"

    def add_command_arguments(self, parser):
        parser.add_argument('config', type=str, help="ScenarioConfig als JSON-Dokument")
        parser.add_argument('--seeds', type=str, required=True, help="sample:<N>, grid:<lo>:<hi>:<N> oder eine Datei mit einer Position pro Zeile")
        parser.add_argument('--seed', type=_u64, default=None, help="Zufallsstartwert für sample:<N>")
        parser.add_argument('--dt', type=float, default=None, help="Zeitschritt der Bahnen (Standard: Abstand der Zeitschichten)")
        parser.add_argument('--t-end', type=float, default=None, help="Endzeit (Standard: letzte Zeitschicht)")

    def resolve_seeds(self, spec, seed, record):
        grid = record.grid
        if spec.startswith('sample:'):
            if seed is None:
                raise ConfigError("sample:<N> seeding needs an explicit --seed")
            try:
                count = int(spec.split(':', 1)[1])
            except ValueError:
                raise ConfigError(f"Malformed seed count in '{spec}'")
            if count < 1:
                raise ConfigError("sample:<N> needs N >= 1")
            return sample_seeds(record.wave_function(0), count, np.random.default_rng(seed)), 'sample'
        if spec.startswith('grid:'):
            try:
                lo, hi, count = spec.split(':')[1:]
                axis = np.linspace(float(lo), float(hi), int(count))
            except ValueError:
                raise ConfigError(f"Malformed seed grid '{spec}', expected grid:<lo>:<hi>:<N>")
            if grid.dim == 1:
                return axis[:, None], 'grid'
            return np.stack(np.meshgrid(axis, axis, indexing='ij'), axis=-1).reshape(-1, 2), 'grid'
        path = Path(spec)
        if not path.is_file():
            raise ConfigError(f"Seed specification '{spec}' is neither sample:, grid: nor a file")
        try:
            seeds = np.loadtxt(path, ndmin=2)
        except ValueError as exc:
            raise ConfigError(f"Cannot read seeds from {path}: {exc}")
        if seeds.shape[1] != grid.dim:
            raise ConfigError(f"Seed file {path} has {seeds.shape[1]} columns, the grid is {grid.dim}D")
        return seeds, 'file'

    def run(self, **options):
        config = load_scenario(options['config'])
        record = solve(config)
        seeds, source = self.resolve_seeds(options['seeds'], options['seed'], record)
        dt_traj = options['dt'] or (float(record.times[1] - record.times[0]) if len(record) > 1 else config.dt)
        self.resolved_config = {
            **config.to_dict(),
            'seeds': options['seeds'],
            'seed': options['seed'],
            'dt_traj': dt_traj,
            't_end': options['t_end'],
        }
        trajectories = integrate_trajectories(
            record, seeds, dt_traj, t_end=options['t_end'], threshold=config.mask_threshold, scheme=config.scheme,
        )
        if record.grid.dim == 1:
            self.check('non-crossing', non_crossing(trajectories))
            if source == 'sample':
                end = int(np.argmin(np.abs(record.times - trajectories.times[-1])))
                tolerance = max(KS_TOLERANCE, 1.63 / math.sqrt(len(seeds)))
                statistic = ks_statistic(trajectories.positions[:, -1, 0], _empirical_cdf(record.wave_function(end)))
                self.check_tolerance('equivariance-ks', statistic, tolerance)
        self.write_artifact_csv('trajectories.csv', trajectories.header(), trajectories.rows())
        self.write_artifact_json('trajectories.json', trajectories.to_dict())
        logger.info(f"trajectories {config.name}: {len(seeds)} seeds, {len(trajectories.times)} time stamps")
