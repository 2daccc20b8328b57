# path: src/qhj_app/management/commands/residuals.py

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from qhj_app.cli import QHJCommand
from qhj_app.fields import (
    HJ_EQUATIONS,
    KG_EQUATIONS,
    continuity_residual,
    hj_residual,
    kg_residual,
    polar_decompose,
    quantum_kinetic,
    quantum_potential,
    write_field_csv,
)
from qhj_app.forms import load_scenario
from qhj_app.solvers import ConfigError, solve
from qhj_app.utils import get_setting

logger = logging.getLogger(__name__)

TDSE_EQUATIONS = HJ_EQUATIONS + ('continuity', 'generalized-continuity')

# Gleichungen, deren Residuum mit einem vorhergesagten Feld statt mit null verglichen wird
PREDICTED = ('general-hj', 'generalized')


def _equations(value):
    return [eq.strip() for eq in value.split(',') if eq.strip()]


class Command(QHJCommand):
    help = "Simuliert ein Szenario und berechnet die gewünschten Residuen der Feldgleichungen auf allen inneren Zeitschichten"

    def add_command_arguments(self, parser):
        parser.add_argument('config', type=str, help="ScenarioConfig als JSON-Dokument")
        parser.add_argument('--eq', type=_equations, required=True, help="Kommagetrennte Gleichungs-IDs")

    def run(self, **options):
        config = load_scenario(options['config'])
        equations = options['eq']
        allowed = KG_EQUATIONS if config.solver == 'kg' else TDSE_EQUATIONS
        unknown = [eq for eq in equations if eq not in allowed]
        if unknown:
            raise ConfigError(f"Equations {unknown} do not apply to {config.solver} scenarios; choose from {', '.join(allowed)}")
        tolerances = {**get_setting('QHJ_DEFAULT_TOLERANCES', {}), **config.checks}
        self.resolved_config = {**config.to_dict(), 'equations': equations, 'tolerances': {eq: tolerances.get(eq) for eq in equations}}

        record = solve(config)
        indices = record.interior()
        if not indices:
            raise ConfigError("The scenario records no slice with both neighbours; increase steps")

        with ThreadPoolExecutor(max_workers=get_setting('QHJ_THREADS', None)) as executor:
            evaluated = list(executor.map(lambda n: self.evaluate(config, record, n, equations), indices))

        slices = []
        for n, (reports, columns) in zip(indices, evaluated):
            name = f'residuals/slice-{n:04d}.csv'
            self.register_artifact(write_field_csv(self.out_dir / name, record.grid, columns))
            slices.append({'index': n, 'time': float(record.times[n]), 'reports': reports, 'fields': name})

        for eq in equations:
            worst = max(s['reports'][eq]['check_value'] for s in slices)
            tolerance = tolerances.get(eq)
            if tolerance is None:
                raise ConfigError(f"No tolerance configured for '{eq}'")
            self.check_tolerance(eq, worst, tolerance, detail=f"over {len(slices)} slices")
        self.write_artifact_json('residuals.json', {'slices': slices})
        logger.info(f"residuals {config.name}: {len(equations)} equations on {len(slices)} slices")

    def evaluate(self, config, record, n, equations):
        """Reports and CSV columns of slice n; runs in a worker thread."""
        threshold, scheme = config.mask_threshold, config.scheme
        psi = record.wave_function(n)
        R, S = polar_decompose(psi, threshold)
        columns = {'R': R.values, 'S': S.values}
        reports = {}
        previous, following = record.neighbours(n)
        if config.solver == 'kg':
            for eq in equations:
                result = kg_residual(
                    eq, psi, record.rates[n], config.constants, previous=previous, following=following, dt=record.dt,
                    scheme=scheme, threshold=threshold, time=psi.time,
                )
                reports[eq] = {**result.report.to_dict(), 'check_value': result.report.max_norm}
                columns[eq] = result.residual.values
            return reports, columns

        constants = config.constants
        columns['QP'] = quantum_potential(R, constants, scheme, threshold).values
        columns['QK'] = quantum_kinetic(R, constants, scheme, threshold).values
        V = config.potential.sample(config.grid, constants)
        vector_potential = config.vector_potential_arrays()
        density = R.values ** 2
        b = None if vector_potential is None else [density * v for v in vector_potential]
        common = {'previous': previous, 'following': following, 'dt': record.dt, 'scheme': scheme, 'threshold': threshold, 'time': psi.time}
        predicted = None
        if any(eq in PREDICTED for eq in equations):
            # (QK - QP)/2 + Vvec.grad S, der Wert beider auf einer Schrödinger-Lösung
            general = hj_residual('general-hj', R, S, V, constants, vector_potential=vector_potential, **common)
            predicted = general.extras['predicted'].values
            columns['predicted'] = predicted
        for eq in equations:
            if eq in HJ_EQUATIONS:
                result = hj_residual(
                    eq, R, S, V, constants, vector_potential=vector_potential,
                    a=density, b=b, c=density * V, **common,
                )
            elif eq == 'generalized-continuity':
                result = continuity_residual(
                    eq, R, S, constants, a=density, b=b, scheme=scheme, threshold=threshold, time=psi.time,
                    da_dt=(np.abs(following) ** 2 - np.abs(previous) ** 2) / (2 * record.dt),
                )
            else:
                result = continuity_residual(eq, R, S, constants, **common)
            check_value = result.report.max_norm
            if eq in PREDICTED:
                mismatch = np.where(result.residual.valid, result.residual.values - predicted, 0.0)
                check_value = float(np.max(np.abs(mismatch)))
            reports[eq] = {**result.report.to_dict(), 'check_value': check_value}
            columns[eq] = result.residual.values
        return reports, columns
