# path: src/qhj_app/tests/test_solvers.py
import math

import numpy as np
from django.test import SimpleTestCase

from qhj_app.fields import Grid, PhysicalConstants, continuity_residual, kg_residual, polar_decompose
from qhj_app.solvers import (
    ConfigError,
    EvolutionRecord,
    InitialStateSpec,
    LeapfrogKleinGordon,
    PotentialSpec,
    ScenarioConfig,
    SolverError,
    StabilityError,
    analytic_state,
    analytic_time_derivative,
    kg_energy,
    measure_frequency,
    propagate_tdse,
    solve,
    solve_kg,
    solve_tdse,
)

UNITS = PhysicalConstants()
PACKET_GRID = Grid((512,), ((-20.0, 20.0),))
BOX = Grid((256,), ((-16.0, 16.0),))
RING = Grid((64,), ((0.0, 2 * math.pi),))


def _l2(a, b, grid):
    return math.sqrt(float(np.sum(np.abs(a - b) ** 2)) * grid.cell_volume)


def _harmonic(grid):
    return PotentialSpec('harmonic', 1.0).sample(grid, UNITS)


def _kg_config(params, dt, steps, stride, constants=UNITS, grid=RING, initial=None):
    return ScenarioConfig(
        grid=grid,
        constants=constants,
        potential=PotentialSpec(),
        initial_state=initial or InitialStateSpec('kg-plane-wave', params),
        dt=dt,
        steps=steps,
        output_stride=stride,
        solver='kg',
        name='kg-test',
    )


class SplitStepTests(SimpleTestCase):

    def test_free_gaussian_matches_closed_form(self):
        params = {'sigma0': 1.0, 'k0': 1.0}
        psi0 = analytic_state('free-gaussian', params, 0.0, PACKET_GRID, UNITS)
        times, slices, _, _ = propagate_tdse(psi0.values, PACKET_GRID, UNITS, np.zeros(512), 1e-3, 1000, 1000)
        self.assertAlmostEqual(times[-1], 1.0)
        exact = analytic_state('free-gaussian', params, 1.0, PACKET_GRID, UNITS)
        self.assertLessEqual(_l2(slices[-1], exact.values, PACKET_GRID), 1e-8)

    def test_strang_splitting_is_second_order(self):
        params = {'omega': 1.0, 'x0': 1.0}
        psi0 = analytic_state('harmonic-coherent', params, 0.0, BOX, UNITS).values
        exact = analytic_state('harmonic-coherent', params, 1.0, BOX, UNITS).values
        errors = []
        for dt, steps in ((0.01, 100), (0.005, 200)):
            _, slices, _, _ = propagate_tdse(psi0, BOX, UNITS, _harmonic(BOX), dt, steps, steps)
            errors.append(_l2(slices[-1], exact, BOX))
        self.assertTrue(3.5 < errors[0] / errors[1] < 4.5, errors)

    def test_harmonic_ground_state_is_stationary(self):
        psi0 = analytic_state('harmonic-ground', {'omega': 1.0}, 0.0, BOX, UNITS).values
        _, slices, _, _ = propagate_tdse(psi0, BOX, UNITS, _harmonic(BOX), 2.5e-5, 40000, 40000)
        self.assertLessEqual(np.max(np.abs(np.abs(slices[-1]) - np.abs(psi0))), 1e-9)

    def test_plane_wave_eigenmode_is_exact(self):
        params = {'k0': 3.0}
        psi0 = analytic_state('plane-wave', params, 0.0, RING, UNITS).values
        times, slices, _, _ = propagate_tdse(psi0, RING, UNITS, np.zeros(64), 1e-3, 1000, 1000)
        exact = analytic_state('plane-wave', params, times[-1], RING, UNITS).values
        self.assertLessEqual(np.max(np.abs(slices[-1] - exact)), 1e-12)

    def test_norm_is_conserved(self):
        psi0 = analytic_state('harmonic-coherent', {'x0': 2.0}, 0.0, BOX, UNITS).values
        _, slices, _, _ = propagate_tdse(psi0, BOX, UNITS, _harmonic(BOX), 0.01, 500, 50)
        norms = [float(np.sum(np.abs(s) ** 2)) * BOX.cell_volume for s in slices]
        self.assertLessEqual(max(abs(n - norms[0]) for n in norms), 1e-10)

    def test_backward_steps_undo_forward_steps(self):
        psi0 = analytic_state('harmonic-coherent', {'x0': 1.5}, 0.0, BOX, UNITS).values
        potential = _harmonic(BOX)
        _, forward, _, _ = propagate_tdse(psi0, BOX, UNITS, potential, 0.01, 300, 300)
        _, backward, _, _ = propagate_tdse(forward[-1], BOX, UNITS, potential, -0.01, 300, 300)
        self.assertLessEqual(np.max(np.abs(backward[-1] - psi0)), 1e-8)

    def test_neighbours_are_one_step_apart(self):
        psi0 = analytic_state('harmonic-ground', {}, 0.0, BOX, UNITS).values
        times, slices, before, after = propagate_tdse(psi0, BOX, UNITS, _harmonic(BOX), 1e-3, 30, 10)
        np.testing.assert_allclose(times, [0.0, 0.01, 0.02, 0.03])
        self.assertIsNone(before[0])
        self.assertIsNone(after[-1])
        _, one_step, _, _ = propagate_tdse(slices[1], BOX, UNITS, _harmonic(BOX), 1e-3, 1, 1)
        np.testing.assert_array_equal(after[1], one_step[-1])

    def test_invalid_stride_rejected(self):
        with self.assertRaises(ConfigError):
            propagate_tdse(np.ones(64), RING, UNITS, np.zeros(64), 1e-3, 10, 0)

    def test_continuity_holds_on_solver_slices(self):
        config = ScenarioConfig(
            grid=BOX,
            constants=UNITS,
            potential=PotentialSpec('harmonic', 1.0),
            initial_state=InitialStateSpec('harmonic-coherent', {'x0': 1.0}),
            dt=1e-3,
            steps=200,
            output_stride=100,
        )
        record = solve_tdse(config)
        self.assertEqual(record.interior(), [1])
        previous, following = record.neighbours(1)
        R, S = polar_decompose(record.wave_function(1), 1e-3)
        result = continuity_residual('continuity', R, S, UNITS, previous=previous, following=following, dt=record.dt)
        self.assertLessEqual(result.report.max_norm, 1e-5)


class KleinGordonTests(SimpleTestCase):

    def test_plane_wave_frequency(self):
        record = solve_kg(_kg_config({'p': 1.0}, 0.002, 2500, 50))
        self.assertAlmostEqual(measure_frequency(record) / math.sqrt(2), 1.0, delta=1e-6)

    def test_massless_field_moves_at_light_speed(self):
        constants = PhysicalConstants(m0=0.0, c_light=1.5)
        record = solve_kg(_kg_config({'p': 2.0}, 1e-3, 5000, 100, constants=constants))
        self.assertAlmostEqual(measure_frequency(record) / 2.0, 1.5, delta=1.5e-6)

    def test_zero_data_stays_zero(self):
        initial = InitialStateSpec('sampled', {}, tuple([0j] * 64), tuple([0j] * 64))
        record = solve_kg(_kg_config({}, 0.01, 100, 10, initial=initial))
        self.assertTrue(all(not np.any(s) for s in record.slices))
        self.assertEqual(record.metadata['energy_drift'], 0.0)

    def test_courant_bound_enforced(self):
        with self.assertRaises(StabilityError):
            LeapfrogKleinGordon(RING, UNITS, 0.2)

    def test_verlet_bound_enforced(self):
        # below h / c but beyond dt^2 (c^2 lambda_max + mu^2) < 4
        with self.assertRaises(StabilityError):
            LeapfrogKleinGordon(RING, UNITS, 0.09)

    def test_discrete_energy_is_conserved(self):
        x = RING.axis(0)
        phi = tuple(complex(v) for v in np.exp(-(x - math.pi) ** 2))
        initial = InitialStateSpec('sampled', {}, phi, tuple([0j] * 64))
        record = solve_kg(_kg_config({}, 0.01, 1000, 100, initial=initial))
        self.assertLessEqual(record.metadata['energy_drift'], 1e-6)
        energies = [
            kg_energy(s, r, RING, UNITS, 0.01) for s, r in zip(record.slices, record.rates)
        ]
        self.assertEqual(energies, record.metadata['energies'])

    def test_verlet_is_second_order(self):
        params = {'p': 1.0}
        exact = analytic_state('kg-plane-wave', params, 2.0, RING, UNITS).values
        errors = []
        for dt, steps in ((0.02, 100), (0.01, 200)):
            record = solve_kg(_kg_config(params, dt, steps, steps))
            errors.append(np.max(np.abs(record.slices[-1] - exact)))
        self.assertTrue(3.5 < errors[0] / errors[1] < 4.5, errors)

    def test_needs_time_derivative(self):
        initial = InitialStateSpec('sampled', {}, tuple([1 + 0j] * 64))
        with self.assertRaises(ConfigError):
            solve_kg(_kg_config({}, 0.01, 10, 10, initial=initial))

    def test_dispatch_by_solver(self):
        record = solve(_kg_config({'p': 1.0}, 0.01, 10, 5))
        self.assertEqual(record.solver, 'kg')
        self.assertEqual(len(record), 3)
        self.assertEqual(len(record.rates), 3)

    def test_neighbouring_fields_are_recorded(self):
        record = solve_kg(_kg_config({'p': 1.0}, 0.01, 20, 10))
        self.assertEqual(record.interior(), [1])
        one_step = solve_kg(_kg_config({'p': 1.0}, 0.01, 11, 1))
        np.testing.assert_array_equal(record.neighbours(1)[0], one_step.slices[9])
        np.testing.assert_array_equal(record.neighbours(1)[1], one_step.slices[11])

    def test_solver_slices_satisfy_field_equations(self):
        x = RING.axis(0)
        phi = np.exp(1j * x) + 0.5 * np.exp(2j * x)
        phi_t = -1j * (math.sqrt(2) * np.exp(1j * x) + 0.5 * math.sqrt(5) * np.exp(2j * x))
        initial = InitialStateSpec('sampled', {}, tuple(phi), tuple(phi_t))
        record = solve_kg(_kg_config({}, 0.01, 200, 50, initial=initial))
        self.assertEqual(record.interior(), [1, 2, 3])
        for n in record.interior():
            previous, following = record.neighbours(n)
            for equation in ('kg-real', 'kg-continuity'):
                with self.subTest(slice=n, equation=equation):
                    result = kg_residual(
                        equation, record.wave_function(n), record.rates[n], UNITS,
                        previous=previous, following=following, dt=record.dt,
                    )
                    self.assertLessEqual(result.report.max_norm, 1e-8)
                    # a 0.1% bump on the following field is far outside tolerance
                    bumped = kg_residual(
                        equation, record.wave_function(n), record.rates[n], UNITS,
                        previous=previous, following=following * (1 + 1e-3 * np.cos(x)), dt=record.dt,
                    )
                    self.assertGreater(bumped.report.max_norm, 1e-2)


class AnalyticStateTests(SimpleTestCase):

    def test_free_gaussian_spreads(self):
        psi = analytic_state('free-gaussian', {'sigma0': 1.0}, 2.0, PACKET_GRID, UNITS)
        x = PACKET_GRID.axis(0)
        density = psi.density()
        variance = float(np.sum(x ** 2 * density) / np.sum(density))
        self.assertAlmostEqual(math.sqrt(variance), math.sqrt(2), delta=1e-9)
        self.assertAlmostEqual(psi.norm(), 1.0, delta=1e-12)

    def test_coherent_state_follows_classical_orbit(self):
        psi = analytic_state('harmonic-coherent', {'x0': 1.0}, 1.0, BOX, UNITS)
        density = psi.density()
        mean = float(np.sum(BOX.axis(0) * density) / np.sum(density))
        self.assertAlmostEqual(mean, math.cos(1.0), delta=1e-10)

    def test_kg_plane_wave_energy(self):
        grid = Grid((64,), ((0.0, 4 * math.pi),))
        phi = analytic_state('kg-plane-wave', {'p': 0.5}, 0.0, grid, UNITS).values
        phi_t = analytic_time_derivative('kg-plane-wave', {'p': 0.5}, 0.0, grid, UNITS)
        np.testing.assert_allclose(phi_t, -1j * math.sqrt(1.25) * phi)

    def test_time_derivative_matches_difference_quotient(self):
        params = {'sigma0': 0.8, 'k0': -0.5, 'x0': 1.0}
        dt = 1e-5
        later = analytic_state('free-gaussian', params, 0.3 + dt, PACKET_GRID, UNITS).values
        earlier = analytic_state('free-gaussian', params, 0.3 - dt, PACKET_GRID, UNITS).values
        rate = analytic_time_derivative('free-gaussian', params, 0.3, PACKET_GRID, UNITS)
        np.testing.assert_allclose((later - earlier) / (2 * dt), rate, atol=1e-8)

    def test_invalid_parameters_rejected(self):
        for kind, params in (('free-gaussian', {'sigma0': 0.0}), ('harmonic-ground', {'omega': -1.0}), ('nosuch', {})):
            with self.subTest(kind=kind), self.assertRaises(ConfigError):
                analytic_state(kind, params, 0.0, BOX, UNITS)

    def test_plane_wave_must_be_periodic(self):
        with self.assertRaises(ConfigError):
            analytic_state('plane-wave', {'k0': 0.5}, 0.0, RING, UNITS)

    def test_two_dimensional_product_state(self):
        grid = Grid((64, 64), ((-10.0, 10.0), (-10.0, 10.0)))
        psi = analytic_state('harmonic-ground', {'omega': [1.0, 2.0]}, 0.0, grid, UNITS)
        self.assertEqual(psi.values.shape, (64, 64))
        self.assertAlmostEqual(psi.norm(), 1.0, delta=1e-10)


class EvolutionRecordTests(SimpleTestCase):

    def test_times_must_increase(self):
        with self.assertRaises(SolverError):
            EvolutionRecord(RING, UNITS, 0.1, [0.0, 0.0], [np.ones(64), np.ones(64)])

    def test_one_time_per_slice(self):
        with self.assertRaises(SolverError):
            EvolutionRecord(RING, UNITS, 0.1, [0.0], [np.ones(64), np.ones(64)])

    def test_without_neighbours_nothing_is_interior(self):
        record = EvolutionRecord(RING, UNITS, 0.1, [0.0, 1.0], [np.ones(64), np.ones(64)])
        self.assertEqual(record.interior(), [])
        self.assertEqual(len(record.to_dict()['norms']), 2)
