# path: src/qhj_app/solvers.py
"""
Reference wave functions and time evolution: closed-form states, a Strang
split-step Schroedinger propagator and a velocity-Verlet Klein-Gordon stepper.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .fields import Grid, PhysicalConstants, WaveFunction, laplacian_array
from .utils import get_setting

logger = logging.getLogger(__name__)

SOLVERS = ('tdse', 'kg')
POTENTIAL_KINDS = ('free', 'harmonic', 'custom')
ANALYTIC_KINDS = ('free-gaussian', 'harmonic-ground', 'harmonic-coherent', 'plane-wave', 'kg-plane-wave')
INITIAL_KINDS = ANALYTIC_KINDS + ('sampled',)


class SolverError(Exception):
    pass


class ConfigError(SolverError):
    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = errors or {}


class StabilityError(SolverError):
    pass


class NaNDetected(SolverError):
    def __init__(self, step):
        super().__init__(f"Non-finite values in the wave function after step {step}")
        self.step = step


# ---------------------------------------------------------------------------
# Configuration types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialSpec:
    kind: str = 'free'
    omega: float = 1.0
    values: tuple = None  # flat row-major samples for kind 'custom'

    def sample(self, grid, constants):
        if self.kind == 'free':
            return np.zeros(grid.shape)
        if self.kind == 'harmonic':
            r2 = sum(x ** 2 for x in grid.mesh())
            return 0.5 * constants.m * self.omega ** 2 * r2
        if self.kind == 'custom':
            values = np.asarray(self.values, dtype=float)
            if values.size != int(np.prod(grid.shape)):
                raise ConfigError(f"Custom potential has {values.size} samples, grid needs {int(np.prod(grid.shape))}")
            return values.reshape(grid.shape)
        raise ConfigError(f"Unknown potential kind '{self.kind}'")

    def to_dict(self):
        data = {'kind': self.kind}
        if self.kind == 'harmonic':
            data['omega'] = self.omega
        if self.kind == 'custom':
            data['values'] = list(self.values)
        return data


@dataclass(frozen=True)
class InitialStateSpec:
    kind: str
    params: dict = field(default_factory=dict)
    values: tuple = None           # flat complex samples for kind 'sampled'
    time_derivative: tuple = None  # flat complex samples of dphi/dt (Klein-Gordon, sampled)

    def to_dict(self):
        data = {'kind': self.kind, 'params': dict(self.params)}
        if self.values is not None:
            data['real'] = [v.real for v in self.values]
            data['imag'] = [v.imag for v in self.values]
        if self.time_derivative is not None:
            data['dt_real'] = [v.real for v in self.time_derivative]
            data['dt_imag'] = [v.imag for v in self.time_derivative]
        return data


@dataclass(frozen=True)
class ScenarioConfig:
    grid: Grid
    constants: PhysicalConstants
    potential: PotentialSpec
    initial_state: InitialStateSpec
    dt: float
    steps: int
    output_stride: int = 10
    solver: str = 'tdse'
    scheme: str = 'spectral'
    mask_threshold: float = 1e-6
    checks: dict = field(default_factory=dict)
    name: str = ''
    description: str = ''
    vector_potential: tuple = None  # static Vvec components, flat row-major, residuals only

    def vector_potential_arrays(self):
        if self.vector_potential is None:
            return None
        return [np.asarray(c, dtype=float).reshape(self.grid.shape) for c in self.vector_potential]

    def to_dict(self):
        return {
            'name': self.name,
            'description': self.description,
            'solver': self.solver,
            'grid': self.grid.to_dict(),
            'constants': self.constants.to_dict(),
            'potential': self.potential.to_dict(),
            'initial_state': self.initial_state.to_dict(),
            'dt': self.dt,
            'steps': self.steps,
            'output_stride': self.output_stride,
            'scheme': self.scheme,
            'mask_threshold': self.mask_threshold,
            'checks': dict(self.checks),
            'vector_potential': None if self.vector_potential is None else [list(c) for c in self.vector_potential],
        }


@dataclass
class EvolutionRecord:
    """
    Recorded slices of an evolution. For every slice `before`/`after` hold the
    state one solver step earlier/later (None where unavailable); Klein-Gordon
    records carry dphi/dt in `rates`.
    """
    grid: Grid
    constants: PhysicalConstants
    dt: float
    times: np.ndarray
    slices: list
    before: list = None
    after: list = None
    rates: list = None
    solver: str = 'tdse'
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) != len(self.slices):
            raise SolverError("Record needs one time stamp per slice")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise SolverError("Record time stamps must be strictly increasing")

    def __len__(self):
        return len(self.slices)

    def wave_function(self, n):
        return WaveFunction(self.grid, self.slices[n], float(self.times[n]), self.constants)

    def neighbours(self, n):
        """(previous, following) states one solver step apart, or None."""
        if self.before is None or self.after is None:
            return None
        if self.before[n] is None or self.after[n] is None:
            return None
        return self.before[n], self.after[n]

    def interior(self):
        return [n for n in range(len(self)) if self.neighbours(n) is not None]

    def to_dict(self):
        return {
            'solver': self.solver,
            'grid': self.grid.to_dict(),
            'constants': self.constants.to_dict(),
            'dt': self.dt,
            'times': self.times,
            'norms': [float(np.sum(np.abs(s) ** 2) * self.grid.cell_volume) for s in self.slices],
            'metadata': self.metadata,
        }


# ---------------------------------------------------------------------------
# Closed-form states
# ---------------------------------------------------------------------------

def _axis_param(params, name, axis, default=None):
    value = params.get(name, default)
    if value is None:
        raise ConfigError(f"Analytic state parameter '{name}' is required")
    if isinstance(value, (list, tuple)):
        return float(value[axis])
    return float(value)


def _check_on_grid(k, grid, axis, label):
    turns = k * grid.lengths[axis] / (2 * np.pi)
    if abs(turns - round(turns)) > 1e-9:
        raise ConfigError(f"{label} wavenumber {k} is not periodic on the grid axis {axis}")


def _gaussian_1d(x, t, params, axis, constants):
    hbar, m = constants.hbar, constants.m
    sigma0 = _axis_param(params, 'sigma0', axis, 1.0)
    if sigma0 <= 0:
        raise ConfigError(f"free-gaussian needs sigma0 > 0, got {sigma0}")
    k0 = _axis_param(params, 'k0', axis, 0.0)
    x0 = _axis_param(params, 'x0', axis, 0.0)
    alpha = 1 + 1j * hbar * t / (2 * m * sigma0 ** 2)
    beta = 4 * sigma0 ** 2 * alpha
    u = x - x0 - hbar * k0 * t / m
    psi = (
        (2 * np.pi * sigma0 ** 2) ** -0.25 / np.sqrt(alpha)
        * np.exp(-u ** 2 / beta + 1j * k0 * (x - x0) - 1j * hbar * k0 ** 2 * t / (2 * m))
    )
    g = -2 * u / beta + 1j * k0
    psi_t = (1j * hbar / (2 * m)) * (g ** 2 - 2 / beta) * psi
    return psi, psi_t


def _harmonic_1d(x, t, params, axis, constants, coherent):
    hbar, m = constants.hbar, constants.m
    omega = _axis_param(params, 'omega', axis, 1.0)
    if omega <= 0:
        raise ConfigError(f"Harmonic states need omega > 0, got {omega}")
    x0 = _axis_param(params, 'x0', axis, 0.0) if coherent else 0.0
    xc = x0 * np.cos(omega * t)
    pc = -m * omega * x0 * np.sin(omega * t)
    dxc, dpc = pc / m, -m * omega ** 2 * xc
    norm = (m * omega / (np.pi * hbar)) ** 0.25
    exponent = (
        -m * omega * (x - xc) ** 2 / (2 * hbar) + 1j * pc * x / hbar
        - 1j * omega * t / 2 - 1j * pc * xc / (2 * hbar)
    )
    psi = norm * np.exp(exponent)
    exponent_t = (
        m * omega * (x - xc) * dxc / hbar + 1j * dpc * x / hbar
        - 1j * omega / 2 - 1j * (dpc * xc + pc * dxc) / (2 * hbar)
    )
    return psi, exponent_t * psi


def _plane_wave_1d(x, t, params, axis, grid, constants):
    k0 = _axis_param(params, 'k0', axis, 0.0)
    _check_on_grid(k0, grid, axis, 'Plane-wave')
    psi = grid.lengths[axis] ** -0.5 * np.exp(1j * k0 * x - 1j * constants.hbar * k0 ** 2 * t / (2 * constants.m))
    return psi, (-1j * constants.hbar * k0 ** 2 / (2 * constants.m)) * psi


def _kg_plane_wave(grid, params, t, constants):
    hbar, c, m0 = constants.hbar, constants.c_light, constants.m0
    momenta = [_axis_param(params, 'p', n, 0.0) for n in range(grid.dim)]
    for n, p in enumerate(momenta):
        _check_on_grid(p / hbar, grid, n, 'Klein-Gordon plane-wave')
    energy = np.sqrt(sum(p ** 2 for p in momenta) * c ** 2 + m0 ** 2 * c ** 4)
    phase = sum(p * x for p, x in zip(momenta, grid.mesh())) - energy * t
    volume = float(np.prod(grid.lengths))
    phi = volume ** -0.5 * np.exp(1j * phase / hbar)
    return phi, (-1j * energy / hbar) * phi


def _analytic(kind, params, t, grid, constants):
    if kind not in ANALYTIC_KINDS:
        raise ConfigError(f"Unknown analytic state kind '{kind}'")
    if kind == 'kg-plane-wave':
        return _kg_plane_wave(grid, params, t, constants)
    psi, psi_t = None, None
    for axis, x in enumerate(grid.mesh()):
        if kind == 'free-gaussian':
            factor, factor_t = _gaussian_1d(x, t, params, axis, constants)
        elif kind == 'plane-wave':
            factor, factor_t = _plane_wave_1d(x, t, params, axis, grid, constants)
        else:
            factor, factor_t = _harmonic_1d(x, t, params, axis, constants, coherent=kind == 'harmonic-coherent')
        if psi is None:
            psi, psi_t = factor, factor_t
        else:
            psi, psi_t = psi * factor, psi_t * factor + psi * factor_t
    return psi, psi_t


def analytic_state(kind, params, t, grid, constants=None):
    """Closed-form wave function sampled on the grid at time t."""
    constants = constants or PhysicalConstants.from_settings()
    psi, _ = _analytic(kind, params, t, grid, constants)
    return WaveFunction(grid, psi, float(t), constants)


def analytic_time_derivative(kind, params, t, grid, constants=None):
    """Closed-form d(psi)/dt on the grid at time t."""
    constants = constants or PhysicalConstants.from_settings()
    _, psi_t = _analytic(kind, params, t, grid, constants)
    return psi_t


def initial_arrays(config):
    """(psi, dpsi/dt or None) of the configured initial state at t = 0."""
    spec = config.initial_state
    if spec.kind == 'sampled':
        psi = np.asarray(spec.values, dtype=complex).reshape(config.grid.shape)
        rate = None
        if spec.time_derivative is not None:
            rate = np.asarray(spec.time_derivative, dtype=complex).reshape(config.grid.shape)
        return psi, rate
    return _analytic(spec.kind, spec.params, 0.0, config.grid, config.constants)


# ---------------------------------------------------------------------------
# Schroedinger: Strang split-step
# ---------------------------------------------------------------------------

class SplitStepPropagator:
    """
    Strang splitting exp(-iV dt/2hbar) exp(-iT dt/hbar) exp(-iV dt/2hbar) with
    the kinetic factor applied in Fourier space. Negative dt runs backwards.
    """

    def __init__(self, grid, constants, potential, dt):
        self.grid = grid
        self.constants = constants
        self.V = np.asarray(potential, dtype=float)
        if self.V.shape != grid.shape:
            raise ConfigError("Potential shape does not match the grid")
        self._workers = get_setting('QHJ_THREADS', None)
        self.set_timestep(dt)

    def set_timestep(self, dt):
        hbar, m = self.constants.hbar, self.constants.m
        self.dt = dt
        self._exp_potential = np.exp(-0.5j * (dt / hbar) * self.V)
        k2 = sum(self.grid.wavenumbers(n) ** 2 for n in range(self.grid.dim))
        self._exp_kinetic = np.exp(-1j * hbar * k2 * dt / (2 * m))

    def __call__(self, psi):
        psi_k = sfft.fftn(psi * self._exp_potential, workers=self._workers)
        return sfft.ifftn(psi_k * self._exp_kinetic, workers=self._workers) * self._exp_potential


def propagate_tdse(psi0, grid, constants, potential, dt, steps, stride=1):
    """
    Evolve psi0 for `steps` steps. Returns (times, slices, before, after)
    with a slice every `stride` steps (t = 0 included).
    """
    if steps < 0 or stride < 1:
        raise ConfigError("steps must be >= 0 and stride >= 1")
    step = SplitStepPropagator(grid, constants, potential, dt)
    psi = np.asarray(psi0, dtype=complex)
    times, slices, before, after = [0.0], [psi], [None], [None]
    awaiting = True
    for n in range(1, steps + 1):
        previous, psi = psi, step(psi)
        if not np.all(np.isfinite(psi)):
            raise NaNDetected(n)
        if awaiting:
            after[-1] = psi
            awaiting = False
        if n % stride == 0:
            times.append(n * dt)
            slices.append(psi)
            before.append(previous)
            after.append(None)
            awaiting = True
    return np.array(times), slices, before, after


def solve_tdse(config):
    """Strang split-step evolution of the configured scenario."""
    if config.solver != 'tdse':
        raise ConfigError(f"Scenario '{config.name}' is not a Schroedinger scenario")
    psi0, _ = initial_arrays(config)
    potential = config.potential.sample(config.grid, config.constants)
    logger.info(
        f"TDSE: {config.steps} steps of dt={config.dt} on grid {config.grid.points}, "
        f"recording every {config.output_stride}"
    )
    times, slices, before, after = propagate_tdse(
        psi0, config.grid, config.constants, potential, config.dt, config.steps, config.output_stride,
    )
    record = EvolutionRecord(
        config.grid, config.constants, config.dt, times, slices, before, after,
        solver='tdse', metadata={'scenario': config.name, 'potential': config.potential.to_dict()},
    )
    logger.info(f"TDSE: recorded {len(record)} slices, final norm {record.wave_function(-1).norm():.15f}")
    return record


# ---------------------------------------------------------------------------
# Klein-Gordon: velocity Verlet
# ---------------------------------------------------------------------------

def _max_eigenvalue(grid, scheme):
    # largest eigenvalue of -lap on the grid
    if scheme == 'spectral':
        return sum((np.pi / s) ** 2 for s in grid.spacing)
    return sum(4 / s ** 2 for s in grid.spacing)


def kg_stability_limit(grid, constants, scheme='spectral'):
    """Largest stable dt: dt <= h/c and dt^2 (c^2 lambda_max + mu^2) < 4."""
    h = min(grid.spacing)
    lam = _max_eigenvalue(grid, scheme)
    verlet = 2 / np.sqrt(constants.c_light ** 2 * lam + constants.rest_frequency ** 2)
    return min(h / constants.c_light, verlet)


def _kg_acceleration(phi, grid, constants, scheme):
    return constants.c_light ** 2 * laplacian_array(phi, grid, scheme) - constants.rest_frequency ** 2 * phi


class LeapfrogKleinGordon:
    """Velocity-Verlet stepping of phi_tt = c^2 lap phi - mu^2 phi on (phi, phi_t)."""

    def __init__(self, grid, constants, dt, scheme='spectral'):
        limit = kg_stability_limit(grid, constants, scheme)
        courant = min(grid.spacing) / constants.c_light
        verlet = dt ** 2 * (constants.c_light ** 2 * _max_eigenvalue(grid, scheme) + constants.rest_frequency ** 2)
        if not (0 < dt <= courant and verlet < 4):
            raise StabilityError(f"Klein-Gordon time step {dt} exceeds the stability limit {limit}")
        self.grid = grid
        self.constants = constants
        self.dt = dt
        self.scheme = scheme

    def __call__(self, phi, phi_t, acceleration=None):
        dt = self.dt
        if acceleration is None:
            acceleration = _kg_acceleration(phi, self.grid, self.constants, self.scheme)
        half = phi_t + 0.5 * dt * acceleration
        phi = phi + dt * half
        acceleration = _kg_acceleration(phi, self.grid, self.constants, self.scheme)
        return phi, half + 0.5 * dt * acceleration, acceleration


def kg_energy(phi, phi_t, grid, constants, dt=None, scheme='spectral'):
    """
    0.5 * sum h^d (|phi_t|^2 + c^2 |grad phi|^2 + mu^2 |phi|^2). With `dt`
    the quadratic form conserved exactly by the Verlet scheme is returned,
    which subtracts (dt^2/4) |K phi|^2 for K = -c^2 lap + mu^2.
    """
    k_phi = -_kg_acceleration(phi, grid, constants, scheme)
    energy = np.sum(np.abs(phi_t) ** 2) + np.real(np.sum(np.conj(phi) * k_phi))
    if dt is not None:
        energy -= dt ** 2 / 4 * np.sum(np.abs(k_phi) ** 2)
    return 0.5 * float(energy) * grid.cell_volume


def solve_kg(config):
    """Velocity-Verlet evolution of the configured Klein-Gordon scenario."""
    if config.solver != 'kg':
        raise ConfigError(f"Scenario '{config.name}' is not a Klein-Gordon scenario")
    phi, phi_t = initial_arrays(config)
    if phi_t is None:
        raise ConfigError("Klein-Gordon scenarios need the initial time derivative")
    stepper = LeapfrogKleinGordon(config.grid, config.constants, config.dt, config.scheme)
    logger.info(f"KG: {config.steps} steps of dt={config.dt} on grid {config.grid.points}")
    times, slices, rates, before, after = [0.0], [phi], [phi_t], [None], [None]
    energies = [kg_energy(phi, phi_t, config.grid, config.constants, config.dt, config.scheme)]
    acceleration = None
    awaiting = True
    for n in range(1, config.steps + 1):
        previous = phi
        phi, phi_t, acceleration = stepper(phi, phi_t, acceleration)
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(phi_t))):
            raise NaNDetected(n)
        if awaiting:
            after[-1] = phi
            awaiting = False
        if n % config.output_stride == 0:
            times.append(n * config.dt)
            slices.append(phi)
            rates.append(phi_t)
            before.append(previous)
            after.append(None)
            awaiting = True
            energies.append(kg_energy(phi, phi_t, config.grid, config.constants, config.dt, config.scheme))
    drift = max(abs(e - energies[0]) for e in energies) / (abs(energies[0]) or 1.0)
    logger.info(f"KG: recorded {len(slices)} slices, relative energy drift {drift:.3e}")
    return EvolutionRecord(
        config.grid, config.constants, config.dt, times, slices, before, after, rates=rates, solver='kg',
        metadata={'scenario': config.name, 'energies': energies, 'energy_drift': drift},
    )


def measure_frequency(record, point=None):
    """Angular frequency from a linear fit of the unwrapped phase at one grid point."""
    point = point if point is not None else tuple(n // 2 for n in record.grid.shape)
    phase = np.unwrap([np.angle(s[point]) for s in record.slices])
    slope = np.polyfit(record.times, phase, 1)[0]
    return -float(slope)


def solve(config):
    return solve_tdse(config) if config.solver == 'tdse' else solve_kg(config)
