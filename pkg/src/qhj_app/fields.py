# path: src/qhj_app/fields.py
"""
Sampled fields on periodic 1D/2D grids, spectral and finite-difference
derivatives, the polar decomposition psi = R exp(iS/hbar), the quantum
potential/kinetic terms and the residuals of the derived field equations.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .utils import get_setting, write_csv

logger = logging.getLogger(__name__)

SCHEMES = ('spectral', 'central-2nd')
HJ_EQUATIONS = ('bohm-hj', 'general-hj', 'generalized')
CONTINUITY_EQUATIONS = ('continuity', 'generalized-continuity', 'kg-continuity')
KG_EQUATIONS = ('kg-real', 'kg-final', 'kg-continuity')
EQUATIONS = HJ_EQUATIONS + CONTINUITY_EQUATIONS + ('kg-real', 'kg-final')


class FieldError(Exception):
    pass


class GridMismatch(FieldError):
    pass


class AllZeroWaveFunction(FieldError):
    pass


class MissingSlice(FieldError):
    pass


class UnknownEquation(FieldError):
    pass


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 1.0
    m: float = 1.0
    m0: float = 1.0
    c_light: float = 1.0

    def __post_init__(self):
        for name in ('hbar', 'm', 'c_light'):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise FieldError(f"Physical constant {name} must be positive and finite, got {value}")
        # m0 = 0 is the massless Klein-Gordon field
        if not (math.isfinite(self.m0) and self.m0 >= 0):
            raise FieldError(f"Rest mass m0 must be non-negative and finite, got {self.m0}")

    @classmethod
    def from_settings(cls, **overrides):
        units = dict(get_setting('QHJ_UNITS', {}))
        units.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**{k: float(v) for k, v in units.items()})

    @property
    def rest_frequency(self):
        """m0 c^2 / hbar, the mass term of the Klein-Gordon equation."""
        return self.m0 * self.c_light ** 2 / self.hbar

    def to_dict(self):
        return {'hbar': self.hbar, 'm': self.m, 'm0': self.m0, 'c_light': self.c_light}


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid; points per axis are powers of two, at least 8."""
    points: tuple
    extent: tuple

    def __post_init__(self):
        points = tuple(int(n) for n in self.points)
        extent = tuple((float(lo), float(hi)) for lo, hi in self.extent)
        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'extent', extent)
        if len(points) not in (1, 2) or len(extent) != len(points):
            raise FieldError(f"Grid must be 1D or 2D with one extent per axis, got {points} / {extent}")
        for n in points:
            if n < 8 or n & (n - 1):
                raise FieldError(f"Grid points per axis must be a power of two >= 8, got {n}")
        for lo, hi in extent:
            if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
                raise FieldError(f"Grid extent must satisfy lo < hi, got ({lo}, {hi})")

    @property
    def dim(self):
        return len(self.points)

    @property
    def shape(self):
        return self.points

    @property
    def lengths(self):
        return tuple(hi - lo for lo, hi in self.extent)

    @property
    def spacing(self):
        return tuple(length / n for length, n in zip(self.lengths, self.points))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def axis(self, n):
        lo, hi = self.extent[n]
        return np.linspace(lo, hi, self.points[n], endpoint=False)

    def mesh(self):
        return np.meshgrid(*(self.axis(n) for n in range(self.dim)), indexing='ij')

    def wavenumbers(self, n, drop_nyquist=False):
        k = 2 * np.pi * sfft.fftfreq(self.points[n], d=self.spacing[n])
        if drop_nyquist:
            k[self.points[n] // 2] = 0.0
        shape = [1] * self.dim
        shape[n] = self.points[n]
        return k.reshape(shape)

    def wrap(self, positions):
        """Map positions (..., dim) into the fundamental cell; returns (wrapped, windings)."""
        lo = np.array([e[0] for e in self.extent])
        lengths = np.array(self.lengths)
        windings = np.floor((positions - lo) / lengths)
        return positions - windings * lengths, windings.astype(int)

    def check_same(self, other):
        if self != other:
            raise GridMismatch(f"Grid mismatch: {self.to_dict()} vs {other.to_dict()}")

    def to_dict(self):
        return {'dim': self.dim, 'points': list(self.points), 'extent': [list(e) for e in self.extent]}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data['points']), tuple(tuple(e) for e in data['extent']))


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray
    unit: str = ''
    mask: np.ndarray = None  # True where the value is valid; None means valid everywhere

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != self.grid.shape:
            raise GridMismatch(f"Field shape {self.values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise FieldError("Field values must be finite; masked points carry 0.0")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)

    @property
    def valid(self):
        return np.ones(self.grid.shape, dtype=bool) if self.mask is None else self.mask


@dataclass
class VectorField:
    grid: Grid
    components: list
    unit: str = ''

    def __post_init__(self):
        self.components = [np.asarray(c) for c in self.components]
        if len(self.components) != self.grid.dim or any(c.shape != self.grid.shape for c in self.components):
            raise GridMismatch("Vector field needs one component per grid axis")

    def dot(self, other):
        return sum(a * b for a, b in zip(self.components, other.components))

    def norm_squared(self):
        return sum(c * c for c in self.components)


@dataclass
class WaveFunction:
    grid: Grid
    values: np.ndarray
    time: float = 0.0
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.grid.shape:
            raise GridMismatch(f"Wave function shape {self.values.shape} does not match grid {self.grid.shape}")

    def norm(self):
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.cell_volume)

    def density(self):
        return np.abs(self.values) ** 2


@dataclass
class ResidualReport:
    equation: str
    max_norm: float
    weighted_l2: float
    mask_fraction: float
    time: float = 0.0

    def to_dict(self):
        return {
            'equation': self.equation,
            'max_norm': self.max_norm,
            'weighted_l2': self.weighted_l2,
            'mask_fraction': self.mask_fraction,
            'time': self.time,
        }


@dataclass
class ResidualResult:
    """A report together with the residual field and any auxiliary fields."""
    report: ResidualReport
    residual: ScalarField
    extras: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Derivatives
# ---------------------------------------------------------------------------

def _workers():
    return get_setting('QHJ_THREADS', None)


def _scheme(scheme):
    scheme = scheme or get_setting('QHJ_DERIVATIVE_SCHEME', 'spectral')
    if scheme not in SCHEMES:
        raise FieldError(f"Unknown derivative scheme '{scheme}', expected one of {SCHEMES}")
    return scheme


def _threshold(threshold):
    return float(get_setting('QHJ_MASK_THRESHOLD', 1e-6) if threshold is None else threshold)


def differentiate_array(values, grid, order=1, axis=0, scheme=None):
    """Periodic derivative of a real or complex array along one grid axis."""
    if order < 0:
        raise FieldError("Derivative order must be non-negative")
    if order == 0:
        return values
    if _scheme(scheme) == 'spectral':
        k = grid.wavenumbers(axis, drop_nyquist=order % 2 == 1)
        spectrum = sfft.fft(values, axis=axis, workers=_workers())
        result = sfft.ifft(spectrum * (1j * k) ** order, axis=axis, workers=_workers())
        return result.real if np.isrealobj(values) else result
    h = grid.spacing[axis]
    result = values
    for _ in range(order // 2):
        result = (np.roll(result, -1, axis) - 2 * result + np.roll(result, 1, axis)) / h ** 2
    if order % 2:
        result = (np.roll(result, -1, axis) - np.roll(result, 1, axis)) / (2 * h)
    return result


def derivative(f, order=1, axis=0, scheme=None):
    """Derivative of a ScalarField along `axis`."""
    return ScalarField(f.grid, differentiate_array(f.values, f.grid, order, axis, scheme), f.unit, f.mask)


def gradient_arrays(values, grid, scheme=None):
    return [differentiate_array(values, grid, 1, n, scheme) for n in range(grid.dim)]


def gradient(f, scheme=None):
    return VectorField(f.grid, gradient_arrays(f.values, f.grid, scheme), f.unit)


def laplacian_array(values, grid, scheme=None):
    return sum(differentiate_array(values, grid, 2, n, scheme) for n in range(grid.dim))


def divergence_array(components, grid, scheme=None):
    return sum(differentiate_array(c, grid, 1, n, scheme) for n, c in enumerate(components))


# ---------------------------------------------------------------------------
# Polar decomposition
# ---------------------------------------------------------------------------

def node_mask(amplitude, threshold=None):
    """True where amplitude exceeds threshold * max(amplitude)."""
    peak = float(np.max(amplitude))
    if peak == 0.0:
        raise AllZeroWaveFunction("Wave function vanishes on the whole grid")
    return amplitude > _threshold(threshold) * peak


def _unwrap_from(phase, start):
    """Unwrap a 1D phase outward from index `start`, keeping phase[start]."""
    forward = np.unwrap(phase[start:])
    backward = np.unwrap(phase[start::-1])[::-1]
    return np.concatenate([backward[:-1], forward])


def unwrap_phase(phase, amplitude):
    """Unwrap outward from the amplitude maximum (row first, then columns in 2D)."""
    center = np.unravel_index(int(np.argmax(amplitude)), amplitude.shape)
    if phase.ndim == 1:
        return _unwrap_from(phase, center[0])
    row, col = center
    unwrapped = np.empty_like(phase)
    anchor = _unwrap_from(phase[row, :], col)
    for j in range(phase.shape[1]):
        column = phase[:, j].copy()
        column[row] = anchor[j]
        unwrapped[:, j] = _unwrap_from(column, row)
    return unwrapped


def polar_decompose(psi, threshold=None):
    """
    Split psi into R = |psi| and S = hbar * unwrapped phase. Points where
    R <= threshold * max(R) are flagged in the mask of S; S keeps its unwrapped
    value there so that compose(R, S) reproduces psi everywhere.
    """
    amplitude = np.abs(psi.values)
    valid = node_mask(amplitude, threshold)
    phase = unwrap_phase(np.angle(psi.values), amplitude)
    S = psi.constants.hbar * phase
    masked = 1.0 - valid.mean()
    if masked > 0.5:
        logger.warning(f"polar_decompose: {masked:.1%} of the grid lies below the node threshold")
    return ScalarField(psi.grid, amplitude, 'amplitude'), ScalarField(psi.grid, S, 'action', valid)


def compose(R, S, constants):
    return R.values * np.exp(1j * S.values / constants.hbar)


def phase_gradient_arrays(psi_values, grid, hbar, valid, scheme=None):
    """grad S = hbar Im(conj(psi) grad psi) / |psi|^2, zero where masked."""
    density = np.abs(psi_values) ** 2
    safe = np.where(valid, density, 1.0)
    return [
        np.where(valid, hbar * np.imag(np.conj(psi_values) * d) / safe, 0.0)
        for d in gradient_arrays(psi_values, grid, scheme)
    ]


def phase_gradient(psi, scheme=None, threshold=None):
    valid = node_mask(np.abs(psi.values), threshold)
    return VectorField(psi.grid, phase_gradient_arrays(psi.values, psi.grid, psi.constants.hbar, valid, scheme), 'momentum')


def phase_time_derivative(previous, following, dt, hbar):
    """Branch-safe central difference of S between two wave function slices 2*dt apart."""
    return hbar * np.angle(following * np.conj(previous)) / (2 * dt)


def _safe_divide(numerator, denominator, valid):
    return np.where(valid, numerator / np.where(valid, denominator, 1.0), 0.0)


def quantum_potential(R, constants, scheme=None, threshold=None):
    """QP = -(hbar^2/2m) lap R / R, masked at nodes."""
    valid = node_mask(R.values, threshold)
    lap = laplacian_array(R.values, R.grid, scheme)
    values = -(constants.hbar ** 2 / (2 * constants.m)) * _safe_divide(lap, R.values, valid)
    return ScalarField(R.grid, values, 'energy', valid)


def quantum_kinetic(R, constants, scheme=None, threshold=None):
    """QK = -(hbar^2/2m) |grad R|^2 / R^2, masked at nodes."""
    valid = node_mask(R.values, threshold)
    grad_sq = sum(g * g for g in gradient_arrays(R.values, R.grid, scheme))
    values = -(constants.hbar ** 2 / (2 * constants.m)) * _safe_divide(grad_sq, R.values ** 2, valid)
    return ScalarField(R.grid, values, 'energy', valid)


def masked_norms(residual, amplitude, valid, grid):
    """(max |r|, R^2-weighted RMS of r, excluded fraction) over the valid points."""
    fraction = float(1.0 - valid.mean())
    if not valid.any():
        logger.warning("Residual norms requested on a fully masked grid")
        return 0.0, 0.0, fraction
    r = np.abs(residual[valid])
    weights = amplitude[valid] ** 2
    max_norm = float(np.max(r))
    weighted = float(np.sqrt(np.sum(weights * r * r) / np.sum(weights)))
    return max_norm, weighted, fraction


def _report(equation, residual, amplitude, valid, grid, time):
    values = np.where(valid, residual, 0.0)
    max_norm, weighted, fraction = masked_norms(values, amplitude, valid, grid)
    report = ResidualReport(equation, max_norm, weighted, fraction, float(time))
    logger.debug(f"{equation} residual at t={time}: max={max_norm:.3e} weighted={weighted:.3e}")
    return report, ScalarField(grid, values, 'residual', valid)


def _values(source, grid):
    if source is None:
        return None
    if isinstance(source, ScalarField):
        grid.check_same(source.grid)
        return source.values
    if isinstance(source, WaveFunction):
        grid.check_same(source.grid)
        return source.values
    values = np.asarray(source)
    if values.shape != grid.shape:
        raise GridMismatch(f"Source shape {values.shape} does not match grid {grid.shape}")
    return values


def _vector_values(source, grid):
    if source is None:
        return None
    if isinstance(source, VectorField):
        grid.check_same(source.grid)
        return source.components
    return [_values(c, grid) for c in source]


# ---------------------------------------------------------------------------
# Residuals
# ---------------------------------------------------------------------------

def hj_residual(
    equation, R, S, V=None, constants=None, dS_dt=None, *, previous=None, following=None, dt=None,
    vector_potential=None, a=None, b=None, c=None, scheme=None, threshold=None, time=0.0,
):
    """
    Residual of a Hamilton-Jacobi type equation on one time slice.

    bohm-hj:     dS/dt + |grad S|^2/2m + QP + V
    general-hj:  dS/dt + |grad S|^2/2m + (QP + QK)/2 + Vvec.grad S + V
                 (extras: 'difference' to bohm-hj and its prediction (QK - QP)/2 + Vvec.grad S)
    generalized: dS/dt + |grad S|^2/2m - (hbar^2/8m) lap a / a + b.grad S / a + c / a

    dS/dt is supplied directly or from the wave functions `previous` and
    `following` taken at time -/+ dt.
    """
    if equation not in HJ_EQUATIONS:
        raise UnknownEquation(f"Unknown Hamilton-Jacobi equation '{equation}'")
    constants = constants or PhysicalConstants.from_settings()
    grid = R.grid
    grid.check_same(S.grid)
    hbar, m = constants.hbar, constants.m
    valid = node_mask(R.values, threshold) & S.valid
    psi = compose(R, S, constants)
    grad_S = phase_gradient_arrays(psi, grid, hbar, valid, scheme)
    kinetic = sum(g * g for g in grad_S) / (2 * m)

    if dS_dt is None:
        if previous is None or following is None or dt is None:
            raise MissingSlice(f"{equation} needs dS/dt or the neighbouring slices and their spacing")
        dS_dt = phase_time_derivative(_values(previous, grid), _values(following, grid), dt, hbar)
    dS_dt = _values(dS_dt, grid)
    potential = np.zeros(grid.shape) if V is None else _values(V, grid)
    extras = {}

    if equation == 'generalized':
        if a is None:
            raise FieldError("The generalized equation needs the coefficient field a")
        a_values = _values(a, grid)
        valid = valid & (np.abs(a_values) > _threshold(threshold) * np.max(np.abs(a_values)))
        residual = dS_dt + kinetic - (hbar ** 2 / (8 * m)) * _safe_divide(laplacian_array(a_values, grid, scheme), a_values, valid)
        if b is not None:
            residual = residual + _safe_divide(sum(bc * g for bc, g in zip(_vector_values(b, grid), grad_S)), a_values, valid)
        if c is not None:
            residual = residual + _safe_divide(_values(c, grid), a_values, valid)
    else:
        qp = quantum_potential(R, constants, scheme, threshold).values
        bohm = dS_dt + kinetic + qp + potential
        if equation == 'bohm-hj':
            residual = bohm
        else:
            qk = quantum_kinetic(R, constants, scheme, threshold).values
            drift = np.zeros(grid.shape)
            if vector_potential is not None:
                drift = sum(vc * g for vc, g in zip(_vector_values(vector_potential, grid), grad_S))
            residual = dS_dt + kinetic + 0.5 * (qp + qk) + drift + potential
            extras['difference'] = ScalarField(grid, np.where(valid, residual - bohm, 0.0), 'energy', valid)
            extras['predicted'] = ScalarField(grid, np.where(valid, 0.5 * (qk - qp) + drift, 0.0), 'energy', valid)
            extras['QP'] = ScalarField(grid, np.where(valid, qp, 0.0), 'energy', valid)
            extras['QK'] = ScalarField(grid, np.where(valid, qk, 0.0), 'energy', valid)

    report, residual_field = _report(equation, residual, R.values, valid, grid, time)
    return ResidualResult(report, residual_field, extras)


def continuity_residual(
    equation, R, S, constants=None, dR2_dt=None, *, previous=None, following=None, dt=None,
    a=None, b=None, da_dt=None, kg_state=None, scheme=None, threshold=None, time=0.0,
):
    """
    Residual of a continuity equation on one time slice.

    continuity:             d(R^2)/dt + div(R^2 grad S)/m
    generalized-continuity: da/dt + div(a grad S)/m + div b
    kg-continuity:          delegated to kg_residual with kg_state = (phi, dphi/dt)
                            or (phi, dphi/dt, d2phi/dt2)

    Time derivatives are supplied directly or from the R (or a) fields of the
    slices `previous` and `following` at time -/+ dt.
    """
    if equation not in CONTINUITY_EQUATIONS:
        raise UnknownEquation(f"Unknown continuity equation '{equation}'")
    constants = constants or PhysicalConstants.from_settings()
    if equation == 'kg-continuity':
        if kg_state is None:
            raise MissingSlice("kg-continuity needs the field and its time derivative")
        phi, phi_t, *second = kg_state
        return kg_residual(
            equation, phi, phi_t, constants, *second, previous=previous, following=following, dt=dt,
            scheme=scheme, threshold=threshold, time=time,
        )
    grid = R.grid
    grid.check_same(S.grid)
    hbar, m = constants.hbar, constants.m
    valid = node_mask(R.values, threshold) & S.valid
    psi = compose(R, S, constants)

    def central(source_name, supplied, square):
        if supplied is not None:
            return _values(supplied, grid)
        if previous is None or following is None or dt is None:
            raise MissingSlice(f"{equation} needs {source_name} or the neighbouring slices and their spacing")
        before, after = _values(previous, grid), _values(following, grid)
        if square:
            before, after = np.abs(before) ** 2, np.abs(after) ** 2
        return (after - before) / (2 * dt)

    if equation == 'continuity':
        rate = central('d(R^2)/dt', dR2_dt, square=True)
        flux = hbar * np.imag(np.conj(psi) * laplacian_array(psi, grid, scheme)) / m
        residual = rate + flux
    else:
        if a is None:
            raise FieldError("The generalized continuity equation needs the coefficient field a")
        a_values = _values(a, grid)
        rate = central('da/dt', da_dt, square=False)
        # the flux is differentiated, so grad S is only cut where psi vanishes
        grad_S = phase_gradient_arrays(psi, grid, hbar, np.abs(psi) > 0, scheme)
        residual = rate + divergence_array([a_values * g / m for g in grad_S], grid, scheme)
        if b is not None:
            residual = residual + divergence_array(_vector_values(b, grid), grid, scheme)

    report, residual_field = _report(equation, residual, R.values, valid, grid, time)
    return ResidualResult(report, residual_field)


def kg_residual(
    equation, phi, phi_t, constants=None, phi_tt=None, *, previous=None, following=None, dt=None,
    scheme=None, threshold=None, time=0.0,
):
    """
    Klein-Gordon residuals from the field phi and its time derivatives, with
    x0 = c t and signature (+,-,-,-). phi_tt is supplied directly or taken as
    the second difference of the fields `previous` and `following` at -/+ dt.

    kg-real:       dS.dS/2m0 - m0 c^2/2 - (hbar^2/2m0) box R / R
    kg-final:      dS.dS/2m0 - m0 c^2/2 - (hbar^2/4m0) (box R / R + dR.dR / R^2)
    kg-continuity: d^mu (R^2 d_mu S)
    """
    if equation not in KG_EQUATIONS:
        raise UnknownEquation(f"Unknown Klein-Gordon equation '{equation}'")
    constants = constants or PhysicalConstants.from_settings()
    grid = phi.grid if isinstance(phi, (WaveFunction, ScalarField)) else None
    if grid is None:
        raise FieldError("kg_residual needs phi as a WaveFunction")
    hbar, m0, c = constants.hbar, constants.m0, constants.c_light
    if m0 == 0 and equation != 'kg-continuity':
        raise FieldError(f"{equation} divides by the rest mass; it is undefined for m0 = 0")
    f = np.asarray(phi.values, dtype=complex)
    f_t = np.asarray(_values(phi_t, grid), dtype=complex)
    if phi_tt is not None:
        f_tt = np.asarray(_values(phi_tt, grid), dtype=complex)
    elif previous is not None and following is not None and dt is not None:
        f_tt = (_values(following, grid) - 2 * f + _values(previous, grid)) / dt ** 2
    else:
        raise MissingSlice(f"{equation} needs d2phi/dt2 or the neighbouring fields and their spacing")
    amplitude = np.abs(f)
    valid = node_mask(amplitude, threshold)
    density = np.where(valid, amplitude ** 2, 1.0)
    safe_amplitude = np.sqrt(density)

    grad_f = gradient_arrays(f, grid, scheme)
    lap_f = laplacian_array(f, grid, scheme)

    grad_S = [hbar * np.imag(np.conj(f) * g) / density for g in grad_f]
    grad_R = [np.real(np.conj(f) * g) / safe_amplitude for g in grad_f]
    S_t = hbar * np.imag(np.conj(f) * f_t) / density
    R_t = np.real(np.conj(f) * f_t) / safe_amplitude
    grad_R_sq = sum(g * g for g in grad_R)
    lap_R = (sum(np.abs(g) ** 2 for g in grad_f) + np.real(np.conj(f) * lap_f) - grad_R_sq) / safe_amplitude
    R_tt = (np.abs(f_t) ** 2 + np.real(np.conj(f) * f_tt) - R_t ** 2) / safe_amplitude

    dS_dS = S_t ** 2 / c ** 2 - sum(g * g for g in grad_S)
    box_R = R_tt / c ** 2 - lap_R
    dR_dR = R_t ** 2 / c ** 2 - grad_R_sq

    if equation == 'kg-real':
        residual = dS_dS / (2 * m0) - m0 * c ** 2 / 2 - (hbar ** 2 / (2 * m0)) * box_R / safe_amplitude
    elif equation == 'kg-final':
        residual = (
            dS_dS / (2 * m0) - m0 * c ** 2 / 2
            - (hbar ** 2 / (4 * m0)) * (box_R / safe_amplitude + dR_dR / density)
        )
    else:
        residual = hbar * np.imag(np.conj(f) * f_tt) / c ** 2 - hbar * np.imag(np.conj(f) * lap_f)

    report, residual_field = _report(equation, residual, amplitude, valid, grid, time)
    return ResidualResult(report, residual_field)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def _coordinate_columns(grid):
    return [axis.ravel() for axis in grid.mesh()]


def field_rows(grid, columns):
    """Rows of (coordinates..., values...) in row-major grid order."""
    coords = _coordinate_columns(grid)
    flat = [np.asarray(c).ravel() for c in columns]
    for n in range(int(np.prod(grid.shape))):
        yield [float(c[n]) for c in coords] + [float(v[n]) for v in flat]


def write_field_csv(path, grid, named_columns):
    """Write named real-valued arrays sampled on `grid` as one CSV row per grid point."""
    axes = ['x', 'y'][:grid.dim]
    header = axes + list(named_columns)
    return write_csv(path, header, field_rows(grid, list(named_columns.values())))


def field_to_json(grid, named_columns, **metadata):
    """JSON container: grid metadata and flat row-major value arrays."""
    payload = {'grid': grid.to_dict(), 'fields': {name: np.asarray(v).ravel() for name, v in named_columns.items()}}
    payload.update(metadata)
    return payload
