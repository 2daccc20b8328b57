# path: src/qhj_app/traj.py
"""
Guidance-law trajectories dq/dt = grad S / m integrated through the slices of
an EvolutionRecord.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline, RegularGridInterpolator
from scipy.stats import kstest

from .fields import node_mask, phase_gradient_arrays
from .utils import get_setting

logger = logging.getLogger(__name__)


class TrajectoryError(Exception):
    pass


class SeedInNodeError(TrajectoryError):
    pass


class TimeRangeError(TrajectoryError):
    pass


@dataclass
class TrajectorySet:
    """
    Paths of all seeds on one shared time axis. `positions` are wrapped into
    the periodic cell, `windings` count the cell crossings per axis.
    """
    seeds: np.ndarray       # (n, dim)
    times: np.ndarray       # (T,)
    positions: np.ndarray   # (n, T, dim)
    windings: np.ndarray    # (n, T, dim)
    lengths: tuple
    metadata: dict = field(default_factory=dict)

    @property
    def unwrapped(self):
        return self.positions + self.windings * np.asarray(self.lengths)

    def endpoints(self):
        return self.unwrapped[:, -1, :]

    def rows(self):
        """(seed id, t, x[, y], winding per axis) in seed-major order."""
        n, count, dim = self.positions.shape
        for s in range(n):
            for k in range(count):
                yield [s, float(self.times[k])] + [float(v) for v in self.positions[s, k]] + [int(w) for w in self.windings[s, k]]

    def header(self):
        axes = ['x', 'y'][:self.positions.shape[2]]
        return ['seed', 't'] + axes + [f'winding_{a}' for a in axes]

    def to_dict(self):
        return {
            'seeds': self.seeds,
            'times': self.times,
            'positions': self.positions,
            'windings': self.windings,
            'metadata': self.metadata,
        }


class _VelocityField:
    """Cubic-in-space, linear-in-time interpolation of grad S / m over the record slices."""

    def __init__(self, record, threshold, scheme):
        self.record = record
        self.grid = record.grid
        self.times = record.times
        self.threshold = threshold
        self.scheme = scheme
        self._cache = {}

    def _velocity_arrays(self, n):
        psi = self.record.slices[n]
        valid = node_mask(np.abs(psi), self.threshold)
        grad_S = phase_gradient_arrays(psi, self.grid, self.record.constants.hbar, valid, self.scheme)
        return [g / self.record.constants.m for g in grad_S]

    def _interpolant(self, n):
        if n in self._cache:
            return self._cache[n]
        grid = self.grid
        components = self._velocity_arrays(n)
        if grid.dim == 1:
            nodes = np.append(grid.axis(0), grid.extent[0][1])
            spline = CubicSpline(nodes, np.append(components[0], components[0][0]), bc_type='periodic')

            def interpolant(q):
                return spline(q[:, 0])[:, None]
        else:
            pad = 2
            axes = []
            for a in range(2):
                h = grid.spacing[a]
                axes.append(grid.axis(a)[0] + h * np.arange(-pad, grid.points[a] + pad))
            interpolators = [
                RegularGridInterpolator(axes, np.pad(c, pad, mode='wrap'), method='cubic') for c in components
            ]

            def interpolant(q):
                return np.stack([f(q) for f in interpolators], axis=-1)
        self._cache[n] = interpolant
        return interpolant

    def __call__(self, t, positions):
        wrapped, _ = self.grid.wrap(positions)
        last = len(self.times) - 1
        n = int(np.clip(np.searchsorted(self.times, t, side='right') - 1, 0, max(last - 1, 0)))
        if last == 0:
            return self._interpolant(0)(wrapped)
        weight = (t - self.times[n]) / (self.times[n + 1] - self.times[n])
        v0 = self._interpolant(n)(wrapped)
        if weight == 0:
            return v0
        return (1 - weight) * v0 + weight * self._interpolant(n + 1)(wrapped)


def _check_seeds(record, seeds, threshold, start):
    grid = record.grid
    n = int(np.argmin(np.abs(record.times - start)))
    valid = node_mask(np.abs(record.slices[n]), threshold)
    wrapped, _ = grid.wrap(seeds)
    lo = np.array([e[0] for e in grid.extent])
    index = np.rint((wrapped - lo) / np.array(grid.spacing)).astype(int) % np.array(grid.points)
    inside = valid[tuple(index.T)]
    if not np.all(inside):
        bad = seeds[~inside]
        raise SeedInNodeError(f"{len(bad)} seed(s) start in a nodal region, first at {bad[0].tolist()}")


def integrate_trajectories(record, seeds, dt_traj, t_start=None, t_end=None, threshold=None, scheme=None):
    """
    RK4 integration of dq/dt = grad S(q, t) / m for every seed from t_start
    (default: first slice) to t_end (default: last slice). The step is
    shortened so that a whole number of steps spans the interval.
    """
    threshold = get_setting('QHJ_MASK_THRESHOLD', 1e-6) if threshold is None else threshold
    scheme = scheme or get_setting('QHJ_DERIVATIVE_SCHEME', 'spectral')
    grid = record.grid
    seeds = np.asarray(seeds, dtype=float).reshape(-1, grid.dim)
    t_start = float(record.times[0]) if t_start is None else float(t_start)
    t_end = float(record.times[-1]) if t_end is None else float(t_end)
    first, last = float(record.times[0]), float(record.times[-1])
    slack = 1e-9 * max(1.0, abs(first), abs(last))
    if not (first - slack <= t_start <= last + slack and first - slack <= t_end <= last + slack):
        raise TimeRangeError(f"Interval [{t_start}, {t_end}] leaves the recorded range [{first}, {last}]")
    t_start, t_end = min(max(t_start, first), last), min(max(t_end, first), last)
    if t_end < t_start:
        raise TimeRangeError("t_end must not precede t_start")
    if not dt_traj > 0:
        raise TrajectoryError("Trajectory step must be positive")
    _check_seeds(record, seeds, threshold, t_start)

    steps = max(1, math.ceil((t_end - t_start) / dt_traj - 1e-9)) if t_end > t_start else 0
    h = (t_end - t_start) / steps if steps else 0.0
    velocity = _VelocityField(record, threshold, scheme)
    logger.info(f"Integrating {len(seeds)} trajectories over [{t_start}, {t_end}] in {steps} RK4 steps")

    q = seeds.copy()
    times = [t_start]
    path = [q.copy()]
    t = t_start
    for k in range(steps):
        k1 = velocity(t, q)
        k2 = velocity(t + h / 2, q + h / 2 * k1)
        k3 = velocity(t + h / 2, q + h / 2 * k2)
        k4 = velocity(t + h, q + h * k3)
        q = q + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t_start + (k + 1) * h
        times.append(t)
        path.append(q.copy())

    unwrapped = np.stack(path, axis=1)
    positions, windings = grid.wrap(unwrapped)
    return TrajectorySet(
        seeds=seeds,
        times=np.array(times),
        positions=positions,
        windings=windings,
        lengths=grid.lengths,
        metadata={'dt_traj': h, 'steps': steps, 'integrator': 'rk4', 'interpolation': 'cubic', 'scheme': scheme},
    )


def sample_seeds(psi, count, rng):
    """
    Draw `count` positions from |psi|^2: inverse CDF over grid cells in 1D,
    cell choice plus uniform jitter in 2D. `rng` is a numpy Generator.
    """
    grid = psi.grid
    density = np.abs(psi.values) ** 2
    total = density.sum()
    if not total > 0:
        raise SeedInNodeError("Cannot sample seeds from an all-zero wave function")
    h = np.array(grid.spacing)
    if grid.dim == 1:
        cdf = np.concatenate([[0.0], np.cumsum(density) / total])
        edges = grid.axis(0)[0] - h[0] / 2 + h[0] * np.arange(grid.points[0] + 1)
        return np.interp(rng.random(count), cdf, edges)[:, None]
    cells = rng.choice(density.size, size=count, p=(density / total).ravel())
    index = np.stack(np.unravel_index(cells, grid.shape), axis=-1)
    lo = np.array([e[0] for e in grid.extent])
    return lo + h * index + h * (rng.random((count, grid.dim)) - 0.5)


def ks_statistic(positions, cdf):
    """Kolmogorov-Smirnov distance between 1D positions and a reference CDF."""
    return float(kstest(np.ravel(positions), cdf).statistic)


def non_crossing(trajectories):
    """True when the ordering of 1D trajectories by position never changes."""
    if trajectories.positions.shape[2] != 1:
        raise TrajectoryError("Non-crossing is defined for 1D trajectories")
    unwrapped = trajectories.unwrapped[:, :, 0]
    order = np.argsort(unwrapped[:, 0], kind='stable')
    ordered = unwrapped[order]
    return bool(np.all(np.diff(ordered, axis=0) >= 0))
