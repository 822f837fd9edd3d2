"""Shared domain types: time grids, particle clouds, measure paths, paired data.

All particle arrays are C-contiguous ``float64`` with shape ``(n, d)``; one
row per particle.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

MVMP_MAGIC = b"MVMP"
MVMP_VERSION = 1
_MVMP_HEADER = struct.Struct("<4sIIQQd")

# relative guard so that t = k*h computed in floating point maps to index k
LOOKUP_EPS = 1e-9


class EmptyMeasureError(ValueError):
    pass


class TimeRangeError(ValueError):
    pass


def as_states(x, dim: Optional[int] = None) -> np.ndarray:
    """Coerce ``x`` into an ``(n, d)`` float64 array.

    A 1-D input is read as ``n`` scalar states when ``dim`` is 1 or None,
    otherwise as a single ``d``-vector.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        if dim is None or dim == 1:
            arr = arr.reshape(-1, 1)
        else:
            arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"expected an (n, d) array, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"expected dimension {dim}, got {arr.shape[1]}")
    return np.ascontiguousarray(arr)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k*h`` on ``[0, t_end]`` with ``steps`` intervals.

    ``h`` is normally ``t_end / steps``; it may be given explicitly so that a
    grid reloaded from a file keeps the exact stored step.
    """

    t_end: float
    steps: int
    h: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be a positive integer")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ValueError("t_end must be positive and finite")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "t_end", float(self.t_end))
        if self.h is None:
            object.__setattr__(self, "h", self.t_end / self.steps)
        else:
            object.__setattr__(self, "h", float(self.h))
        if not self.h > 0:
            raise ValueError("grid step must be positive")

    @classmethod
    def from_step(cls, h: float, t_end: float) -> "TimeGrid":
        """Grid with step ``h`` reaching ``t_end``; ``t_end/h`` must be integral."""
        ratio = t_end / h
        steps = int(round(ratio))
        if steps < 1 or abs(ratio - steps) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"horizon {t_end} is not an integer multiple of step {h}")
        return cls(t_end, steps)

    @property
    def n_points(self) -> int:
        return self.steps + 1

    def time(self, k: int) -> float:
        if k == self.steps:
            return self.t_end
        return k * self.h

    def points(self) -> np.ndarray:
        t = np.arange(self.n_points, dtype=np.float64) * self.h
        t[-1] = self.t_end
        return t

    def index_at(self, t: float) -> int:
        """Index of the grid point at or before ``t`` (floor with epsilon guard)."""
        if not (0.0 <= t <= self.t_end * (1 + LOOKUP_EPS)):
            raise TimeRangeError(f"time out of range: t={t} not in [0, {self.t_end}]")
        return min(int(math.floor(t / self.h + LOOKUP_EPS)), self.steps)


class EmpiricalMeasure:
    """Uniform-weight atomic measure on a particle cloud."""

    __slots__ = ("particles",)

    def __init__(self, particles, dim: Optional[int] = None):
        arr = as_states(particles, dim)
        if arr.shape[0] == 0:
            raise EmptyMeasureError("empty measure")
        self.particles = _frozen(arr)

    @property
    def size(self) -> int:
        return self.particles.shape[0]

    @property
    def dim(self) -> int:
        return self.particles.shape[1]

    def expect(self, f: Callable[[np.ndarray], np.ndarray]):
        return measure_expect(self, f)

    def mean(self) -> np.ndarray:
        return self.particles.mean(axis=0)

    def __repr__(self):
        return f"EmpiricalMeasure(size={self.size}, dim={self.dim})"


def measure_expect(mu: EmpiricalMeasure, f: Callable[[np.ndarray], np.ndarray]):
    """Average of the observable ``f`` over the particles of ``mu``.

    ``f`` is applied to the whole ``(n, d)`` particle array at once and must
    return one value per particle (shape ``(n,)`` or ``(n, 1)``), or one
    vector per particle (shape ``(n, k)``), in which case the mean vector is
    returned.
    """
    if mu is None or mu.size == 0:
        raise EmptyMeasureError("empty measure")
    vals = np.asarray(f(mu.particles), dtype=np.float64)
    n = mu.size
    if vals.ndim == 0:
        return float(vals)
    if vals.shape[0] != n:
        raise ValueError("observable must return one value per particle")
    if vals.ndim == 1 or (vals.ndim == 2 and vals.shape[1] == 1):
        return float(vals.reshape(n).sum() / n)
    return vals.sum(axis=0) / n


class ParticleEnsemble:
    """Mutable-free snapshot of ``count`` particle states in ``R^dim``."""

    __slots__ = ("states",)

    def __init__(self, states, dim: Optional[int] = None):
        arr = as_states(states, dim)
        if not np.all(np.isfinite(arr)):
            raise ValueError("ensemble contains non-finite states")
        self.states = _frozen(arr)

    @property
    def count(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def to_measure(self) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.states)

    @classmethod
    def from_measure(cls, mu: EmpiricalMeasure) -> "ParticleEnsemble":
        return cls(mu.particles)


@dataclass(frozen=True)
class ModelSpec:
    """Coefficients of a McKean-Vlasov SDE, vectorised over particles.

    drift(t, X, mu) -> (n, d)
    diffusion(t, X, mu) -> (n, d, d)
    initial_sampler(rng, n) -> (n, d); row m is particle m's initial state
    post_step(X) -> (n, d); optional state-space projection, idempotent
    random_drift(t, X, mu, Z) -> (n, d); optional drift term whose random
        coefficient is redrawn every step from ``Z``, an ``(n, random_dim)``
        block of standard normals taken from each particle's own stream
    """

    name: str
    dim: int
    drift: Callable[[float, np.ndarray, EmpiricalMeasure], np.ndarray]
    diffusion: Callable[[float, np.ndarray, EmpiricalMeasure], np.ndarray]
    initial_sampler: Callable[[np.random.Generator, int], np.ndarray]
    post_step: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: dict = field(default_factory=dict)
    random_drift: Optional[Callable[..., np.ndarray]] = None
    random_dim: int = 0


class MeasurePath:
    """Empirical measures on a uniform time grid.

    ``snapshots`` has shape ``(steps + 1, n_particles, dim)``.
    """

    def __init__(self, grid: TimeGrid, snapshots, seed: Optional[int] = None,
                 model: Optional[str] = None):
        snaps = np.asarray(snapshots, dtype=np.float64)
        if snaps.ndim != 3:
            raise ValueError("snapshots must have shape (K+1, M, d)")
        if snaps.shape[0] != grid.n_points:
            raise ValueError(
                f"grid has {grid.n_points} points but {snaps.shape[0]} snapshots given")
        if snaps.shape[1] < 1:
            raise EmptyMeasureError("empty measure")
        self.grid = grid
        self.snapshots = _frozen(snaps)
        self.seed = seed
        self.model = model

    @property
    def n_particles(self) -> int:
        return self.snapshots.shape[1]

    @property
    def dim(self) -> int:
        return self.snapshots.shape[2]

    def __len__(self):
        return self.snapshots.shape[0]

    def measure(self, k: int) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.snapshots[k])

    def lookup(self, t: float) -> EmpiricalMeasure:
        return measure_lookup(self, t)

    def save(self, path) -> None:
        write_mvmp(self, path)

    @classmethod
    def load(cls, path) -> "MeasurePath":
        return read_mvmp(path)


def measure_lookup(path: MeasurePath, t: float) -> EmpiricalMeasure:
    """Snapshot at the last grid point not after ``t``."""
    return path.measure(path.grid.index_at(t))


def constant_path(measure: EmpiricalMeasure, t_end: float, steps: int = 1) -> MeasurePath:
    """A measure path frozen at ``measure`` for all times in ``[0, t_end]``."""
    grid = TimeGrid(t_end, steps)
    snaps = np.broadcast_to(measure.particles, (grid.n_points,) + measure.particles.shape)
    return MeasurePath(grid, snaps.copy())


def write_mvmp(path: MeasurePath, filename) -> None:
    """Write a measure path in the little-endian ``.mvmp`` binary layout."""
    header = _MVMP_HEADER.pack(MVMP_MAGIC, MVMP_VERSION, path.dim, path.n_particles,
                               len(path), path.grid.h)
    body = np.ascontiguousarray(path.snapshots, dtype="<f8").tobytes(order="C")
    with open(filename, "wb") as fh:
        fh.write(header)
        fh.write(body)


def read_mvmp(filename) -> MeasurePath:
    raw = Path(filename).read_bytes()
    if len(raw) < _MVMP_HEADER.size:
        raise ValueError("truncated .mvmp file")
    magic, version, d, m, n_snap, h = _MVMP_HEADER.unpack_from(raw)
    if magic != MVMP_MAGIC:
        raise ValueError("not an .mvmp file (bad magic)")
    if version != MVMP_VERSION:
        raise ValueError(f"unsupported .mvmp version {version}")
    expected = n_snap * m * d * 8
    if len(raw) - _MVMP_HEADER.size != expected:
        raise ValueError("corrupt .mvmp file: payload size mismatch")
    data = np.frombuffer(raw, dtype="<f8", offset=_MVMP_HEADER.size)
    snaps = data.reshape(n_snap, m, d).astype(np.float64)
    steps = n_snap - 1
    grid = TimeGrid(h * steps, steps, h=h)
    return MeasurePath(grid, snaps)


class PairDataSet:
    """Initial points ``xi`` and their images ``x_T`` after lag ``lag``."""

    def __init__(self, xi, x_T, lag: float):
        xi = as_states(xi)
        x_T = as_states(x_T, xi.shape[1])
        if xi.shape != x_T.shape:
            raise ValueError("xi and x_T must have identical shapes")
        if not lag > 0:
            raise ValueError("lag must be positive")
        self.xi = _frozen(xi)
        self.x_T = _frozen(x_T)
        self.lag = float(lag)

    @property
    def count(self) -> int:
        return self.xi.shape[0]

    @property
    def dim(self) -> int:
        return self.xi.shape[1]

    def __len__(self):
        return self.count

    def save_csv(self, filename) -> None:
        write_pairs_csv(self, filename)

    @classmethod
    def load_csv(cls, filename, lag: float) -> "PairDataSet":
        return read_pairs_csv(filename, lag)


def _fmt(v: float) -> str:
    return format(v, ".17g")


def write_pairs_csv(data: PairDataSet, filename) -> None:
    d = data.dim
    header = [f"xi_{i + 1}" for i in range(d)] + [f"xT_{i + 1}" for i in range(d)]
    rows = np.hstack([data.xi, data.x_T])
    with open(filename, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(map(_fmt, row.tolist())) + "\n")


def read_pairs_csv(filename, lag: float) -> PairDataSet:
    with open(filename, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) % 2 or not header:
            raise ValueError("pair CSV needs an even number of columns")
        d = len(header) // 2
        expected = [f"xi_{i + 1}" for i in range(d)] + [f"xT_{i + 1}" for i in range(d)]
        if header != expected:
            raise ValueError(f"unexpected pair CSV header {header}")
        values = np.array([[float(v) for v in row] for row in reader if row],
                          dtype=np.float64).reshape(-1, 2 * d)
    if values.shape[0] == 0:
        raise ValueError("pair CSV has no rows")
    return PairDataSet(values[:, :d], values[:, d:], lag)
