"""Euler-Maruyama kernels for interacting particle systems and the decoupled SDE.

Randomness contract
-------------------
Every Brownian increment is a deterministic function of
``(master_seed, purpose, step, particle)``. For a given purpose and step a
fresh generator is seeded from ``SeedSequence(master_seed, spawn_key=(purpose,
step))`` and row ``m`` of the standard normal block it produces belongs to
particle ``m``. Rows are filled sequentially, so particle ``m``'s draws do not
depend on the number of particles after it, on the thread count, or on the
order in which chunks are processed.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._parallel import map_rows, resolve_threads
from .core import (EmpiricalMeasure, MeasurePath, ModelSpec, PairDataSet, TimeGrid,
                   as_states, measure_lookup)

PURPOSE_INIT = 0
PURPOSE_IPS = 1
PURPOSE_DECOUPLED = 2
PURPOSE_XI = 3
PURPOSE_SWEEP = 4
PURPOSE_MODEL = 5
PURPOSE_IPS_COEF = 6
PURPOSE_DECOUPLED_COEF = 7


class ModelError(FloatingPointError):
    """A model coefficient evaluated to NaN or infinity."""

    def __init__(self, t, x, particle=None):
        self.t = t
        self.x = np.asarray(x)
        self.particle = particle
        where = "" if particle is None else f" (particle {particle})"
        super().__init__(f"model produced non-finite value at t={t}{where}, x={self.x.tolist()}")


class PathTooShortError(ValueError):
    pass


@dataclass(frozen=True)
class RngPlan:
    """Per-particle, per-step random streams derived from one master seed."""

    master_seed: int

    def generator(self, purpose: int, *key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(purpose,) + tuple(key))
        return np.random.Generator(np.random.PCG64(ss))

    def normals(self, purpose: int, step: int, n: int, d: int) -> np.ndarray:
        """Standard normal block of shape ``(n, d)``; row m is particle m's."""
        return self.generator(purpose, step).standard_normal((n, d))

    def normals_for(self, purpose: int, step: int, ids: np.ndarray, d: int) -> np.ndarray:
        """Rows ``ids`` of the block for ``step``, i.e. the draws of those particles."""
        ids = np.asarray(ids, dtype=np.int64)
        block = self.normals(purpose, step, int(ids.max()) + 1, d)
        return block[ids]

    def stream(self, m: int, purpose: int, steps: int, d: int) -> np.ndarray:
        """All increments (unit variance) of particle ``m`` over ``steps`` steps."""
        return np.stack([self.normals(purpose, k, m + 1, d)[m] for k in range(steps)])


def _as_plan(rng) -> RngPlan:
    if isinstance(rng, RngPlan):
        return rng
    return RngPlan(int(rng))


def _step_rows(model: ModelSpec, X, t, mu, dt, dW, threads, Z=None):
    def coefficients(a, b):
        x = X[a:b]
        drift = np.asarray(model.drift(t, x, mu), dtype=np.float64).reshape(x.shape)
        if model.random_drift is not None:
            z = np.zeros((b - a, model.random_dim)) if Z is None else Z[a:b]
            drift = drift + model.random_drift(t, x, mu, z)
        return x, drift, np.asarray(model.diffusion(t, x, mu), dtype=np.float64)

    def work(a, b):
        # overflow is reported below as ModelError, not as a numpy warning
        with np.errstate(over="ignore", invalid="ignore"):
            x, drift, sig = coefficients(a, b)
        sig = np.broadcast_to(sig, (x.shape[0], x.shape[1], x.shape[1]))
        bad = ~(np.isfinite(drift).all(axis=1) & np.isfinite(sig).all(axis=(1, 2)))
        if bad.any():
            i = int(np.argmax(bad))
            raise ModelError(t, x[i], a + i)
        with np.errstate(over="ignore", invalid="ignore"):
            out = x + drift * dt + np.einsum("nij,nj->ni", sig, dW[a:b])
        bad = ~np.isfinite(out).all(axis=1)
        if bad.any():
            i = int(np.argmax(bad))
            raise ModelError(t, x[i], a + i)
        if model.post_step is not None:
            out = model.post_step(out)
        return out

    return map_rows(work, X.shape[0], threads)


def euler_step(model: ModelSpec, x, t: float, mu: EmpiricalMeasure, dt: float, dW,
               z=None) -> np.ndarray:
    """One Euler-Maruyama step ``post_step(x + b*dt + sigma @ dW)`` for a single state.

    ``dW`` is the Brownian increment itself (variance ``dt``), not a unit normal.
    ``z`` feeds ``model.random_drift`` when the model has one (zeros if omitted).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    X = as_states(x, model.dim)
    dW = as_states(dW, model.dim)
    Z = None if z is None else np.asarray(z, dtype=np.float64).reshape(1, -1)
    try:
        return _step_rows(model, X, t, mu, dt, dW, 1, Z)[0]
    except ModelError as err:
        raise ModelError(err.t, err.x) from None


class _Progress:
    def __init__(self, label, total, enabled):
        self.label, self.total, self.enabled = label, total, enabled
        self.next_decile = 1

    def update(self, done):
        if not self.enabled:
            return
        while self.next_decile <= 10 and done * 10 >= self.next_decile * self.total:
            print(f"[{self.label}] {self.next_decile * 10}% ({done}/{self.total} steps)",
                  file=sys.stderr, flush=True)
            self.next_decile += 1


def simulate_ips(model: ModelSpec, n_particles: int, grid: TimeGrid, rng,
                 initial=None, threads: Optional[int] = None,
                 progress: bool = False) -> MeasurePath:
    """Simulate the interacting particle system and record every snapshot.

    The update is synchronous: the measure used for step k -> k+1 is built
    from all particle states at step k before any particle moves.

    Parameters
    ----------
    model : ModelSpec
    n_particles : int
        Number of interacting particles, at least 2.
    grid : TimeGrid
    rng : RngPlan or int
    initial : array, optional
        Initial ensemble; drawn from ``model.initial_sampler`` when omitted.
    threads : int, optional
        Worker threads for the particle loop; results do not depend on it.
    """
    if n_particles < 2:
        raise ValueError("the interacting particle system needs at least 2 particles")
    plan = _as_plan(rng)
    threads = resolve_threads(threads)
    d = model.dim
    if initial is None:
        X = as_states(model.initial_sampler(plan.generator(PURPOSE_INIT), n_particles), d)
    else:
        X = as_states(initial, d).copy()
    if X.shape[0] != n_particles:
        raise ValueError("initial ensemble size does not match n_particles")
    if model.post_step is not None and initial is None:
        X = model.post_step(X)

    snaps = np.empty((grid.n_points, n_particles, d))
    snaps[0] = X
    sqrt_h = np.sqrt(grid.h)
    prog = _Progress("ips", grid.steps, progress)
    for k in range(grid.steps):
        mu = EmpiricalMeasure(snaps[k])
        dW = plan.normals(PURPOSE_IPS, k, n_particles, d) * sqrt_h
        Z = None
        if model.random_drift is not None:
            Z = plan.normals(PURPOSE_IPS_COEF, k, n_particles, model.random_dim)
        snaps[k + 1] = _step_rows(model, snaps[k], grid.time(k), mu, grid.h, dW, threads, Z)
        prog.update(k + 1)
    return MeasurePath(grid, snaps, seed=plan.master_seed, model=model.name)


def simulate_decoupled(model: ModelSpec, path: MeasurePath, xi, grid: TimeGrid, rng,
                       stream_ids: Optional[Sequence[int]] = None,
                       threads: Optional[int] = None, progress: bool = False) -> PairDataSet:
    """Euler-Maruyama for the decoupled SDE driven by the frozen measure path.

    Trajectory m starts at ``xi[m]`` and at step k evaluates the coefficients
    against ``measure_lookup(path, t_k)``. It consumes the random stream with
    index ``stream_ids[m]`` (default ``m``), so passing a permutation of the
    ids together with the same permutation of ``xi`` permutes the output.
    The lag of the returned pairs is ``grid.t_end``.
    """
    plan = _as_plan(rng)
    threads = resolve_threads(threads)
    d = model.dim
    X0 = as_states(xi, d)
    if X0.shape[0] == 0:
        raise ValueError("xi must be nonempty")
    if path.dim != d:
        raise ValueError(f"measure path has dimension {path.dim}, model has {d}")
    if grid.t_end > path.grid.t_end * (1 + 1e-12):
        raise PathTooShortError(
            f"measure path too short: lag {grid.t_end} exceeds horizon {path.grid.t_end}")
    ids = np.arange(X0.shape[0]) if stream_ids is None else np.asarray(stream_ids, dtype=np.int64)
    if ids.shape != (X0.shape[0],):
        raise ValueError("stream_ids must have one entry per initial point")
    sequential = stream_ids is None

    X = X0.copy()
    sqrt_h = np.sqrt(grid.h)
    prog = _Progress("decoupled", grid.steps, progress)
    for k in range(grid.steps):
        t = grid.time(k)
        mu = measure_lookup(path, t)
        Z = None
        if sequential:
            z = plan.normals(PURPOSE_DECOUPLED, k, X.shape[0], d)
            if model.random_drift is not None:
                Z = plan.normals(PURPOSE_DECOUPLED_COEF, k, X.shape[0], model.random_dim)
        else:
            z = plan.normals_for(PURPOSE_DECOUPLED, k, ids, d)
            if model.random_drift is not None:
                Z = plan.normals_for(PURPOSE_DECOUPLED_COEF, k, ids, model.random_dim)
        X = _step_rows(model, X, t, mu, grid.h, z * sqrt_h, threads, Z)
        prog.update(k + 1)
    return PairDataSet(X0, X, grid.t_end)


def sample_initial(model: ModelSpec, n: int, rng) -> np.ndarray:
    """Initial points for decoupled trajectories, independent of the IPS draws."""
    plan = _as_plan(rng)
    X = as_states(model.initial_sampler(plan.generator(PURPOSE_XI), n), model.dim)
    if model.post_step is not None:
        X = model.post_step(X)
    return X


def pairs_from_path(path: MeasurePath, lag: float) -> PairDataSet:
    """Experimental: (state at 0, state at lag) pairs taken from IPS particles.

    The particles interact, so these pairs are not independent and the
    almost-sure convergence results for decoupled data do not apply. Intended
    for side-by-side comparison only.
    """
    k = path.grid.index_at(lag)
    if abs(path.grid.time(k) - lag) > 1e-9 * max(1.0, lag):
        raise ValueError("lag must lie on the measure path grid")
    if k == 0:
        raise ValueError("lag must be positive")
    return PairDataSet(path.snapshots[0], path.snapshots[k], lag)
