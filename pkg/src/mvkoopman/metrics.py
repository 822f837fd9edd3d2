"""Empirical convergence diagnostics: W2 in 1-D, histogram distances, rate sweeps."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats
from scipy.integrate import quad

from .core import MeasurePath, ModelSpec, TimeGrid, as_states, constant_path
from .dictionary import Dictionary
from .edmd import gram_matrix
from .simulate import PURPOSE_SWEEP, RngPlan, _step_rows, measure_lookup, simulate_ips


def w2_1d(a, b) -> float:
    """2-Wasserstein distance between two equal-size 1-D samples.

    In one dimension the monotone (sorted) coupling is optimal.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    for s in (a, b):
        if s.ndim == 2 and s.shape[1] != 1:
            raise ValueError("W2 implemented for d = 1 only")
        if s.ndim > 2:
            raise ValueError("W2 implemented for d = 1 only")
    a, b = a.reshape(-1), b.reshape(-1)
    if a.size == 0 or b.size == 0:
        raise ValueError("samples must be nonempty")
    if a.size != b.size:
        raise ValueError("w2_1d needs samples of equal size")
    diff = np.sort(a) - np.sort(b)
    return float(math.sqrt(np.mean(diff * diff)))


def histogram_l1(samples, density: Callable, bins: int, range: tuple,
                 full_output: bool = False):
    """Sum over bins of |empirical mass - integral of density|.

    Samples outside ``range`` are not binned; their fraction is returned as
    the outside mass when ``full_output`` is set.
    """
    x = np.asarray(samples, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise ValueError("no samples")
    lo, hi = map(float, range)
    edges = np.linspace(lo, hi, bins + 1)
    masses = np.array([quad(density, edges[i], edges[i + 1])[0] for i in np.arange(bins)])
    total = masses.sum()
    if abs(total - 1.0) > 0.01:
        raise ValueError(f"density integrates to {total:.4f} on the range, not 1")
    inside = (x >= lo) & (x <= hi)
    counts, _ = np.histogram(x[inside], bins=edges)
    emp = counts / x.size
    dist = float(np.abs(emp - masses).sum())
    outside = float(1.0 - inside.sum() / x.size)
    return (dist, outside) if full_output else dist


def fit_loglog_slope(x, y, level: float = 0.95):
    """Least-squares slope of log y against log x and its confidence half-width."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    if lx.size < 3:
        raise ValueError("need at least 3 points to fit a slope")
    res = stats.linregress(lx, ly)
    tq = stats.t.ppf(0.5 + level / 2, lx.size - 2)
    return float(res.slope), float(tq * res.stderr)


@dataclass
class SweepReport:
    parameter: str
    values: list
    mean_error: list
    std_error: list
    slope: float
    half_width: float
    n_seeds: int
    metric: str = ""

    def __post_init__(self):
        if len(self.values) < 3:
            raise ValueError("a sweep needs at least 3 parameter values")
        if any(e < 0 for e in self.mean_error):
            raise ValueError("errors must be nonnegative")

    def slope_in(self, lo: float, hi: float) -> bool:
        return lo <= self.slope <= hi

    def to_json(self) -> dict:
        return asdict(self)

    def write(self, directory) -> None:
        directory = Path(directory)
        with open(directory / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["parameter", "mean_error", "std_error"])
            for row in zip(self.values, self.mean_error, self.std_error):
                w.writerow([format(v, ".17g") for v in row])
        with open(directory / "sweep.json", "w") as fh:
            json.dump({"parameter": self.parameter, "metric": self.metric,
                       "slope": self.slope, "half_width": self.half_width,
                       "interval": [self.slope - self.half_width, self.slope + self.half_width],
                       "n_seeds": self.n_seeds}, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _report(parameter, values, errors, metric) -> SweepReport:
    errors = np.asarray(errors, dtype=np.float64)  # (n_values, n_seeds)
    mean = errors.mean(axis=1)
    std = errors.std(axis=1, ddof=1) if errors.shape[1] > 1 else np.zeros_like(mean)
    if np.all(mean > 0):
        slope, hw = fit_loglog_slope(values, mean)
    else:
        slope, hw = float("nan"), float("nan")
    return SweepReport(parameter=parameter, values=[float(v) for v in values],
                       mean_error=mean.tolist(), std_error=std.tolist(), slope=slope,
                       half_width=hw, n_seeds=errors.shape[1], metric=metric)


def _euler_path(model, x0, measure_at, t_grid_h, n_steps, increments, Z=None):
    X = x0.copy()
    for k in range(n_steps):
        t = k * t_grid_h
        z = None if Z is None else Z[k]
        X = _step_rows(model, X, t, measure_at(t), t_grid_h, increments[k], 1, z)
    return X


def strong_error_sweep(model: ModelSpec, x0, T: float, h_list: Sequence[float],
                       n_seeds: int = 20, measure=None, refine: int = 8,
                       seed: int = 0) -> SweepReport:
    """Mean-square error at ``T`` of Euler with step h against a fine coupled reference.

    The reference runs the same scheme at ``h_ref = min(h_list) / refine``.
    Coarse runs reuse its Brownian path by summing consecutive increments.
    ``measure`` is an :class:`EmpiricalMeasure` (frozen) or a
    :class:`MeasurePath` (time-dependent); the interaction is therefore
    decoupled, as in the data-generating scheme.
    """
    h_list = [float(h) for h in h_list]
    if any(h_list[i] <= h_list[i + 1] for i in range(len(h_list) - 1)):
        raise ValueError("h_list must be strictly descending")
    h_ref = min(h_list) / refine
    n_fine = T / h_ref
    if abs(n_fine - round(n_fine)) > 1e-9 * n_fine:
        raise ValueError("T must be an integer multiple of the reference step")
    n_fine = int(round(n_fine))
    ratios = []
    for h in h_list:
        r = h / h_ref
        if abs(r - round(r)) > 1e-9 * r:
            raise ValueError(f"reference step {h_ref} does not divide h={h}")
        ratios.append(int(round(r)))

    X0 = as_states(x0, model.dim)
    n, d = X0.shape
    if measure is None:
        raise ValueError("a frozen measure or measure path is required")
    path = measure if isinstance(measure, MeasurePath) else constant_path(measure, T)

    def at(t):
        return measure_lookup(path, min(t, path.grid.t_end))

    errors = np.empty((len(h_list), n_seeds))
    for s in range(n_seeds):
        plan = RngPlan(seed)
        dW = np.stack([plan.normals(PURPOSE_SWEEP, s * n_fine + k, n, d)
                       for k in range(n_fine)]) * math.sqrt(h_ref)
        ref = _euler_path(model, X0, at, h_ref, n_fine, dW)
        for i, r in enumerate(ratios):
            coarse = dW.reshape(n_fine // r, r, n, d).sum(axis=1)
            Xh = _euler_path(model, X0, at, h_ref * r, n_fine // r, coarse)
            errors[i, s] = float(np.mean(np.sum((Xh - ref) ** 2, axis=1)))
    return _report("h", h_list, errors, "mean_square_error")


def measure_error_sweep(model: ModelSpec, m_list: Sequence[int], h: float, T: float,
                        n_seeds: int = 20, m_ref: Optional[int] = None,
                        seed: int = 0, squared: bool = True) -> SweepReport:
    """W2 error of the particle-system law at ``T`` as the particle count grows.

    For each seed a reference system with ``m_ref`` particles (default
    ``16 * max(m_list)``) is run and reduced to ``M`` atoms by taking its
    order statistics at the mid-quantiles ``(k + 1/2)/M``; the error is
    ``W2(mu^M_T, reference_M)**2`` (or ``W2`` when ``squared`` is false).
    """
    if model.dim != 1:
        raise ValueError("W2 implemented for d = 1 only")
    m_list = [int(m) for m in m_list]
    if any(m_list[i] >= m_list[i + 1] for i in range(len(m_list) - 1)):
        raise ValueError("m_list must be strictly ascending")
    if m_ref is None:
        m_ref = 16 * max(m_list)
    if m_ref < max(m_list):
        raise ValueError("reference must have at least max(m_list) particles")
    grid = TimeGrid.from_step(h, T)
    errors = np.empty((len(m_list), n_seeds))
    for s in range(n_seeds):
        ref_plan = RngPlan(seed + 7919 * (s + 1))
        ref = np.sort(simulate_ips(model, m_ref, grid, ref_plan).snapshots[-1, :, 0])
        for i, m in enumerate(m_list):
            if m == m_ref:
                cloud = simulate_ips(model, m, grid, ref_plan).snapshots[-1, :, 0]
            else:
                cloud = simulate_ips(model, m, grid, RngPlan(seed + s)).snapshots[-1, :, 0]
            idx = np.minimum(((np.arange(m) + 0.5) * m_ref / m).astype(np.int64), m_ref - 1)
            w = w2_1d(cloud, ref[idx])
            errors[i, s] = w * w if squared else w
    return _report("particles", m_list, errors, "w2_squared" if squared else "w2")


def gram_error_sweep(dictionary: Dictionary, sampler: Callable, exact_gram,
                     m_list: Sequence[int], n_seeds: int = 20, seed: int = 0) -> SweepReport:
    """Frobenius error of the empirical Gram matrix against its exact value.

    ``sampler(rng, M)`` draws ``M`` points from the reference distribution.
    """
    exact = np.asarray(exact_gram, dtype=np.float64)
    errors = np.empty((len(m_list), n_seeds))
    plan = RngPlan(seed)
    for s in range(n_seeds):
        for i, m in enumerate(m_list):
            x = sampler(plan.generator(PURPOSE_SWEEP, s, i), int(m))
            errors[i, s] = np.linalg.norm(gram_matrix(dictionary, x) - exact, "fro")
    return _report("samples", [int(m) for m in m_list], errors, "gram_frobenius")
