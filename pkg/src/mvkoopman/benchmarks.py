"""Benchmark mean-field models and their analytic reference values."""

from __future__ import annotations

import copy
import math
import warnings
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
from scipy.integrate import simpson

from .core import ModelSpec, measure_expect

TWO_PI = 2.0 * math.pi
KURAMOTO_SIGMA_CRIT = 0.7709


class NonUniqueInvariantWarning(UserWarning):
    pass


def _const_diffusion(value: float, d: int = 1):
    mat = value * np.eye(d)

    def diffusion(t, X, mu):
        return np.broadcast_to(mat, (X.shape[0], d, d))

    return diffusion


def _uniform_sampler(lo: float, hi: float):
    def sampler(rng, n):
        return rng.uniform(lo, hi, size=(n, 1))

    return sampler


# --- Cormier ---------------------------------------------------------------

def cormier_model(J: float = 14.0, a: float = -7.5, b: float = 10.0) -> ModelSpec:
    """``dX = (-X + J E[cos X]) dt + sqrt(2) dW``, ``X_0 ~ Unif[a, b]``."""
    if not math.isfinite(J):
        raise ValueError("J must be finite")
    J = float(J)

    def drift(t, X, mu):
        return -X + J * measure_expect(mu, np.cos)

    return ModelSpec(name="cormier", dim=1, drift=drift, diffusion=_const_diffusion(math.sqrt(2.0)),
                     initial_sampler=_uniform_sampler(a, b),
                     params={"J": J, "a": float(a), "b": float(b)})


@dataclass(frozen=True)
class FixedPoint:
    """Mean ``alpha`` of an invariant law N(alpha, 1) of the Cormier model."""

    alpha: float
    stable: bool


def _cormier_g(alpha, J):
    return math.sqrt(math.e) / J * alpha - math.cos(alpha)


def _bisect(f, lo, hi, tol=1e-12, max_iter=200):
    flo = f(lo)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) < tol or hi - lo < 1e-15:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def cormier_fixed_points(J: float, lo: float = -10.0, hi: float = 10.0,
                         step: float = 0.01) -> List[FixedPoint]:
    """Roots of ``(sqrt(e)/J) a = cos(a)`` in ``[lo, hi]``, ascending.

    Brackets are found by a sign scan with spacing ``step`` and refined by
    bisection; a root is stable iff ``a tan(a) > -1``.
    """
    if J == 0:
        raise ValueError("J must be nonzero")
    g = lambda a: _cormier_g(a, J)  # noqa: E731
    n = int(round((hi - lo) / step))
    grid = lo + step * np.arange(n + 1)
    vals = np.array([g(a) for a in grid])
    roots = []
    for i in range(n):
        if vals[i] == 0.0:
            roots.append(float(grid[i]))
        elif vals[i] * vals[i + 1] < 0:
            roots.append(_bisect(g, float(grid[i]), float(grid[i + 1])))
    if vals[n] == 0.0:
        roots.append(float(grid[n]))
    return [FixedPoint(alpha=r, stable=bool(r * math.tan(r) > -1)) for r in roots]


# --- Ornstein-Uhlenbeck ------------------------------------------------------

def ou_model(a: float = 1.0, sigma: float = 1.0, mean0: float = 0.0,
             std0: float = 1.0) -> ModelSpec:
    """Mean-reverting interaction ``dX = a (E[X] - X) dt + sigma dW``."""
    a, sigma = float(a), float(sigma)

    def drift(t, X, mu):
        return a * (mu.mean() - X)

    def sampler(rng, n):
        return mean0 + std0 * rng.standard_normal((n, 1))

    return ModelSpec(name="ou", dim=1, drift=drift, diffusion=_const_diffusion(sigma),
                     initial_sampler=sampler,
                     params={"a": a, "sigma": sigma, "mean0": float(mean0), "std0": float(std0)})


def ou_koopman_eigenvalues(a: float, T: float, n: int) -> np.ndarray:
    """``exp(-(j-1) a T)`` for ``j = 1..n``."""
    if not T > 0:
        raise ValueError("lag must be positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.exp(-np.arange(n) * a * T)


# --- Kuramoto on the circle --------------------------------------------------

def wrap_angle(X):
    """Map angles into ``[0, 2*pi)``."""
    Y = np.mod(X, TWO_PI)
    return np.where(Y >= TWO_PI, 0.0, Y)


def kuramoto_circle_model(sigma: float = 1.0) -> ModelSpec:
    """``dX = (2 sin 2X - E_y[sin(X - y)]) dt + sqrt(2 sigma) dW`` on the circle."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    sigma = float(sigma)

    def drift(t, X, mu):
        c = measure_expect(mu, np.cos)
        s = measure_expect(mu, np.sin)
        # E_y sin(x - y) = sin x E[cos y] - cos x E[sin y]
        return 2.0 * np.sin(2.0 * X) - (np.sin(X) * c - np.cos(X) * s)

    def sampler(rng, n):
        return rng.uniform(0.0, TWO_PI, size=(n, 1))

    return ModelSpec(name="kuramoto-circle", dim=1, drift=drift,
                     diffusion=_const_diffusion(math.sqrt(2.0 * sigma)),
                     initial_sampler=sampler, post_step=wrap_angle, params={"sigma": sigma})


def kuramoto_invariant_density(sigma: float = 1.0, n_quad: int = 20001) -> Callable:
    """Normalised ``exp(-cos(2x)/sigma)`` on ``[0, 2*pi]``.

    Uniqueness of this invariant law is only known above sigma = 0.7709; below
    that a :class:`NonUniqueInvariantWarning` is issued.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if sigma <= KURAMOTO_SIGMA_CRIT:
        warnings.warn(f"sigma={sigma} <= {KURAMOTO_SIGMA_CRIT}: invariant law may not be unique",
                      NonUniqueInvariantWarning, stacklevel=2)
    x = np.linspace(0.0, TWO_PI, n_quad)
    Z = float(simpson(np.exp(-np.cos(2.0 * x) / sigma), x=x))

    def density(x):
        return np.exp(-np.cos(2.0 * np.asarray(x, dtype=np.float64)) / sigma) / Z

    density.Z = Z
    return density


# --- Kuramoto on the sphere --------------------------------------------------

def random_antisymmetric(rng: np.random.Generator, d: int = 3) -> np.ndarray:
    A = np.zeros((d, d))
    iu = np.triu_indices(d, 1)
    A[iu] = rng.uniform(-1.0, 1.0, size=len(iu[0]))
    return A - A.T


def project_sphere(X):
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def kuramoto_sphere_model(A=None, alpha: float = 0.5, gamma: float = 0.5,
                          beta: Optional[float] = None, seed: int = 0,
                          beta_mode: str = "per_step", beta_scale: float = 20.0) -> ModelSpec:
    """Noisy Kuramoto model on S^2 with a random drift offset ``beta * (1,1,1)``.

    Drift ``(A - gamma^2 I) x + (I - x x^T)(alpha E[X] + beta 1)``, diffusion
    ``gamma (I - x x^T)``, renormalised onto the sphere after every step.

    ``A`` (antisymmetric, entries Unif(-1, 1)) is drawn once from ``seed``
    when not given. ``beta`` is +-``beta_scale`` with probability 1/2 and is
    handled according to ``beta_mode``:

    ``"per_step"``
        redrawn for every particle at every step from that particle's
        random stream (sign of a standard normal);
    ``"fixed"``
        drawn once from ``seed`` (or given) and shared by all particles.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(5,))))
    if A is None:
        A = random_antisymmetric(rng)
    A = np.asarray(A, dtype=np.float64)
    if A.shape != (3, 3) or np.max(np.abs(A + A.T)) > 1e-12:
        raise ValueError("A must be a 3x3 antisymmetric matrix")
    if not (alpha > 0 and gamma > 0):
        raise ValueError("alpha and gamma must be positive")
    if beta_mode not in ("per_step", "fixed"):
        raise ValueError(f"unknown beta_mode {beta_mode!r}")
    alpha, gamma, beta_scale = float(alpha), float(gamma), float(beta_scale)
    if beta_mode == "fixed":
        if beta is None:
            beta = beta_scale if rng.random() < 0.5 else -beta_scale
        beta = float(beta)
    else:
        beta = None
    lin = A - gamma ** 2 * np.eye(3)
    shift = 0.0 if beta is None else beta
    ones = np.ones(3)

    def drift(t, X, mu):
        v = alpha * mu.mean() + shift * ones
        return X @ lin.T + v - X * (X @ v)[:, None]

    def random_drift(t, X, mu, Z):
        b = np.where(Z[:, :1] < 0.0, -beta_scale, beta_scale)
        # (I - x x^T)(b 1) row-wise
        return b * (ones - X * X.sum(axis=1, keepdims=True))

    def diffusion(t, X, mu):
        return gamma * (np.eye(3) - X[:, :, None] * X[:, None, :])

    def sampler(rng, n):
        return project_sphere(rng.standard_normal((n, 3)))

    params = {"A": A.tolist(), "alpha": alpha, "gamma": gamma, "seed": int(seed),
              "beta_mode": beta_mode, "beta_scale": beta_scale}
    if beta is not None:
        params["beta"] = beta
    return ModelSpec(name="kuramoto-sphere", dim=3, drift=drift, diffusion=diffusion,
                     initial_sampler=sampler, post_step=project_sphere, params=params,
                     random_drift=random_drift if beta_mode == "per_step" else None,
                     random_dim=1 if beta_mode == "per_step" else 0)


# --- registry ----------------------------------------------------------------

MODELS = {
    "cormier": cormier_model,
    "kuramoto-circle": kuramoto_circle_model,
    "kuramoto-sphere": kuramoto_sphere_model,
    "ou": ou_model,
}


def make_model(name: str, params: Optional[dict] = None) -> ModelSpec:
    try:
        factory = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return factory(**(params or {}))


# Default run configurations reproducing the published experiments, with the
# Cormier particle count scaled down from 500 000 to 50 000.
RECIPES = {
    "cormier": {
        "model": {"name": "cormier", "params": {"J": 14.0, "a": -7.5, "b": 10.0}},
        "ips": {"particles": 50000, "step": 0.1, "horizon": 5.0},
        "decoupled": {"trajectories": 50000, "step": 0.1, "lag": 0.5, "initial": "model"},
        "dictionary": {"kind": "indicator1d", "n": 100},
        "edmd": {"n_eig": 4, "reg": 0.0, "symmetry_augment": False},
    },
    "kuramoto-circle": {
        "model": {"name": "kuramoto-circle", "params": {"sigma": 1.0}},
        "ips": {"particles": 5000, "step": 0.01, "horizon": 1.0},
        "decoupled": {"trajectories": 5000, "step": 0.01, "lag": 1.0, "initial": "model"},
        "dictionary": {"kind": "monomial", "max_order": 7, "center": math.pi, "scale": math.pi},
        "edmd": {"n_eig": 4, "reg": 0.0, "symmetry_augment": True},
    },
    "kuramoto-sphere": {
        "model": {"name": "kuramoto-sphere",
                  "params": {"alpha": 0.5, "gamma": 0.5, "seed": 0}},
        "ips": {"particles": 5000, "step": 0.01, "horizon": 3.0},
        "decoupled": {"trajectories": 5000, "step": 0.01, "lag": 0.5, "initial": "model"},
        "dictionary": {"kind": "voronoi_sphere", "n": 200},
        "edmd": {"n_eig": 4, "reg": 0.0, "symmetry_augment": False},
    },
    "ou": {
        "model": {"name": "ou", "params": {"a": 1.0, "sigma": 1.0}},
        "ips": {"particles": 5000, "step": 0.01, "horizon": 1.0},
        "decoupled": {"trajectories": 5000, "step": 0.01, "lag": 0.5, "initial": "model"},
        "dictionary": {"kind": "monomial", "max_order": 4},
        "edmd": {"n_eig": 4, "reg": 0.0, "symmetry_augment": False},
    },
}


def recipe(name: str) -> dict:
    if name not in RECIPES:
        raise ValueError(f"unknown benchmark {name!r}; choose from {sorted(RECIPES)}")
    return copy.deepcopy(RECIPES[name])

