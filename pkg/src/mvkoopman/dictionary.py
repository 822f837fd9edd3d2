"""Basis-function dictionaries with batch evaluation.

A dictionary maps an ``(n, d)`` batch of points to an ``(n, N)`` matrix whose
column i holds the values of basis function i.
"""

from __future__ import annotations

import itertools
import math
from typing import Optional, Sequence

import numpy as np

from .core import as_states


class Dictionary:
    """Ordered basis ``psi_1, ..., psi_N`` on ``R^d``.

    Attributes
    ----------
    kind : str
    size : int
        Number of basis functions N.
    dim : int
    bound : float or None
        Uniform bound on all basis functions, None if unbounded.
    lipschitz : float or None
        Common Lipschitz constant, None if the functions are discontinuous or
        unbounded in slope.
    is_partition : bool
        True for indicator families of disjoint cells; empty cells may then
        be dropped without changing the span on the data.
    """

    kind = "abstract"
    bound: Optional[float] = None
    lipschitz: Optional[float] = None
    is_partition = False

    def __init__(self, size: int, dim: int):
        self.size = int(size)
        self.dim = int(dim)

    def __call__(self, X) -> np.ndarray:
        X = as_states(X, self.dim)
        return self._evaluate(X)

    def eval(self, x) -> np.ndarray:
        """Values of all N functions at a single point."""
        return self(as_states(x, self.dim)[:1])[0]

    def _evaluate(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError

    def subset(self, keep: Sequence[int]) -> "SubsetDictionary":
        return SubsetDictionary(self, keep)

    def __len__(self):
        return self.size

    def __repr__(self):
        return f"{type(self).__name__}({self.to_config()})"


class Indicator1D(Dictionary):
    """Indicators of ``N`` equal bins partitioning ``[a, b]``.

    Bins are half-open ``[lo, hi)`` except the last, which also contains ``b``.
    Points outside ``[a, b]`` map to the zero vector.
    """

    kind = "indicator1d"
    bound = 1.0
    lipschitz = None
    is_partition = True

    def __init__(self, a: float, b: float, n: int):
        if not a < b:
            raise ValueError(f"indicator bins need a < b, got a={a}, b={b}")
        if n < 2:
            raise ValueError("indicator dictionary needs at least 2 bins")
        super().__init__(n, 1)
        self.a = float(a)
        self.b = float(b)
        self.width = (self.b - self.a) / n

    @property
    def edges(self) -> np.ndarray:
        e = self.a + self.width * np.arange(self.size + 1)
        e[-1] = self.b
        return e

    @property
    def centers(self) -> np.ndarray:
        return self.a + self.width * (np.arange(self.size) + 0.5)

    def bin_index(self, X) -> np.ndarray:
        """Bin of each point, -1 outside ``[a, b]``."""
        x = as_states(X, 1)[:, 0]
        idx = np.floor((x - self.a) / self.width).astype(np.int64)
        idx = np.minimum(idx, self.size - 1)
        inside = (x >= self.a) & (x <= self.b)
        return np.where(inside, idx, -1)

    def _evaluate(self, X):
        idx = self.bin_index(X)
        out = np.zeros((X.shape[0], self.size))
        rows = np.nonzero(idx >= 0)[0]
        out[rows, idx[rows]] = 1.0
        return out

    def to_config(self):
        return {"kind": self.kind, "a": self.a, "b": self.b, "n": self.size}


def monomial_exponents(d: int, max_order: int) -> np.ndarray:
    """Exponent vectors ordered by total degree, then lexicographically (x1 first)."""
    rows = []
    for degree in range(max_order + 1):
        block = [e for e in itertools.product(range(degree + 1), repeat=d) if sum(e) == degree]
        rows.extend(sorted(block, reverse=True))
    return np.array(rows, dtype=np.int64).reshape(-1, d)


class Monomial(Dictionary):
    """All monomials of total degree at most ``max_order`` in ``(x - center)/scale``.

    With the default ``center=0, scale=1`` these are the raw monomials. Any
    other affine change of variables spans the same function space but can
    improve the conditioning of the Gram matrix by orders of magnitude.
    """

    kind = "monomial"
    bound = None
    lipschitz = None

    def __init__(self, d: int, max_order: int, center=0.0, scale=1.0):
        if max_order < 1:
            raise ValueError("max_order must be >= 1")
        if d < 1:
            raise ValueError("dimension must be >= 1")
        self.exponents = monomial_exponents(d, max_order)
        super().__init__(len(self.exponents), d)
        self.max_order = int(max_order)
        self.center = np.broadcast_to(np.asarray(center, dtype=np.float64), (d,)).copy()
        self.scale = np.broadcast_to(np.asarray(scale, dtype=np.float64), (d,)).copy()
        if np.any(self.scale <= 0):
            raise ValueError("scale must be positive")
        assert self.size == math.comb(d + max_order, d)

    def _evaluate(self, X):
        Z = (X - self.center) / self.scale
        # powers[p][:, j] = Z[:, j]**p, built by repeated multiplication
        powers = [np.ones_like(Z)]
        for _ in range(self.max_order):
            powers.append(powers[-1] * Z)
        P = np.stack(powers)  # (order+1, n, d)
        out = np.ones((X.shape[0], self.size))
        for j in range(self.dim):
            out *= P[self.exponents[:, j], :, j].T
        return out

    def to_config(self):
        cfg = {"kind": self.kind, "max_order": self.max_order}
        if np.any(self.center != 0) or np.any(self.scale != 1):
            cfg["center"] = self.center.tolist() if self.dim > 1 else float(self.center[0])
            cfg["scale"] = self.scale.tolist() if self.dim > 1 else float(self.scale[0])
        return cfg


def fibonacci_sphere(n: int) -> np.ndarray:
    """``n`` near-uniform points on the unit sphere along a golden-angle spiral."""
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = i * (math.pi * (3.0 - math.sqrt(5.0)))
    pts = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


class VoronoiSphere(Dictionary):
    """Indicators of the spherical Voronoi cells of ``n`` Fibonacci centres.

    A point is radially projected onto the sphere and assigned to the centre
    at smallest Euclidean distance; ties go to the lowest index.
    """

    kind = "voronoi_sphere"
    bound = 1.0
    lipschitz = None
    is_partition = True

    def __init__(self, n: int):
        if n < 4:
            raise ValueError("Voronoi sphere dictionary needs at least 4 cells")
        super().__init__(n, 3)
        self.centers = fibonacci_sphere(n)
        self.centers.setflags(write=False)

    def cell_index(self, X) -> np.ndarray:
        X = as_states(X, 3)
        norms = np.linalg.norm(X, axis=1)
        if np.any(norms == 0):
            raise ValueError("zero vector has no spherical projection")
        U = X / norms[:, None]
        out = np.empty(X.shape[0], dtype=np.int64)
        for a in range(0, X.shape[0], 4096):
            u = U[a:a + 4096]
            d2 = ((u[:, None, :] - self.centers[None, :, :]) ** 2).sum(axis=2)
            out[a:a + 4096] = np.argmin(d2, axis=1)
        return out

    def _evaluate(self, X):
        idx = self.cell_index(X)
        out = np.zeros((X.shape[0], self.size))
        out[np.arange(X.shape[0]), idx] = 1.0
        return out

    def to_config(self):
        return {"kind": self.kind, "n": self.size}


class SubsetDictionary(Dictionary):
    """The basis functions of ``parent`` at positions ``keep``, in that order."""

    def __init__(self, parent: Dictionary, keep: Sequence[int]):
        keep = np.asarray(keep, dtype=np.int64)
        if keep.size == 0:
            raise ValueError("subset must keep at least one function")
        if keep.min() < 0 or keep.max() >= parent.size:
            raise IndexError("subset index out of range")
        super().__init__(keep.size, parent.dim)
        self.parent = parent
        self.keep = keep
        self.kind = parent.kind
        self.bound = parent.bound
        self.lipschitz = parent.lipschitz
        self.is_partition = parent.is_partition

    def _evaluate(self, X):
        return self.parent._evaluate(X)[:, self.keep]

    def to_config(self):
        return dict(self.parent.to_config(), keep=self.keep.tolist())


def indicator_1d(a: float, b: float, n: int) -> Indicator1D:
    return Indicator1D(a, b, n)


def monomial(d: int, max_order: int, center=0.0, scale=1.0) -> Monomial:
    return Monomial(d, max_order, center, scale)


def voronoi_sphere(n: int) -> VoronoiSphere:
    return VoronoiSphere(n)


def from_config(cfg: dict, dim: Optional[int] = None) -> Dictionary:
    """Build a dictionary from its JSON description.

    ``monomial`` takes its dimension from ``cfg["d"]`` or from ``dim``.
    """
    kind = cfg.get("kind")
    if kind == "indicator1d":
        base = Indicator1D(cfg["a"], cfg["b"], cfg["n"])
    elif kind == "monomial":
        d = cfg.get("d", dim)
        if d is None:
            raise ValueError("monomial dictionary needs a dimension")
        base = Monomial(d, cfg["max_order"], cfg.get("center", 0.0), cfg.get("scale", 1.0))
    elif kind == "voronoi_sphere":
        base = VoronoiSphere(cfg["n"])
    else:
        raise ValueError(f"unknown dictionary kind {kind!r}")
    if "keep" in cfg:
        return base.subset(cfg["keep"])
    return base
