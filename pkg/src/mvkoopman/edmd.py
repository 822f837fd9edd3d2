"""Data-driven Galerkin matrices of the Koopman and Perron-Frobenius operators.

Given pairs ``(xi_m, x_T_m)`` and a dictionary ``psi``::

    G[i, j] = mean_m psi_i(xi_m)  psi_j(xi_m)
    C[i, j] = mean_m psi_i(x_T_m) psi_j(xi_m)
    K^T = C G^{-1}        P^T = C^T G^{-1}

Eigenvectors of ``K`` hold the coefficients of approximate Koopman
eigenfunctions ``f(x) = sum_i v_i psi_i(x)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._parallel import row_chunks, tree_sum
from .core import PairDataSet, as_states
from .dictionary import Dictionary, Indicator1D

log = logging.getLogger(__name__)

MAX_COND = 1e14
# samples per partial sum; fixed so assembly is bitwise reproducible
ASSEMBLY_BLOCK = 4096


class SingularGramError(np.linalg.LinAlgError):
    def __init__(self, cond):
        self.cond = cond
        super().__init__(
            f"Gram matrix singular (condition {cond:.3e}); increase samples, "
            "shrink dictionary, or set reg > 0")


class EigenError(np.linalg.LinAlgError):
    pass


def _blocked_cross(dictionary: Dictionary, A, B=None) -> np.ndarray:
    """``mean_m psi(A_m)^T psi(B_m)`` with a fixed blocking and pairwise reduction."""
    n = A.shape[0]
    parts = []
    for a, b in row_chunks(n, ASSEMBLY_BLOCK):
        PA = dictionary(A[a:b])
        PB = PA if B is None else dictionary(B[a:b])
        parts.append(PA.T @ PB)
    return tree_sum(parts) / n


def gram_matrix(dictionary: Dictionary, xi) -> np.ndarray:
    """Empirical Gram matrix; exactly symmetric (upper triangle mirrored)."""
    xi = as_states(xi, dictionary.dim)
    if xi.shape[0] < 1:
        raise ValueError("need at least one sample")
    S = _blocked_cross(dictionary, xi)
    upper = np.triu(S)
    return upper + np.triu(S, 1).T


def structure_matrix(dictionary: Dictionary, data: PairDataSet) -> np.ndarray:
    """``C[i, j] = mean_m psi_i(x_T_m) psi_j(xi_m)``: rows see terminal points."""
    if data.count < 1:
        raise ValueError("data set is empty")
    return _blocked_cross(dictionary, data.x_T, data.xi)


def _regularised(G, reg):
    if reg < 0:
        raise ValueError("ridge parameter must be nonnegative")
    Greg = np.asarray(G, dtype=np.float64) + reg * np.eye(G.shape[0])
    cond = float(np.linalg.cond(Greg))
    if not np.isfinite(cond) or cond > MAX_COND:
        raise SingularGramError(cond)
    return Greg, cond


def koopman_matrix(G, C, reg: float = 0.0, return_cond: bool = False):
    """Solve ``(G + reg I) K = C^T``, i.e. ``K^T = C (G + reg I)^{-1}``."""
    Greg, cond = _regularised(G, reg)
    K = np.linalg.solve(Greg, np.asarray(C).T)
    return (K, cond) if return_cond else K


def perron_matrix(G, C, reg: float = 0.0, return_cond: bool = False):
    """Solve ``(G + reg I) P = C``, i.e. ``P^T = C^T (G + reg I)^{-1}``."""
    Greg, cond = _regularised(G, reg)
    P = np.linalg.solve(Greg, np.asarray(C))
    return (P, cond) if return_cond else P


@dataclass
class OperatorMatrices:
    G: np.ndarray
    C: np.ndarray
    K: np.ndarray
    P: np.ndarray
    cond_G: float
    M: int
    dictionary: dict
    reg: float = 0.0


@dataclass
class SpectralResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, shape (N, n_eig)
    operator: str
    residuals: np.ndarray
    all_eigenvalues: np.ndarray = field(repr=False, default=None)

    @property
    def n_eig(self) -> int:
        return len(self.eigenvalues)

    def to_json(self, cond_G=None, N=None, M=None) -> dict:
        return {
            "operator": self.operator,
            "eigenvalues": [{"re": float(z.real), "im": float(z.imag)} for z in self.eigenvalues],
            "residuals": [float(r) for r in self.residuals],
            "cond_G": None if cond_G is None else float(cond_G),
            "N": N,
            "M": M,
        }


def _sort_order(w: np.ndarray) -> np.ndarray:
    # |lambda| desc, then real part desc, then imaginary part desc
    return np.lexsort((-w.imag, -w.real, -np.abs(w)))


def _fix_phase(V: np.ndarray) -> np.ndarray:
    V = V / np.linalg.norm(V, axis=0, keepdims=True)
    out = np.empty_like(V)
    for j in range(V.shape[1]):
        v = V[:, j]
        mag = np.abs(v)
        i = int(np.argmax(mag >= mag.max() * (1 - 1e-9)))
        out[:, j] = v * (np.conj(v[i]) / mag[i])
    return out


def spectrum(A, n_eig: Optional[int] = None, operator: str = "koopman") -> SpectralResult:
    """Dense eigendecomposition sorted by modulus, with reproducible phases.

    Eigenvectors are unit-norm with their largest component real and
    positive, so conjugate eigenpairs also carry conjugate vectors.
    """
    A = np.asarray(A, dtype=np.float64)
    N = A.shape[0]
    if n_eig is None:
        n_eig = N
    if not 1 <= n_eig <= N:
        raise ValueError(f"n_eig must be between 1 and N={N}")
    try:
        w, V = np.linalg.eig(A)
    except np.linalg.LinAlgError as err:
        raise EigenError(f"eigensolver failed ({err}); cond(A)={np.linalg.cond(A):.3e}") from err
    order = _sort_order(w)
    w = w[order].astype(complex)
    V = _fix_phase(V[:, order].astype(complex))
    norm_A = np.linalg.norm(A, 2)
    res = np.linalg.norm(A @ V - V * w, axis=0)
    return SpectralResult(eigenvalues=w[:n_eig], eigenvectors=V[:, :n_eig], operator=operator,
                          residuals=res[:n_eig] / max(norm_A, np.finfo(float).tiny),
                          all_eigenvalues=w)


def eval_eigenfunction(dictionary: Dictionary, v, xs, interpolate: bool = False) -> np.ndarray:
    """Values of ``f(x) = sum_i v_i psi_i(x)`` on a batch of points.

    With ``interpolate=True`` and a 1-D indicator dictionary the values are
    linearly interpolated between bin centres. This is for plotting only.
    """
    v = np.asarray(v)
    if v.shape != (dictionary.size,):
        raise ValueError(f"coefficient vector must have length {dictionary.size}")
    if interpolate:
        base = getattr(dictionary, "parent", dictionary)
        if isinstance(base, Indicator1D):
            centers = base.centers
            if dictionary is not base:
                centers = centers[dictionary.keep]
            x = as_states(xs, 1)[:, 0]
            re = np.interp(x, centers, v.real)
            if np.iscomplexobj(v):
                return re + 1j * np.interp(x, centers, v.imag)
            return re
    return dictionary(xs) @ v


@dataclass
class EdmdResult:
    matrices: OperatorMatrices
    koopman: SpectralResult
    perron: SpectralResult
    dictionary: Dictionary
    kept: np.ndarray


def drop_empty(dictionary: Dictionary, G: np.ndarray):
    """Indices of basis functions with nonzero Gram mass."""
    keep = np.nonzero(np.diag(G) > 0)[0]
    if keep.size < dictionary.size:
        log.warning("dropping %d basis functions with no data (kept %d of %d)",
                    dictionary.size - keep.size, keep.size, dictionary.size)
    return keep


def shift_augment(data: PairDataSet, shift: float, period: float) -> PairDataSet:
    """Append a copy of every pair shifted by ``shift`` modulo ``period``."""
    def wrap(x):
        y = np.mod(x + shift, period)
        return np.where(y >= period, 0.0, y)

    xi = np.vstack([data.xi, wrap(data.xi)])
    xT = np.vstack([data.x_T, wrap(data.x_T)])
    return PairDataSet(xi, xT, data.lag)


def run_edmd(dictionary: Dictionary, data: PairDataSet, reg: float = 0.0,
             n_eig: Optional[int] = None, drop_empty_bins: bool = True) -> EdmdResult:
    """Full pipeline: matrices, both spectra, and the dictionary actually used.

    For partition dictionaries (indicator bins, Voronoi cells) cells that hold
    no initial point are dropped when ``drop_empty_bins`` is set; any other
    rank deficiency surfaces as :class:`SingularGramError`.
    """
    G = gram_matrix(dictionary, data.xi)
    keep = np.arange(dictionary.size)
    used = dictionary
    if drop_empty_bins and dictionary.is_partition:
        keep = drop_empty(dictionary, G)
        if keep.size < dictionary.size:
            used = dictionary.subset(keep)
            G = G[np.ix_(keep, keep)]
    C = structure_matrix(used, data)
    K, cond = koopman_matrix(G, C, reg, return_cond=True)
    P = perron_matrix(G, C, reg)
    n = used.size if n_eig is None else min(n_eig, used.size)
    mats = OperatorMatrices(G=G, C=C, K=K, P=P, cond_G=cond, M=data.count,
                            dictionary=used.to_config(), reg=reg)
    return EdmdResult(matrices=mats, koopman=spectrum(K, n, "koopman"),
                      perron=spectrum(P, n, "perron_frobenius"), dictionary=used, kept=keep)
