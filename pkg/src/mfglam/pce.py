"""Multivariate orthonormal polynomial bases under hyperbolic truncation.

A truncation set collects the multi-indices alpha with q-quasi-norm
(sum_i alpha_i^q)^(1/q) <= p; q = 1 gives the full total-degree basis and
q < 1 thins out interaction terms.  Basis functions are tensor products of
univariate orthonormal polynomials: Legendre on [-1, 1] (uniform weight)
for bounded marginals and probabilists' Hermite (standard Gaussian weight)
for Gaussianized ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

__all__ = ["TruncationSet", "generate_truncation", "eval_basis", "basis_matrix", "LEGENDRE", "HERMITE"]

LEGENDRE = "legendre"
HERMITE = "hermite"

_QNORM_TOL = 1e-9


@dataclass(frozen=True)
class TruncationSet:
    """Ordered multi-index set for one expansion.

    ``indices`` has shape (n_terms, dim); rows are unique and sorted in
    graded lexicographic order so serialized models are bit-stable.  ``p``
    and ``q`` record the generating hyperbolic set; a sparse solver may
    retain only a subset of its rows.
    """

    dim: int
    p: int
    q: float
    indices: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        idx = np.asarray(self.indices, dtype=int)
        if idx.ndim != 2 or idx.shape[1] != self.dim:
            raise ValueError(f"indices must have shape (*, {self.dim})")
        if np.any(idx < 0):
            raise ValueError("multi-indices must be nonnegative")
        object.__setattr__(self, "indices", _graded_lex_sort(idx))

    def __len__(self) -> int:
        return self.indices.shape[0]

    @property
    def total_degrees(self) -> np.ndarray:
        return self.indices.sum(axis=1)

    def subset(self, rows) -> "TruncationSet":
        return TruncationSet(self.dim, self.p, self.q, self.indices[np.asarray(rows)])

    def index_of_constant(self) -> int:
        hits = np.nonzero(self.total_degrees == 0)[0]
        return int(hits[0]) if hits.size else -1


def _graded_lex_sort(indices: np.ndarray) -> np.ndarray:
    if indices.shape[0] == 0:
        return indices
    keys = tuple(indices[:, j] for j in reversed(range(indices.shape[1])))
    order = np.lexsort(keys + (indices.sum(axis=1),))
    out = indices[order]
    if np.unique(out, axis=0).shape[0] != out.shape[0]:
        raise ValueError("multi-indices must be unique")
    return out


def _total_degree_indices(dim: int, p: int) -> np.ndarray:
    """All alpha in N^dim with sum(alpha) <= p."""
    rows: list[list[int]] = []

    def rec(prefix: list[int], remaining: int, slots: int) -> None:
        if slots == 0:
            rows.append(prefix)
            return
        for d in range(remaining + 1):
            rec(prefix + [d], remaining - d, slots - 1)

    rec([], p, dim)
    return np.asarray(rows, dtype=int)


def generate_truncation(dim: int, p: int, q: float) -> TruncationSet:
    """Hyperbolic truncation set: all alpha with ||alpha||_q <= p.

    For q <= 1 the q-quasi-norm dominates the total degree, so candidates
    are enumerated from the total-degree simplex and filtered.  The
    boundary test allows a small tolerance so exact-boundary indices such
    as a single entry equal to p survive floating-point roundoff.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if p < 0:
        raise ValueError("p must be >= 0")
    if not (0.0 < q <= 1.0):
        raise ValueError(f"q must lie in (0, 1], got {q}")
    cand = _total_degree_indices(dim, p)
    if q == 1.0:
        keep = cand
    else:
        norm_q = (cand.astype(float) ** q).sum(axis=1)
        keep = cand[norm_q <= p**q * (1.0 + _QNORM_TOL) + _QNORM_TOL]
    return TruncationSet(dim, p, q, keep)


def _legendre_table(x: np.ndarray, degree: int) -> np.ndarray:
    """Orthonormal Legendre values, shape (degree+1, n); weight U(-1, 1)."""
    x = np.asarray(x, dtype=float)
    tab = np.empty((degree + 1,) + x.shape, dtype=float)
    tab[0] = 1.0
    if degree >= 1:
        tab[1] = x
    for k in range(1, degree):
        tab[k + 1] = ((2 * k + 1) * x * tab[k] - k * tab[k - 1]) / (k + 1)
    norms = np.sqrt(2.0 * np.arange(degree + 1) + 1.0)
    return tab * norms.reshape((-1,) + (1,) * x.ndim)


def _hermite_table(x: np.ndarray, degree: int) -> np.ndarray:
    """Orthonormal probabilists' Hermite values, weight N(0, 1)."""
    x = np.asarray(x, dtype=float)
    tab = np.empty((degree + 1,) + x.shape, dtype=float)
    tab[0] = 1.0
    if degree >= 1:
        tab[1] = x
    for k in range(1, degree):
        tab[k + 1] = x * tab[k] - k * tab[k - 1]
    norms = np.sqrt(special.factorial(np.arange(degree + 1)))
    return tab / norms.reshape((-1,) + (1,) * x.ndim)


_TABLES = {LEGENDRE: _legendre_table, HERMITE: _hermite_table}


def basis_matrix(xi: np.ndarray, truncation: TruncationSet, kinds) -> np.ndarray:
    """Design matrix of the orthonormal basis at standardized points.

    Parameters
    ----------
    xi : array, shape (n, dim)
        Standardized coordinates (Legendre marginals on [-1, 1], Hermite
        marginals standard normal).
    kinds : sequence of str
        Polynomial family per coordinate, ``"legendre"`` or ``"hermite"``.

    Returns
    -------
    array, shape (n, len(truncation))
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    if xi.shape[1] != truncation.dim:
        raise ValueError(f"xi has dimension {xi.shape[1]}, expected {truncation.dim}")
    if len(kinds) != truncation.dim:
        raise ValueError("one polynomial family required per coordinate")
    idx = truncation.indices
    out = np.ones((xi.shape[0], idx.shape[0]), dtype=float)
    if idx.shape[0] == 0:
        return out[:, :0]
    for j in range(truncation.dim):
        deg = int(idx[:, j].max(initial=0))
        if deg == 0:
            continue
        try:
            table = _TABLES[kinds[j]](xi[:, j], deg)
        except KeyError:
            raise ValueError(f"unknown polynomial family {kinds[j]!r}") from None
        out *= table[idx[:, j], :].T
    return out


def eval_basis(xi, truncation: TruncationSet, kinds) -> np.ndarray:
    """Basis values at a single standardized point, shape (len(truncation),)."""
    xi = np.asarray(xi, dtype=float)
    if xi.ndim != 1:
        raise ValueError("eval_basis expects a single point; use basis_matrix for batches")
    return basis_matrix(xi[None, :], truncation, kinds)[0]
