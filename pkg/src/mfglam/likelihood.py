"""Log-likelihood objectives for single- and multifidelity model fitting.

Objectives are plain callables of a flat coefficient vector.  Design
matrices are evaluated once at construction, so each call costs four
mat-vecs plus one batched quantile inversion over the data.  Any training
response outside its conditional support makes the whole objective -inf,
which is the feasibility signal the optimizers act on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gld
from .inputs import InputModel
from .pce import TruncationSet, basis_matrix

__all__ = [
    "Dataset",
    "SingleFidelityObjective",
    "MultiFidelityObjective",
    "single_loglik",
    "mf_loglik",
    "mf_weights",
    "glam_loglik_core",
]

HF = "HF"
LF = "LF"


@dataclass(frozen=True)
class Dataset:
    """Input matrix plus scalar responses; one evaluation per input sample.

    No replication structure is assumed; rows are independent draws.
    """

    X: np.ndarray
    y: np.ndarray
    fidelity: str = HF

    def __post_init__(self) -> None:
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if self.fidelity not in (HF, LF):
            raise ValueError(f"fidelity must be 'HF' or 'LF', got {self.fidelity!r}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def glam_loglik_core(y, s1, s2, s3, s4) -> float:
    """Sum of GLD log-densities with lambda2 = exp(s2); -inf on any violation."""
    if not (
        np.all(np.isfinite(s1))
        and np.all(np.isfinite(s2))
        and np.all(np.isfinite(s3))
        and np.all(np.isfinite(s4))
    ):
        return -np.inf
    with np.errstate(over="ignore"):
        l2 = np.exp(s2)
    logp = gld.log_pdf_batch(y, s1, l2, s3, s4)
    total = float(np.sum(logp))
    return total if np.isfinite(total) else -np.inf


def _split(theta: np.ndarray, sizes) -> list[np.ndarray]:
    out = []
    pos = 0
    for k in sizes:
        out.append(theta[pos : pos + k])
        pos += k
    if pos != theta.shape[0]:
        raise ValueError(f"theta has {theta.shape[0]} entries, expected {pos}")
    return out


class SingleFidelityObjective:
    """Single-fidelity GLaM log-likelihood as a function of the coefficients.

    The coefficient vector concatenates the four expansions in order
    (lambda1, lambda2-series, lambda3, lambda4).
    """

    def __init__(self, data: Dataset, input_model: InputModel, truncations) -> None:
        truncations = tuple(truncations)
        if len(truncations) != 4:
            raise ValueError("four truncation sets are required")
        if data.n == 0:
            raise ValueError("dataset must be nonempty")
        xi = input_model.to_standard(data.X)
        kinds = input_model.basis_kinds
        self.data = data
        self.input_model = input_model
        self.truncations = truncations
        self.design = [basis_matrix(xi, t, kinds) for t in truncations]
        self.sizes = tuple(len(t) for t in truncations)
        self.n_params = int(sum(self.sizes))

    def split(self, theta: np.ndarray) -> list[np.ndarray]:
        return _split(np.asarray(theta, dtype=float), self.sizes)

    def __call__(self, theta: np.ndarray) -> float:
        c = self.split(theta)
        s = [self.design[i] @ c[i] for i in range(4)]
        return glam_loglik_core(self.data.y, *s)


def mf_weights(p: float, n_lf: int, n_hf: int) -> tuple[float, float]:
    """(w_L, w_H) importance weights; w_L*N_L + w_H*N_H = N_L + N_H exactly."""
    if not (0.0 < p < 1.0):
        raise ValueError(f"fidelity weight p must lie in (0, 1), got {p}")
    if n_lf < 1 or n_hf < 1:
        raise ValueError("both datasets must be nonempty")
    total = n_lf + n_hf
    return p * total / n_lf, (1.0 - p) * total / n_hf


class MultiFidelityObjective:
    """Weighted joint log-likelihood over LF data (base model) and HF data
    (base plus discrepancy).

    theta concatenates the four LF series coefficient blocks followed by
    the four discrepancy blocks; shape discrepancies may be empty blocks.
    """

    def __init__(
        self,
        hf: Dataset,
        lf: Dataset,
        input_model: InputModel,
        lf_truncations,
        delta_truncations,
        lf_columns,
        p: float = 0.5,
    ) -> None:
        lf_truncations = tuple(lf_truncations)
        delta_truncations = tuple(delta_truncations)
        if len(lf_truncations) != 4 or len(delta_truncations) != 4:
            raise ValueError("four LF and four discrepancy truncation sets are required")
        if hf.n == 0 or lf.n == 0:
            raise ValueError("both datasets must be nonempty")
        cols = tuple(int(c) for c in lf_columns)
        lf_input = input_model.subset(cols)
        if lf.dim == input_model.dim:
            lf_x = lf.X[:, cols]
        elif lf.dim == len(cols):
            lf_x = lf.X
        else:
            raise ValueError(
                f"LF data has {lf.dim} columns; expected {len(cols)} or {input_model.dim}"
            )
        xi_lf = lf_input.to_standard(lf_x)
        xi_hf_on_lf = lf_input.to_standard(hf.X[:, cols])
        xi_hf = input_model.to_standard(hf.X)
        kl, kh = lf_input.basis_kinds, input_model.basis_kinds
        self.hf, self.lf = hf, lf
        self.p = float(p)
        self.w_lf, self.w_hf = mf_weights(p, lf.n, hf.n)
        self.lf_truncations = lf_truncations
        self.delta_truncations = delta_truncations
        self.lf_columns = cols
        self.design_lf = [basis_matrix(xi_lf, t, kl) for t in lf_truncations]
        self.design_hf_base = [basis_matrix(xi_hf_on_lf, t, kl) for t in lf_truncations]
        self.design_hf_delta = [basis_matrix(xi_hf, t, kh) for t in delta_truncations]
        self.c_sizes = tuple(len(t) for t in lf_truncations)
        self.d_sizes = tuple(len(t) for t in delta_truncations)
        self.n_params = int(sum(self.c_sizes) + sum(self.d_sizes))

    def split(self, theta: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        parts = _split(np.asarray(theta, dtype=float), self.c_sizes + self.d_sizes)
        return parts[:4], parts[4:]

    def __call__(self, theta: np.ndarray) -> float:
        c, d = self.split(theta)
        s_lf = [self.design_lf[i] @ c[i] for i in range(4)]
        ll_lf = glam_loglik_core(self.lf.y, *s_lf)
        if ll_lf == -np.inf:
            return -np.inf
        s_hf = [
            self.design_hf_base[i] @ c[i]
            + (self.design_hf_delta[i] @ d[i] if d[i].shape[0] else 0.0)
            for i in range(4)
        ]
        ll_hf = glam_loglik_core(self.hf.y, *s_hf)
        if ll_hf == -np.inf:
            return -np.inf
        return self.w_lf * ll_lf + self.w_hf * ll_hf


def single_loglik(coefficients, data: Dataset, input_model: InputModel, truncations) -> float:
    """One-shot evaluation; use :class:`SingleFidelityObjective` in loops."""
    obj = SingleFidelityObjective(data, input_model, truncations)
    return obj(np.concatenate([np.asarray(c, dtype=float).ravel() for c in coefficients]))


def mf_loglik(
    c,
    d,
    hf: Dataset,
    lf: Dataset,
    input_model: InputModel,
    lf_truncations,
    delta_truncations,
    lf_columns,
    p: float = 0.5,
) -> float:
    """One-shot evaluation; use :class:`MultiFidelityObjective` in loops."""
    obj = MultiFidelityObjective(
        hf, lf, input_model, lf_truncations, delta_truncations, lf_columns, p
    )
    theta = np.concatenate(
        [np.asarray(v, dtype=float).ravel() for v in list(c) + list(d)]
    )
    return obj(theta)
