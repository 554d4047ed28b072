"""Probabilistic input models: independent marginals, standardization, designs.

Marginals are uniform, Gaussian, or lognormal (parameterized by the mean
and standard deviation of the log).  Each marginal maps to a standardized
variable carrying an orthonormal polynomial family: uniforms go to [-1, 1]
(Legendre), Gaussians and lognormals to a standard normal (Hermite).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .pce import HERMITE, LEGENDRE

__all__ = ["Marginal", "InputModel"]


@dataclass(frozen=True)
class Marginal:
    """One independent input variable.

    ``kind`` is "uniform", "gaussian", or "lognormal"; ``a``/``b`` hold
    (lower, upper), (mean, std), or (log-mean, log-std) respectively.
    """

    kind: str
    a: float
    b: float

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "gaussian", "lognormal"):
            raise ValueError(f"unknown marginal kind {self.kind!r}")
        if self.kind == "uniform" and not self.b > self.a:
            raise ValueError(f"uniform bounds must satisfy b > a, got ({self.a}, {self.b})")
        if self.kind in ("gaussian", "lognormal") and not self.b > 0.0:
            raise ValueError(f"{self.kind} std must be positive, got {self.b}")

    @classmethod
    def uniform(cls, a: float, b: float) -> "Marginal":
        return cls("uniform", float(a), float(b))

    @classmethod
    def gaussian(cls, mu: float, sigma: float) -> "Marginal":
        return cls("gaussian", float(mu), float(sigma))

    @classmethod
    def lognormal(cls, mu_log: float, sigma_log: float) -> "Marginal":
        return cls("lognormal", float(mu_log), float(sigma_log))

    @property
    def basis_kind(self) -> str:
        return LEGENDRE if self.kind == "uniform" else HERMITE

    def to_standard(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            return 2.0 * (x - self.a) / (self.b - self.a) - 1.0
        if self.kind == "gaussian":
            return (x - self.a) / self.b
        if np.any(x <= 0.0):
            raise ValueError("lognormal variables must be positive")
        return (np.log(x) - self.a) / self.b

    def from_standard(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "uniform":
            return self.a + 0.5 * (z + 1.0) * (self.b - self.a)
        if self.kind == "gaussian":
            return self.a + self.b * z
        return np.exp(self.a + self.b * z)

    def ppf(self, u):
        """Inverse CDF in physical units."""
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform":
            return self.a + u * (self.b - self.a)
        z = special.ndtri(u)
        return self.from_standard(z) if self.kind != "gaussian" else self.a + self.b * z

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            return np.clip((x - self.a) / (self.b - self.a), 0.0, 1.0)
        return special.ndtr(self.to_standard(x))


@dataclass(frozen=True)
class InputModel:
    """Ordered list of independent marginals with unique names."""

    marginals: tuple[Marginal, ...]
    names: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "marginals", tuple(self.marginals))
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.marginals) == 0:
            raise ValueError("at least one marginal is required")
        if len(self.names) != len(self.marginals):
            raise ValueError("need one name per marginal")
        if len(set(self.names)) != len(self.names):
            raise ValueError("marginal names must be unique")

    @property
    def dim(self) -> int:
        return len(self.marginals)

    @property
    def basis_kinds(self) -> tuple[str, ...]:
        return tuple(m.basis_kind for m in self.marginals)

    def subset(self, columns) -> "InputModel":
        cols = list(columns)
        return InputModel(
            tuple(self.marginals[c] for c in cols), tuple(self.names[c] for c in cols)
        )

    def to_standard(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        self._check_dim(x)
        return np.column_stack([m.to_standard(x[:, j]) for j, m in enumerate(self.marginals)])

    def from_standard(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        self._check_dim(z)
        return np.column_stack([m.from_standard(z[:, j]) for j, m in enumerate(self.marginals)])

    def lhs_sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Latin hypercube design: one jittered point per equiprobable stratum
        and per coordinate, mapped through the marginal inverse CDFs."""
        if n < 1:
            raise ValueError("n must be >= 1")
        cols = []
        for m in self.marginals:
            strata = rng.permutation(n)
            u = (strata + rng.random(n)) / n
            cols.append(m.ppf(u))
        return np.column_stack(cols)

    def mc_sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Plain i.i.d. design."""
        if n < 0:
            raise ValueError("n must be >= 0")
        u = rng.random((n, self.dim))
        return np.column_stack([m.ppf(u[:, j]) for j, m in enumerate(self.marginals)])

    def _check_dim(self, x: np.ndarray) -> None:
        if x.shape[1] != self.dim:
            raise ValueError(f"points have dimension {x.shape[1]}, expected {self.dim}")
