"""Fitted emulators: lambda fields over the input space and their predictions.

A single-fidelity model carries four polynomial expansions, one per GLD
parameter; the scale parameter's series sits inside an exponential link so
positivity holds by construction.  The multifidelity model adds four
discrepancy expansions on the high-fidelity input space (the two shape
discrepancies are empty by default); the scale fusion keeps base series and
discrepancy inside a single exponential.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import gld
from .inputs import InputModel, Marginal
from .pce import TruncationSet, basis_matrix

__all__ = [
    "LambdaExpansion",
    "GlamModel",
    "MfGlamModel",
    "serialize",
    "deserialize",
    "save_model",
    "load_model",
]

SCHEMA_VERSION = 1

IDENTITY = "identity"
EXP = "exp"


@dataclass(frozen=True)
class LambdaExpansion:
    """Polynomial series for one distribution parameter.

    ``link`` records how the series value maps to the parameter: identity
    for location and the two shapes, exp for the scale.
    """

    truncation: TruncationSet
    coefficients: np.ndarray
    link: str

    def __post_init__(self) -> None:
        coef = np.asarray(self.coefficients, dtype=float)
        object.__setattr__(self, "coefficients", coef)
        if coef.ndim != 1 or coef.shape[0] != len(self.truncation):
            raise ValueError(
                f"coefficient count {coef.shape} does not match {len(self.truncation)} indices"
            )
        if self.link not in (IDENTITY, EXP):
            raise ValueError(f"unknown link {self.link!r}")

    def series(self, xi: np.ndarray, kinds) -> np.ndarray:
        """Raw series value (before any link) at standardized points."""
        if len(self) == 0:
            return np.zeros(np.atleast_2d(xi).shape[0])
        return basis_matrix(xi, self.truncation, kinds) @ self.coefficients

    def __len__(self) -> int:
        return len(self.truncation)

    @classmethod
    def empty(cls, dim: int, link: str = IDENTITY) -> "LambdaExpansion":
        trunc = TruncationSet(dim, 0, 1.0, np.zeros((0, dim), dtype=int))
        return cls(trunc, np.zeros(0), link)


def _check_links(expansions) -> None:
    links = [e.link for e in expansions]
    if links != [IDENTITY, EXP, IDENTITY, IDENTITY]:
        raise ValueError(f"expected links (identity, exp, identity, identity), got {links}")


def _warn_if_outside(xi: np.ndarray) -> None:
    # polynomials extrapolate, so out-of-domain points are evaluated anyway
    # (validation designs occasionally graze the domain edge); only clearly
    # extreme standardized coordinates are flagged
    bad = np.abs(xi).max(initial=0.0)
    if bad > 8.0:
        warnings.warn(
            f"evaluation point far outside the input domain (|xi|={bad:.3g})",
            RuntimeWarning,
            stacklevel=3,
        )


@dataclass(frozen=True)
class GlamModel:
    """Single-fidelity generalized lambda model."""

    input: InputModel
    expansions: tuple[LambdaExpansion, LambdaExpansion, LambdaExpansion, LambdaExpansion]

    def __post_init__(self) -> None:
        object.__setattr__(self, "expansions", tuple(self.expansions))
        if len(self.expansions) != 4:
            raise ValueError("exactly four expansions are required")
        for e in self.expansions:
            if e.truncation.dim != self.input.dim:
                raise ValueError("expansion dimension does not match the input model")
        _check_links(self.expansions)

    # -- evaluation ---------------------------------------------------------

    def lambda_fields(self, x: np.ndarray) -> tuple[np.ndarray, ...]:
        """(lambda1..lambda4) arrays at physical points, shape (n,) each."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        xi = self.input.to_standard(x)
        _warn_if_outside(xi)
        kinds = self.input.basis_kinds
        s = [e.series(xi, kinds) for e in self.expansions]
        return s[0], np.exp(s[1]), s[2], s[3]

    def eval_lambda(self, x) -> gld.GldParams:
        l1, l2, l3, l4 = self.lambda_fields(np.asarray(x, dtype=float)[None, :])
        return gld.GldParams(float(l1[0]), float(l2[0]), float(l3[0]), float(l4[0]))

    def predict_quantiles(self, x, levels) -> np.ndarray:
        levels = np.asarray(levels, dtype=float)
        if np.any((levels < 0) | (levels > 1)):
            raise ValueError("quantile levels must lie in [0, 1]")
        l1, l2, l3, l4 = self.lambda_fields(np.atleast_2d(np.asarray(x, dtype=float)))
        return gld.quantile_batch(
            levels[None, :], l1[:, None], l2[:, None], l3[:, None], l4[:, None]
        )

    def predict_pdf(self, x, y_grid) -> np.ndarray:
        y_grid = np.asarray(y_grid, dtype=float)
        l1, l2, l3, l4 = self.lambda_fields(np.atleast_2d(np.asarray(x, dtype=float)))
        return gld.pdf_batch(
            y_grid[None, :], l1[:, None], l2[:, None], l3[:, None], l4[:, None]
        )

    def predict_moments(self, x) -> tuple[np.ndarray, np.ndarray]:
        """(mean, variance) arrays; NaN where the shapes leave moments undefined."""
        l1, l2, l3, l4 = self.lambda_fields(np.atleast_2d(np.asarray(x, dtype=float)))
        return gld.mean_batch(l1, l2, l3, l4), gld.variance_batch(l2, l3, l4)

    def sample_response(self, x, n: int, rng: np.random.Generator) -> np.ndarray:
        params = self.eval_lambda(np.asarray(x, dtype=float))
        return gld.sample(params, n, rng)

    def sample_at(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One response draw per row of x (the stochastic-simulator view)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        l1, l2, l3, l4 = self.lambda_fields(x)
        u = rng.random(x.shape[0])
        return np.asarray(gld.quantile_batch(u, l1, l2, l3, l4), dtype=float)


@dataclass(frozen=True)
class MfGlamModel:
    """Multifidelity generalized lambda model.

    ``lf_expansions`` live on the (possibly lower-dimensional) low-fidelity
    input space selected by ``lf_columns``; ``discrepancy_expansions`` live
    on the full high-fidelity space.  Parameter fusion is additive, with
    the lambda2 series summed inside one exponential.
    """

    input: InputModel
    lf_expansions: tuple[LambdaExpansion, ...]
    discrepancy_expansions: tuple[LambdaExpansion, ...]
    lf_columns: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "lf_expansions", tuple(self.lf_expansions))
        object.__setattr__(self, "discrepancy_expansions", tuple(self.discrepancy_expansions))
        object.__setattr__(self, "lf_columns", tuple(int(c) for c in self.lf_columns))
        if len(self.lf_expansions) != 4 or len(self.discrepancy_expansions) != 4:
            raise ValueError("four LF and four discrepancy expansions are required")
        cols = self.lf_columns
        if len(set(cols)) != len(cols):
            raise ValueError(f"duplicate low-fidelity column in {cols}")
        if any(c < 0 or c >= self.input.dim for c in cols):
            raise ValueError(f"low-fidelity column out of range in {cols}")
        for e in self.lf_expansions:
            if e.truncation.dim != len(cols):
                raise ValueError("LF expansion dimension does not match lf_columns")
        for e in self.discrepancy_expansions:
            if e.truncation.dim != self.input.dim:
                raise ValueError("discrepancy expansion dimension does not match the input model")
        _check_links(self.lf_expansions)
        _check_links(self.discrepancy_expansions)

    @property
    def lf_input(self) -> InputModel:
        return self.input.subset(self.lf_columns)

    def lf_model(self) -> GlamModel:
        """The embedded low-fidelity GLaM on its own input space."""
        return GlamModel(self.lf_input, tuple(self.lf_expansions))

    def series_split(self, x: np.ndarray):
        """Raw LF and discrepancy series values at physical points."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        xi_lf = self.lf_input.to_standard(x[:, self.lf_columns])
        xi_hf = self.input.to_standard(x)
        _warn_if_outside(xi_hf)
        kinds_lf = self.lf_input.basis_kinds
        kinds_hf = self.input.basis_kinds
        lf = [e.series(xi_lf, kinds_lf) for e in self.lf_expansions]
        delta = [e.series(xi_hf, kinds_hf) for e in self.discrepancy_expansions]
        return lf, delta

    def lambda_fields(self, x: np.ndarray) -> tuple[np.ndarray, ...]:
        lf, delta = self.series_split(x)
        return (
            lf[0] + delta[0],
            np.exp(lf[1] + delta[1]),
            lf[2] + delta[2],
            lf[3] + delta[3],
        )

    # prediction operations share the single-fidelity implementations
    eval_lambda = GlamModel.eval_lambda
    predict_quantiles = GlamModel.predict_quantiles
    predict_pdf = GlamModel.predict_pdf
    predict_moments = GlamModel.predict_moments
    sample_response = GlamModel.sample_response
    sample_at = GlamModel.sample_at


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_LAMBDA_KEYS = ("lambda1", "lambda2", "lambda3", "lambda4")


def _expansion_to_doc(e: LambdaExpansion) -> dict:
    return {
        "indices": e.truncation.indices.tolist(),
        "coefficients": e.coefficients.tolist(),
        "link": e.link,
        "p": e.truncation.p,
        "q": e.truncation.q,
    }


def _expansion_from_doc(doc: dict, dim: int) -> LambdaExpansion:
    for key in ("indices", "coefficients", "link"):
        if key not in doc:
            raise ValueError(f"expansion document missing field {key!r}")
    indices = np.asarray(doc["indices"], dtype=int).reshape(-1, dim)
    trunc = TruncationSet(dim, int(doc.get("p", 0)), float(doc.get("q", 1.0)), indices)
    return LambdaExpansion(trunc, np.asarray(doc["coefficients"], dtype=float), doc["link"])


def _input_to_doc(im: InputModel) -> dict:
    return {
        "marginals": [
            {"name": n, "kind": m.kind, "a": m.a, "b": m.b}
            for n, m in zip(im.names, im.marginals)
        ]
    }


def _input_from_doc(doc: dict) -> InputModel:
    margs = doc["marginals"]
    return InputModel(
        tuple(Marginal(m["kind"], float(m["a"]), float(m["b"])) for m in margs),
        tuple(m["name"] for m in margs),
    )


def serialize(model) -> dict:
    """JSON-ready document; numbers keep full round-trip precision."""
    if isinstance(model, GlamModel):
        return {
            "version": SCHEMA_VERSION,
            "role": "glam",
            "input": _input_to_doc(model.input),
            "expansions": {
                k: _expansion_to_doc(e) for k, e in zip(_LAMBDA_KEYS, model.expansions)
            },
        }
    if isinstance(model, MfGlamModel):
        return {
            "version": SCHEMA_VERSION,
            "role": "mf-glam",
            "input": _input_to_doc(model.input),
            "lf_columns": list(model.lf_columns),
            "expansions": {
                k: _expansion_to_doc(e) for k, e in zip(_LAMBDA_KEYS, model.lf_expansions)
            },
            "discrepancy": {
                k: _expansion_to_doc(e)
                for k, e in zip(_LAMBDA_KEYS, model.discrepancy_expansions)
            },
        }
    raise TypeError(f"cannot serialize {type(model).__name__}")


def deserialize(doc: dict):
    """Inverse of :func:`serialize`; raises ValueError on schema violations."""
    if "version" not in doc:
        raise ValueError("model document missing mandatory 'version' field")
    if doc["version"] != SCHEMA_VERSION:
        raise ValueError(f"unknown model document version {doc['version']!r}")
    role = doc.get("role")
    input_model = _input_from_doc(doc["input"])
    if role == "glam":
        exps = tuple(
            _expansion_from_doc(doc["expansions"][k], input_model.dim) for k in _LAMBDA_KEYS
        )
        return GlamModel(input_model, exps)
    if role == "mf-glam":
        cols = tuple(int(c) for c in doc["lf_columns"])
        lf_dim = len(cols)
        lf = tuple(_expansion_from_doc(doc["expansions"][k], lf_dim) for k in _LAMBDA_KEYS)
        delta = tuple(
            _expansion_from_doc(doc["discrepancy"][k], input_model.dim) for k in _LAMBDA_KEYS
        )
        return MfGlamModel(input_model, lf, delta, cols)
    raise ValueError(f"unknown model role {role!r}")


def save_model(model, path) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, json.dumps(serialize(model), indent=2) + "\n")


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        return deserialize(json.load(fh))
