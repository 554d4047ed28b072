"""Built-in reference stochastic simulators and the repetition harness.

Two benchmark pairs are provided: a synthetic pair whose high- and
low-fidelity simulators are themselves generalized lambda models on
uniform([0, 2])^4 inputs, and a stochastic borehole pair where latent
hydrogeological variables are resampled on every call (three explicit
inputs for the high-fidelity model, two for the low-fidelity one).

The harness draws repeated training designs, fits LF-only, HF-only, and
multifidelity emulators, and scores each against a shared reference set.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .fit_mf import MfFitConfig, fit_mfglam
from .fit_single import CandidateGrid, FittingError, fit_glam
from .inputs import InputModel, Marginal
from .likelihood import Dataset
from .metrics import ReferenceSet, normalized_ws_error
from .model import EXP, IDENTITY, GlamModel, LambdaExpansion
from .optim import OptimConfig
from .pce import TruncationSet
from .seeding import derive_rng, derive_seed

__all__ = [
    "SyntheticPair",
    "synthetic_pair",
    "synthetic_hf",
    "synthetic_lf",
    "borehole_det",
    "borehole_det_lf",
    "borehole_hf",
    "borehole_lf",
    "borehole_hf_batch",
    "borehole_lf_batch",
    "borehole_hf_replicate",
    "synthetic_input_model",
    "borehole_hf_input_model",
    "borehole_lf_input_model",
    "ExperimentPlan",
    "ExperimentReport",
    "run_experiment",
]


# ---------------------------------------------------------------------------
# synthetic pair: both fidelities are GLaMs with fixed sparse coefficients
# ---------------------------------------------------------------------------

# multi-index "2100" means Legendre order 2 in x1 and order 1 in x2;
# coefficients apply to the orthonormal basis on standardized [-1, 1]
_SYNTH_HF = {
    "lambda1": {
        (0, 0, 0, 0): 2.0,
        (0, 0, 0, 1): 3.5,
        (0, 0, 1, 0): 2.45,
        (0, 1, 0, 0): -0.5,
        (1, 0, 0, 0): 0.2,
        (0, 0, 2, 0): 0.05,
        (0, 2, 0, 0): 2.3,
        (2, 0, 0, 0): 2.3,
        (0, 0, 1, 1): 0.12,
        (1, 1, 0, 0): 0.5,
        (2, 1, 0, 0): 0.04,
        (1, 1, 1, 0): 0.02,
    },
    "lambda2": {
        (0, 0, 0, 0): 1.2,
        (0, 0, 0, 1): -1.1,
        (0, 1, 0, 0): 0.3,
        (1, 0, 0, 0): 0.8,
    },
    "lambda3": {(0, 0, 0, 0): 0.38, (0, 0, 1, 0): 0.2},
    "lambda4": {(0, 0, 0, 0): 0.4},
}

_SYNTH_LF = {
    "lambda1": {
        (0, 0, 0, 0): 2.2,
        (0, 0, 0, 1): 2.0,
        (0, 0, 1, 0): 3.0,
        (0, 1, 0, 0): -0.3,
        (0, 2, 0, 0): 2.0,
        (2, 0, 0, 0): 2.5,
        (2, 1, 0, 0): 0.041,
        (1, 1, 1, 0): 0.022,
    },
    "lambda2": {
        (0, 0, 0, 0): 0.5,
        (0, 0, 0, 1): -0.1,
        (0, 1, 0, 0): 1.0,
    },
    "lambda3": {(0, 0, 0, 0): 0.35, (0, 0, 1, 0): 0.2},
    "lambda4": {(0, 0, 0, 0): 0.42},
}


def synthetic_input_model() -> InputModel:
    return InputModel(
        tuple(Marginal.uniform(0.0, 2.0) for _ in range(4)),
        ("x1", "x2", "x3", "x4"),
    )


def _expansion_from_table(table: dict, link: str) -> LambdaExpansion:
    indices = np.asarray(list(table.keys()), dtype=int)
    trunc = TruncationSet(4, int(indices.sum(axis=1).max()), 1.0, indices)
    # re-align coefficients with the canonical graded-lex ordering
    coef = np.empty(len(trunc))
    lookup = {tuple(k): v for k, v in table.items()}
    for i, row in enumerate(trunc.indices):
        coef[i] = lookup[tuple(row)]
    return LambdaExpansion(trunc, coef, link)


@dataclass(frozen=True)
class SyntheticPair:
    """True high- and low-fidelity synthetic GLaMs."""

    hf: GlamModel
    lf: GlamModel


def synthetic_pair() -> SyntheticPair:
    im = synthetic_input_model()
    links = {"lambda1": IDENTITY, "lambda2": EXP, "lambda3": IDENTITY, "lambda4": IDENTITY}
    hf = GlamModel(im, tuple(_expansion_from_table(_SYNTH_HF[k], links[k]) for k in links))
    lf = GlamModel(im, tuple(_expansion_from_table(_SYNTH_LF[k], links[k]) for k in links))
    return SyntheticPair(hf, lf)


_SYNTH = None


def _synth() -> SyntheticPair:
    global _SYNTH
    if _SYNTH is None:
        _SYNTH = synthetic_pair()
    return _SYNTH


def synthetic_hf(x, rng: np.random.Generator) -> float:
    """One draw of the high-fidelity synthetic simulator at x in [0, 2]^4."""
    return float(_synth().hf.sample_at(np.asarray(x, dtype=float)[None, :], rng)[0])


def synthetic_lf(x, rng: np.random.Generator) -> float:
    return float(_synth().lf.sample_at(np.asarray(x, dtype=float)[None, :], rng)[0])


# ---------------------------------------------------------------------------
# stochastic borehole
# ---------------------------------------------------------------------------

_BOREHOLE_MARGINALS = {
    "r_w": Marginal.gaussian(0.1, 0.016),
    "h_u": Marginal.uniform(990.0, 1110.0),
    "k_w": Marginal.uniform(9855.0, 12045.0),
    "r": Marginal.lognormal(7.71, 1.0056),
    "t_u": Marginal.uniform(63070.0, 115600.0),
    "t_l": Marginal.uniform(63.1, 116.0),
    "h_l": Marginal.uniform(700.0, 820.0),
    "l": Marginal.uniform(1120.0, 1680.0),
}

_HF_EXPLICIT = ("r_w", "h_u", "k_w")
_HF_LATENT = ("r", "t_u", "t_l", "h_l", "l")
_LF_EXPLICIT = ("r_w", "h_u")
_LF_LATENT = ("k_w", "r", "t_u", "t_l", "h_l", "l")


def borehole_hf_input_model() -> InputModel:
    return InputModel(tuple(_BOREHOLE_MARGINALS[n] for n in _HF_EXPLICIT), _HF_EXPLICIT)


def borehole_lf_input_model() -> InputModel:
    return InputModel(tuple(_BOREHOLE_MARGINALS[n] for n in _LF_EXPLICIT), _LF_EXPLICIT)


def _borehole_core(r_w, r, t_u, h_u, t_l, h_l, l, k_w, numerator_factor, offset):
    r_w, r, t_u, h_u, t_l, h_l, l, k_w = (
        np.asarray(v, dtype=float) for v in (r_w, r, t_u, h_u, t_l, h_l, l, k_w)
    )
    if np.any(r <= r_w):
        raise ValueError("radius of influence must exceed the borehole radius (r > r_w)")
    if np.any(r_w <= 0) or np.any(t_u <= 0) or np.any(t_l <= 0) or np.any(l <= 0) or np.any(k_w <= 0):
        raise ValueError("physical borehole arguments must be positive")
    log_ratio = np.log(r / r_w)
    denom = log_ratio * (offset + 2.0 * l * t_u / (log_ratio * r_w**2 * k_w) + t_u / t_l)
    return numerator_factor * t_u * (h_u - h_l) / denom


def borehole_det(r_w, r, t_u, h_u, t_l, h_l, l, k_w):
    """Deterministic borehole water-flow rate (m^3/yr)."""
    return _borehole_core(r_w, r, t_u, h_u, t_l, h_l, l, k_w, 2.0 * np.pi, 1.0)


def borehole_det_lf(r_w, r, t_u, h_u, t_l, h_l, l, k_w):
    """Cheaper borehole variant: numerator constant 5, denominator offset 1.5."""
    return _borehole_core(r_w, r, t_u, h_u, t_l, h_l, l, k_w, 5.0, 1.5)


def _draw_latents(names, n: int, rng: np.random.Generator) -> dict:
    # latent variables are redrawn fresh on every call: no common random
    # numbers between evaluations
    return {name: _BOREHOLE_MARGINALS[name].ppf(rng.random(n)) for name in names}


def borehole_hf_batch(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One stochastic draw per row of explicit inputs (r_w, h_u, k_w)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    lat = _draw_latents(_HF_LATENT, x.shape[0], rng)
    return borehole_det(
        x[:, 0], lat["r"], lat["t_u"], x[:, 1], lat["t_l"], lat["h_l"], lat["l"], x[:, 2]
    )


def borehole_lf_batch(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One stochastic draw per row of explicit inputs (r_w, h_u)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    lat = _draw_latents(_LF_LATENT, x.shape[0], rng)
    return borehole_det_lf(
        x[:, 0], lat["r"], lat["t_u"], x[:, 1], lat["t_l"], lat["h_l"], lat["l"], lat["k_w"]
    )


def borehole_hf(r_w: float, h_u: float, k_w: float, rng: np.random.Generator) -> float:
    return float(borehole_hf_batch(np.array([[r_w, h_u, k_w]]), rng)[0])


def borehole_lf(r_w: float, h_u: float, rng: np.random.Generator) -> float:
    return float(borehole_lf_batch(np.array([[r_w, h_u]]), rng)[0])


def borehole_hf_replicate(x, n_rep: int, rng: np.random.Generator) -> np.ndarray:
    """n_rep independent high-fidelity draws at one fixed explicit input."""
    x = np.asarray(x, dtype=float)
    tiled = np.tile(x[None, :], (n_rep, 1))
    return borehole_hf_batch(tiled, rng)


# ---------------------------------------------------------------------------
# repetition experiment harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentPlan:
    """Desk-scale or full-scale repetition study configuration."""

    example: str = "synthetic"
    nh_values: tuple[int, ...] = (100, 200, 400, 800)
    n_lf: int = 1000
    repetitions: int = 25
    test_size: int = 1000
    replications: int = 250  # reference replications (borehole only)
    seed: int = 0
    p: float = 0.5
    workers: int = 1

    def __post_init__(self) -> None:
        if self.example not in ("synthetic", "borehole"):
            raise ValueError(f"unknown example {self.example!r}")
        for name in ("n_lf", "repetitions", "test_size", "replications"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.nh_values or any(v < 1 for v in self.nh_values):
            raise ValueError("nh_values must be nonempty positive counts")


@dataclass
class ExperimentReport:
    plan: ExperimentPlan
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def summary(self) -> list[dict]:
        """Median and interquartile range of eps_w per (n_hf, model)."""
        out = []
        for nh in self.plan.nh_values:
            for model_kind in ("LF", "HF", "MF"):
                vals = [
                    r["eps_w"]
                    for r in self.rows
                    if r["n_hf"] == nh and r["model"] == model_kind
                ]
                if not vals:
                    continue
                v = np.asarray(vals)
                out.append(
                    {
                        "example": self.plan.example,
                        "n_hf": nh,
                        "model": model_kind,
                        "n_runs": len(vals),
                        "median_eps_w": float(np.median(v)),
                        "iqr_eps_w": float(np.percentile(v, 75) - np.percentile(v, 25)),
                    }
                )
        return out

    def median_eps_w(self, nh: int, model_kind: str) -> float:
        for row in self.summary():
            if row["n_hf"] == nh and row["model"] == model_kind:
                return row["median_eps_w"]
        raise KeyError(f"no results for n_hf={nh}, model={model_kind}")

    def to_dict(self) -> dict:
        return {
            "plan": asdict(self.plan),
            "summary": self.summary(),
            "rows": self.rows,
            "failures": self.failures,
        }


def _build_reference(plan: ExperimentPlan) -> ReferenceSet:
    if plan.example == "synthetic":
        truth = synthetic_pair().hf
        x_test = synthetic_input_model().lhs_sample(plan.test_size, derive_rng(plan.seed, "test"))
        l1, l2, l3, l4 = truth.lambda_fields(x_test)
        return ReferenceSet(x_test, gld_params=np.column_stack([l1, l2, l3, l4]))
    im = borehole_hf_input_model()
    x_test = im.lhs_sample(plan.test_size, derive_rng(plan.seed, "test"))
    rng = derive_rng(plan.seed, "reference")
    samples = np.empty((plan.test_size, plan.replications))
    for i in range(plan.test_size):
        samples[i] = borehole_hf_replicate(x_test[i], plan.replications, rng)
    return ReferenceSet(x_test, samples=samples)


class _ProjectedModel:
    """Low-fidelity model evaluated at projected high-fidelity points."""

    def __init__(self, model: GlamModel, columns) -> None:
        self.model = model
        self.columns = tuple(columns)

    def lambda_fields(self, x):
        return self.model.lambda_fields(np.atleast_2d(np.asarray(x, dtype=float))[:, self.columns])

    def predict_moments(self, x):
        return self.model.predict_moments(np.atleast_2d(np.asarray(x, dtype=float))[:, self.columns])


def _example_setup(plan: ExperimentPlan):
    if plan.example == "synthetic":
        pair = synthetic_pair()
        return {
            "hf_input": synthetic_input_model(),
            "lf_columns": (0, 1, 2, 3),
            "sample_hf": lambda X, rng: pair.hf.sample_at(X, rng),
            "sample_lf": lambda X, rng: pair.lf.sample_at(X, rng),
        }
    return {
        "hf_input": borehole_hf_input_model(),
        "lf_columns": (0, 1),
        "sample_hf": borehole_hf_batch,
        "sample_lf": borehole_lf_batch,
    }


def _run_repetition(plan: ExperimentPlan, rep: int, reference: ReferenceSet):
    setup = _example_setup(plan)
    hf_input: InputModel = setup["hf_input"]
    lf_cols = setup["lf_columns"]
    lf_input = hf_input.subset(lf_cols)
    rows: list[dict] = []
    failures: list[str] = []

    x_lf = lf_input.lhs_sample(plan.n_lf, derive_rng(plan.seed, "lf-design", rep))
    y_lf = setup["sample_lf"](x_lf, derive_rng(plan.seed, "lf-eval", rep))
    lf_data = Dataset(x_lf, y_lf, "LF")

    lf_fit = None
    try:
        t0 = time.perf_counter()
        lf_fit = fit_glam(
            lf_data, lf_input, CandidateGrid.for_size(plan.n_lf),
            seed=derive_seed(plan.seed, "fit-lf", rep),
        )
        lf_time = time.perf_counter() - t0
        lf_metrics = normalized_ws_error(_ProjectedModel(lf_fit[0], lf_cols), reference)
    except (FittingError, ValueError) as err:
        failures.append(f"rep {rep} LF fit: {err}")
        lf_metrics = None

    for nh in plan.nh_values:
        x_hf = hf_input.lhs_sample(nh, derive_rng(plan.seed, "hf-design", rep, nh))
        y_hf = setup["sample_hf"](x_hf, derive_rng(plan.seed, "hf-eval", rep, nh))
        hf_data = Dataset(x_hf, y_hf, "HF")

        if lf_metrics is not None:
            rows.append(
                {
                    "example": plan.example, "n_hf": nh, "repetition": rep, "model": "LF",
                    "eps_w": lf_metrics.eps_w,
                    "nmse_mean": lf_metrics.nmse_mean, "nmse_var": lf_metrics.nmse_var,
                    "wall_time": lf_time, "seed": plan.seed,
                }
            )

        try:
            t0 = time.perf_counter()
            hf_model, _ = fit_glam(
                hf_data, hf_input, CandidateGrid.for_size(nh),
                seed=derive_seed(plan.seed, "fit-hf", rep, nh),
            )
            hf_time = time.perf_counter() - t0
            m = normalized_ws_error(hf_model, reference)
            rows.append(
                {
                    "example": plan.example, "n_hf": nh, "repetition": rep, "model": "HF",
                    "eps_w": m.eps_w, "nmse_mean": m.nmse_mean, "nmse_var": m.nmse_var,
                    "wall_time": hf_time, "seed": plan.seed,
                }
            )
        except (FittingError, ValueError) as err:
            failures.append(f"rep {rep} nh {nh} HF fit: {err}")

        if lf_fit is not None:
            try:
                t0 = time.perf_counter()
                mf_model, _ = fit_mfglam(
                    hf_data, lf_data, hf_input,
                    MfFitConfig(p=plan.p, lf_columns=lf_cols),
                    seed=derive_seed(plan.seed, "fit-mf", rep, nh),
                    lf_fit=lf_fit,
                )
                mf_time = time.perf_counter() - t0
                m = normalized_ws_error(mf_model, reference)
                rows.append(
                    {
                        "example": plan.example, "n_hf": nh, "repetition": rep, "model": "MF",
                        "eps_w": m.eps_w, "nmse_mean": m.nmse_mean, "nmse_var": m.nmse_var,
                        "wall_time": mf_time, "seed": plan.seed,
                    }
                )
            except (FittingError, ValueError) as err:
                failures.append(f"rep {rep} nh {nh} MF fit: {err}")
        else:
            failures.append(f"rep {rep} nh {nh} MF fit skipped: no LF model")

    return rows, failures


def _run_repetition_star(args):
    return _run_repetition(*args)


def run_experiment(plan: ExperimentPlan) -> ExperimentReport:
    """Run the full repetition study; single fit failures are recorded and
    excluded rather than fatal.  Bit-reproducible for a fixed plan."""
    reference = _build_reference(plan)
    report = ExperimentReport(plan)
    jobs = [(plan, rep, reference) for rep in range(plan.repetitions)]
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            results = list(pool.map(_run_repetition_star, jobs))
    else:
        results = [_run_repetition_star(j) for j in jobs]
    for rows, failures in results:
        report.rows.extend(rows)
        report.failures.extend(failures)
    for failure in report.failures:
        warnings.warn(f"experiment cell failed: {failure}", RuntimeWarning, stacklevel=2)
    return report
