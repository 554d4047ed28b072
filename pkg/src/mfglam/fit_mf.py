"""Multifidelity GLaM fitting.

A base GLaM is first trained on the low-fidelity data alone; its bases and
coefficients seed a joint maximum-likelihood fit of base plus discrepancy
series over all data, repeated for every candidate discrepancy basis.  The
winner minimizes a modified BIC whose sample-size penalty uses the average
of the two dataset sizes.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .fit_single import (
    SMALL_N_THRESHOLD,
    CandidateGrid,
    FitReport,
    FittingError,
    fit_glam,
)
from .inputs import InputModel
from .likelihood import Dataset, MultiFidelityObjective
from .model import EXP, IDENTITY, GlamModel, LambdaExpansion, MfGlamModel
from .optim import InfeasibleStartError, OptimConfig, maximize
from .pce import TruncationSet, generate_truncation
from .seeding import derive_rng

__all__ = ["MfFitConfig", "MfFitReport", "mf_bic", "input_subset_map", "fit_mfglam"]

_WIDEN_STEPS = 5


def mf_bic(loglik: float, n_theta: int, n_hf: int, n_lf: int) -> float:
    """Modified BIC: -2 loglik + n_theta ln((N_L + N_H)/2).

    Coincides with the single-fidelity penalty when the two datasets have
    equal size.
    """
    if n_hf < 1 or n_lf < 1:
        raise ValueError("both sample counts must be >= 1")
    return -2.0 * float(loglik) + n_theta * np.log((n_lf + n_hf) / 2.0)


def input_subset_map(lf_columns, dim: int) -> tuple[int, ...]:
    """Validated column mapping projecting high-fidelity points onto the
    low-fidelity input coordinates."""
    cols = tuple(int(c) for c in lf_columns)
    if len(set(cols)) != len(cols):
        raise ValueError(f"duplicate column index in {cols}")
    if any(c < 0 or c >= dim for c in cols):
        raise ValueError(f"column index out of range for dimension {dim}: {cols}")
    if len(cols) == 0:
        raise ValueError("the low-fidelity model must use at least one input")
    return cols


@dataclass(frozen=True)
class MfFitConfig:
    """Discrepancy grid, fidelity weight, and column mapping."""

    p: float = 0.5
    delta1_degrees: tuple[int, ...] = (0, 1, 2)
    delta1_qnorms: tuple[float, ...] = (0.6, 1.0)
    delta2_degrees: tuple[int, ...] = (0, 1)
    delta2_qnorms: tuple[float, ...] = (1.0,)
    shape_discrepancy_degree: int | None = None  # None keeps delta3 = delta4 = 0
    lf_columns: tuple[int, ...] | None = None  # None means identical inputs
    lf_grid: CandidateGrid | None = None
    small_n_threshold: int = SMALL_N_THRESHOLD

    def __post_init__(self) -> None:
        if not (0.0 < self.p < 1.0):
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        for name in ("delta1_degrees", "delta1_qnorms", "delta2_degrees", "delta2_qnorms"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"empty discrepancy grid: {name}")

    def effective(self, n_hf: int) -> "MfFitConfig":
        """Grid actually used, reduced when the HF dataset is small."""
        if n_hf >= self.small_n_threshold:
            return self
        return MfFitConfig(
            p=self.p,
            delta1_degrees=tuple(d for d in self.delta1_degrees if d <= 1) or (0, 1),
            delta1_qnorms=(1.0,),
            delta2_degrees=tuple(d for d in self.delta2_degrees if d <= 1) or (0, 1),
            delta2_qnorms=(1.0,),
            shape_discrepancy_degree=self.shape_discrepancy_degree,
            lf_columns=self.lf_columns,
            lf_grid=self.lf_grid,
            small_n_threshold=self.small_n_threshold,
        )


@dataclass
class MfFitReport:
    lf_report: FitReport
    selected: dict
    loglik: float
    mf_bic: float
    n_params: int
    n_hf: int
    n_lf: int
    p: float
    bic_table: list = field(default_factory=list)
    optimizer_stage: str = ""
    converged: bool = False
    seed: int = 0
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lf_report"] = self.lf_report.to_dict()
        return out


def _unique_delta_candidates(dim: int, degrees, qnorms):
    seen = {}
    for p in degrees:
        for q in qnorms:
            trunc = generate_truncation(dim, p, q)
            key = tuple(map(tuple, trunc.indices))
            if key not in seen:
                seen[key] = (p, q, trunc)
    return sorted(seen.values(), key=lambda t: (len(t[2]), t[0], t[1]))


def fit_mfglam(
    hf: Dataset,
    lf: Dataset,
    input_model: InputModel,
    config: MfFitConfig | None = None,
    optim_config: OptimConfig | None = None,
    seed: int = 0,
    lf_fit: tuple[GlamModel, FitReport] | None = None,
) -> tuple[MfGlamModel, MfFitReport]:
    """Fit a multifidelity GLaM.

    ``input_model`` describes the full high-fidelity input space;
    ``config.lf_columns`` names the coordinates the low-fidelity model
    uses.  A precomputed LF fit (on the same LF data) can be passed to
    avoid refitting when several multifidelity models share it.
    """
    t_start = time.perf_counter()
    config = (config or MfFitConfig()).effective(hf.n)
    optim_config = optim_config or OptimConfig()
    if hf.n == 0 or lf.n == 0:
        raise FittingError("both datasets must be nonempty")

    cols = input_subset_map(
        config.lf_columns if config.lf_columns is not None else range(input_model.dim),
        input_model.dim,
    )
    lf_input = input_model.subset(cols)

    if lf_fit is None:
        lf_grid = config.lf_grid or CandidateGrid.for_size(lf.n)
        lf_data = lf if lf.dim == len(cols) else Dataset(lf.X[:, cols], lf.y, lf.fidelity)
        lf_model, lf_report = fit_glam(
            lf_data, lf_input, lf_grid, optim_config, seed=seed
        )
    else:
        lf_model, lf_report = lf_fit

    lf_truncs = tuple(e.truncation for e in lf_model.expansions)
    c0 = np.concatenate([e.coefficients for e in lf_model.expansions])

    # shape discrepancies are zero by default; a config switch enables a
    # low-order correction at extra optimization cost
    if config.shape_discrepancy_degree is None:
        shape_delta = TruncationSet(input_model.dim, 0, 1.0, np.zeros((0, input_model.dim), int))
        shape_cands = [(None, None, shape_delta)]
    else:
        shape_cands = [
            (
                config.shape_discrepancy_degree,
                1.0,
                generate_truncation(input_model.dim, config.shape_discrepancy_degree, 1.0),
            )
        ]

    cands1 = _unique_delta_candidates(input_model.dim, config.delta1_degrees, config.delta1_qnorms)
    cands2 = _unique_delta_candidates(input_model.dim, config.delta2_degrees, config.delta2_qnorms)

    best = None
    bic_table = []
    failures = []
    for (p1, q1, t1) in cands1:
        for (p2, q2, t2) in cands2:
            for (_, _, t_shape) in shape_cands:
                delta_truncs = (t1, t2, t_shape, t_shape)
                obj = MultiFidelityObjective(
                    hf, lf, input_model, lf_truncs, delta_truncs, cols, config.p
                )
                d0 = np.zeros(sum(len(t) for t in delta_truncs))
                theta0 = np.concatenate([c0, d0])
                rng = derive_rng(seed, "mf", p1, q1, p2, q2)
                try:
                    report = _maximize_with_widening(obj, theta0, optim_config, rng, t1, t2, lf_truncs)
                except (FittingError, InfeasibleStartError) as err:
                    failures.append(f"delta=({p1},{q1},{p2},{q2}): {err}")
                    continue
                score = mf_bic(report.loglik, obj.n_params, hf.n, lf.n)
                row = {
                    "p1_delta": p1, "q1_delta": q1,
                    "p2_delta": p2, "q2_delta": q2,
                    "n_params": obj.n_params,
                    "loglik": report.loglik,
                    "mf_bic": score,
                    "stage": report.stage,
                    "converged": report.converged,
                }
                bic_table.append(row)
                key = (score, obj.n_params, (p1, q1, p2, q2))
                # deterministic argmin: ties fall to fewer parameters, then
                # the lexicographically smaller grid tuple
                if best is None or key < best[0]:
                    best = (key, obj, report, delta_truncs, row)

    if best is None:
        raise FittingError(
            "all discrepancy candidates failed to fit: " + "; ".join(failures[:3])
        )

    key, obj, report, delta_truncs, row = best
    c, d = obj.split(report.theta_star)
    links = (IDENTITY, EXP, IDENTITY, IDENTITY)
    model = MfGlamModel(
        input_model,
        tuple(
            LambdaExpansion(t, coef, lk) for t, coef, lk in zip(lf_truncs, c, links)
        ),
        tuple(
            LambdaExpansion(t, coef, lk) for t, coef, lk in zip(delta_truncs, d, links)
        ),
        cols,
    )
    fit_report = MfFitReport(
        lf_report=lf_report,
        selected=row,
        loglik=report.loglik,
        mf_bic=key[0],
        n_params=obj.n_params,
        n_hf=hf.n,
        n_lf=lf.n,
        p=config.p,
        bic_table=bic_table,
        optimizer_stage=report.stage,
        converged=report.converged,
        seed=seed,
        wall_time=time.perf_counter() - t_start,
    )
    return model, fit_report


def _maximize_with_widening(obj, theta0, optim_config, rng, t1, t2, lf_truncs):
    """Handle infeasible joint starts, the common case when high-fidelity
    responses fall outside the support implied by the low-fidelity fit with
    zero discrepancy: lower the scale-discrepancy constant (each ln 2 step
    doubles the support width) until the objective is finite, then run the
    regular two-stage maximizer from the widened interior point."""
    if np.isfinite(obj(theta0)):
        return maximize(obj, theta0, optim_config, rng)

    const2 = t2.index_of_constant()
    if const2 < 0:
        raise FittingError("infeasible start and no constant term in the scale discrepancy")
    pos = sum(len(t) for t in lf_truncs) + len(t1) + const2
    theta = theta0.copy()
    for _ in range(_WIDEN_STEPS):
        theta[pos] -= np.log(2.0)
        if np.isfinite(obj(theta)):
            return maximize(obj, theta, optim_config, rng)
    raise FittingError("no feasible starting point after widening the scale")
