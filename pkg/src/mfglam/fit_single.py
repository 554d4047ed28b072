"""Single-fidelity GLaM fitting.

Pipeline: a feasible-generalized-least-squares style initialization picks
sparse bases and starting coefficients for the location and log-scale
series from alternating mean / log-variance regressions; the two shape
bases are then escalated through a small candidate grid, refitting all
coefficients by maximum likelihood at each step and keeping the BIC
minimizer.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import special
from sklearn.linear_model import lars_path

from . import gld
from .inputs import InputModel
from .likelihood import Dataset, SingleFidelityObjective
from .model import EXP, IDENTITY, GlamModel, LambdaExpansion
from .optim import InfeasibleStartError, OptimConfig, maximize
from .pce import TruncationSet, basis_matrix, generate_truncation
from .seeding import derive_rng

__all__ = [
    "FittingError",
    "CandidateGrid",
    "FitReport",
    "bic",
    "hybrid_lar",
    "fgls_init",
    "fit_glam",
    "INITIAL_SHAPE",
    "SMALL_N_THRESHOLD",
]

# GLD with both shapes near 0.13 is approximately Gaussian: a neutral
# starting shape for the likelihood optimization
INITIAL_SHAPE = 0.13

# below this sample size the candidate grids switch to their reduced form
SMALL_N_THRESHOLD = 150

_FGLS_MAX_ITER = 10
_FGLS_TOL = 1e-3
_WIDEN_STEPS = 5


class FittingError(RuntimeError):
    """Raised when no candidate model can be fitted."""


@dataclass(frozen=True)
class CandidateGrid:
    """Candidate maximum degrees and q-norms per distribution parameter."""

    l1_degrees: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    l1_qnorms: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0)
    l2_degrees: tuple[int, ...] = (1, 2, 3, 4)
    l2_qnorms: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0)
    l3_degrees: tuple[int, ...] = (0, 1, 2)
    l3_qnorms: tuple[float, ...] = (0.6, 1.0)
    l4_degrees: tuple[int, ...] = (0, 1, 2)
    l4_qnorms: tuple[float, ...] = (0.6, 1.0)

    def __post_init__(self) -> None:
        for name in ("l1", "l2", "l3", "l4"):
            if not getattr(self, f"{name}_degrees") or not getattr(self, f"{name}_qnorms"):
                raise ValueError(f"empty candidate grid for {name}")

    @classmethod
    def default(cls) -> "CandidateGrid":
        return cls()

    @classmethod
    def reduced_small_n(cls) -> "CandidateGrid":
        """Restricted grid used for small training sets to limit overfitting."""
        return cls(
            l1_degrees=(1, 2),
            l1_qnorms=(0.6, 1.0),
            l2_degrees=(1,),
            l2_qnorms=(1.0,),
            l3_degrees=(0, 1),
            l3_qnorms=(1.0,),
            l4_degrees=(0, 1),
            l4_qnorms=(1.0,),
        )

    @classmethod
    def constant_only(cls) -> "CandidateGrid":
        """Degree-zero grid: one constant coefficient per parameter."""
        return cls(
            l1_degrees=(0,),
            l1_qnorms=(1.0,),
            l2_degrees=(0,),
            l2_qnorms=(1.0,),
            l3_degrees=(0,),
            l3_qnorms=(1.0,),
            l4_degrees=(0,),
            l4_qnorms=(1.0,),
        )

    @classmethod
    def for_size(cls, n: int, threshold: int = SMALL_N_THRESHOLD) -> "CandidateGrid":
        return cls.reduced_small_n() if n < threshold else cls.default()


@dataclass
class FitReport:
    """Everything needed to audit one fit."""

    selected: dict
    loglik: float
    bic: float
    n_obs: int
    n_params: int
    bic_table: list = field(default_factory=list)
    fgls_iterations: int = 0
    optimizer_stage: str = ""
    converged: bool = False
    seed: int = 0
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def bic(loglik: float, k: int, n: int) -> float:
    """Bayesian information criterion: -2 loglik + k ln n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return -2.0 * float(loglik) + k * np.log(n)


# ---------------------------------------------------------------------------
# sparse regression
# ---------------------------------------------------------------------------


def hybrid_lar(design: np.ndarray, y: np.ndarray, weights: np.ndarray | None = None):
    """Least-angle-regression path with per-support OLS refits.

    The constant column (if present, detected as the column with zero
    variance) is always kept.  Every prefix of the activation order is
    refitted by ordinary least squares and scored by the closed-form
    leave-one-out error (hat-matrix identity); the best support wins.
    Rank-deficient refits terminate the path, falling back to the smaller
    supports already scored.

    The path is scored incrementally: an orthonormal basis of the support
    span is grown one column at a time, which updates the projection
    residual and the hat-matrix diagonal in O(n * support) per step.

    Returns
    -------
    (coefficients, support, loo) : full-length coefficient vector with
    zeros off-support, the integer support indices, and the LOO error.
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, k = design.shape
    if n < 2:
        raise ValueError("at least two rows are required")
    if k == 0:
        raise ValueError("candidate basis must be nonempty")
    if weights is not None:
        sw = np.sqrt(np.asarray(weights, dtype=float))
        design = design * sw[:, None]
        y = y * sw

    col_var = design.var(axis=0)
    const_cols = np.nonzero(col_var < 1e-14 * max(1.0, float(col_var.max(initial=0.0))))[0]
    base = [int(const_cols[0])] if const_cols.size else []
    free = [j for j in range(k) if j not in base]

    order: list[int] = []
    if free:
        xc = design[:, free] - design[:, free].mean(axis=0)
        yc = y - y.mean()
        if np.linalg.norm(yc) > 0:
            _, active, _ = lars_path(xc, yc, method="lar")
            order = [free[int(j)] for j in active]

    # incremental orthonormalization along the path
    q_cols: list[np.ndarray] = []
    resid = y.copy()
    h = np.zeros(n)
    y_scale = max(float(np.linalg.norm(y)), 1e-300)

    def add_column(col: np.ndarray) -> bool:
        v = col.copy()
        for qc in q_cols:  # two Gram-Schmidt passes keep Q orthonormal
            v -= qc * (qc @ v)
        for qc in q_cols:
            v -= qc * (qc @ v)
        norm = float(np.linalg.norm(v))
        if norm <= 1e-10 * max(float(np.linalg.norm(col)), 1e-300):
            return False  # linearly dependent: rank-deficient support
        v /= norm
        q_cols.append(v)
        nonlocal resid
        resid = resid - v * (v @ resid)
        np.add(h, v**2, out=h)
        return True

    def current_loo() -> float:
        # hat-matrix leave-one-out error with the standard complexity
        # correction (n+k)/(n-k); without it, supports approaching n rows
        # win spuriously on small datasets
        k_active = len(q_cols)
        if k_active >= n:
            return np.inf
        denom = np.maximum(1.0 - h, 1e-12)
        raw = float(np.mean((resid / denom) ** 2))
        return raw * (n + k_active) / (n - k_active)

    loo_path: list[float] = []
    for col_idx in base:
        if not add_column(design[:, col_idx]):
            raise FittingError("degenerate constant column")
    if base:
        loo_path.append(current_loo())
    for step, col_idx in enumerate(order, start=1):
        if len(q_cols) >= n - 1:
            break
        if not add_column(design[:, col_idx]):
            break
        loo_path.append(current_loo())
        if float(np.linalg.norm(resid)) < 1e-12 * y_scale:
            break  # interpolating fit; larger supports cannot help

    if not loo_path:
        raise FittingError("no full-rank support found in the candidate basis")

    # parsimony rule: the cross-validation score has sampling noise of
    # order sqrt(2/n) relative, so take the smallest support whose score is
    # within that band of the path minimum instead of chasing spurious
    # reductions from the best of many noise columns
    offset = 1 if base else 0
    loo_arr = np.asarray(loo_path)
    tol = 1.0 + np.sqrt(2.0 / n)
    best_idx = int(np.nanargmin(loo_arr))
    within = np.nonzero(loo_arr <= loo_arr[best_idx] * tol)[0]
    chosen = int(within[0]) if within.size else best_idx
    best_size = chosen + 1 - offset
    best_loo = float(loo_arr[chosen])

    support = base + order[:best_size]
    coef_s, _, rank, _ = np.linalg.lstsq(design[:, support], y, rcond=None)
    if rank < len(support):
        raise FittingError("selected support became rank-deficient in the refit")
    coefficients = np.zeros(k)
    coefficients[support] = coef_s
    return coefficients, np.asarray(sorted(support), dtype=int), best_loo


def _select_expansion(xi, y, dim, kinds, degrees, qnorms, weights=None, design_cache=None):
    """Best (truncation, coefficients, loo) over a (degree, q-norm) grid."""
    best = None
    for p in degrees:
        for q in qnorms:
            key = (p, q)
            if design_cache is not None and key in design_cache:
                trunc, design = design_cache[key]
            else:
                trunc = generate_truncation(dim, p, q)
                design = basis_matrix(xi, trunc, kinds)
                if design_cache is not None:
                    design_cache[key] = (trunc, design)
            try:
                coef, support, loo = hybrid_lar(design, y, weights)
            except FittingError:
                continue
            if best is None or loo < best[3]:
                sub = trunc.subset(support)
                best = (sub, coef[support], (p, q), loo)
    if best is None:
        raise FittingError("all candidate bases were rank-deficient")
    return best


def _ensure_constant(trunc: TruncationSet, coef: np.ndarray):
    """Prepend the constant term if the sparse support dropped it."""
    if trunc.index_of_constant() >= 0:
        return trunc, coef
    idx = np.vstack([np.zeros((1, trunc.dim), dtype=int), trunc.indices])
    new = TruncationSet(trunc.dim, trunc.p, trunc.q, idx)
    out = np.zeros(len(new))
    # graded-lex order puts the constant first
    out[1:] = coef
    return new, out


@dataclass
class FglsResult:
    mean_truncation: TruncationSet
    mean_coefficients: np.ndarray
    logvar_truncation: TruncationSet
    logvar_coefficients: np.ndarray
    iterations: int
    proxy_loglik: float


def fgls_init(data: Dataset, input_model: InputModel, grid: CandidateGrid) -> FglsResult:
    """Alternating mean / log-variance regressions with inverse-variance
    reweighting of the mean fit, iterated to a loose fixed point.

    The log-variance coefficients are calibrated multiplicatively so the
    standardized residuals have unit mean square.
    """
    y = data.y
    n = y.shape[0]
    min_size = min(
        len(generate_truncation(input_model.dim, p, q))
        for p in grid.l1_degrees
        for q in grid.l1_qnorms
    )
    if n < min_size + 2:
        raise FittingError(f"need at least {min_size + 2} observations, got {n}")

    xi = input_model.to_standard(data.X)
    kinds = input_model.basis_kinds
    var_floor = 1e-12 * max(float(np.var(y)), 1e-300)
    cache_mean: dict = {}
    cache_var: dict = {}

    weights = None
    proxy_prev = None
    mean_sel = var_sel = None
    mean_degrees, mean_qnorms = grid.l1_degrees, grid.l1_qnorms
    var_degrees, var_qnorms = grid.l2_degrees, grid.l2_qnorms
    iterations = 0
    for iterations in range(1, _FGLS_MAX_ITER + 1):
        if iterations == 3:
            # freeze the (degree, q-norm) candidates after two sweeps; later
            # sweeps only re-run the sparse solver under the new weights
            mean_degrees, mean_qnorms = (mean_sel[2][0],), (mean_sel[2][1],)
            var_degrees, var_qnorms = (var_sel[2][0],), (var_sel[2][1],)
        mean_sel = _select_expansion(
            xi, y, input_model.dim, kinds, mean_degrees, mean_qnorms,
            weights=weights, design_cache=cache_mean,
        )
        m_trunc, m_coef = _ensure_constant(mean_sel[0], mean_sel[1])
        resid = y - basis_matrix(xi, m_trunc, kinds) @ m_coef

        r2 = np.maximum(resid**2, var_floor if var_floor > 0 else 1e-300)
        t = np.log(r2)
        var_sel = _select_expansion(
            xi, t, input_model.dim, kinds, var_degrees, var_qnorms,
            design_cache=cache_var,
        )
        v_trunc, v_coef = _ensure_constant(var_sel[0], var_sel[1])
        v_coef = v_coef.copy()
        g = basis_matrix(xi, v_trunc, kinds) @ v_coef
        # multiplicative calibration: standardized residuals get unit mean
        # square (also absorbs the log-chi-square regression bias)
        log_calib = float(special.logsumexp(t - g) - np.log(n))
        v_coef[v_trunc.index_of_constant()] += log_calib
        log_s2 = g + log_calib
        s2 = np.exp(np.clip(log_s2, -700.0, 700.0))
        weights = 1.0 / np.maximum(s2, 1e-300)

        proxy = -0.5 * float(np.sum(log_s2 + resid**2 / np.maximum(s2, 1e-300)))
        if proxy_prev is not None and abs(proxy - proxy_prev) <= _FGLS_TOL * (1.0 + abs(proxy_prev)):
            proxy_prev = proxy
            break
        proxy_prev = proxy

    m_trunc, m_coef = _ensure_constant(mean_sel[0], mean_sel[1])
    return FglsResult(m_trunc, m_coef, v_trunc, v_coef, iterations, proxy_prev)


def _initial_scale_series(fgls: FglsResult, shape0: float) -> np.ndarray:
    """Map the fitted log-variance series to the lambda2 (log-scale) series.

    Var[Y] = v(l3, l4) / lambda2^2, so at the initial shapes
    log lambda2(x) = 0.5 (log v - log sigma^2(x)).
    """
    v_shape = float(gld.variance_batch(1.0, shape0, shape0))
    c2 = -0.5 * fgls.logvar_coefficients
    c2 = c2.copy()
    const = fgls.logvar_truncation.index_of_constant()
    c2[const] += 0.5 * np.log(v_shape)
    return c2


def _unique_shape_candidates(dim: int, degrees, qnorms):
    """Distinct hyperbolic sets from a (degree, q) grid, smallest first."""
    seen = {}
    for p in degrees:
        for q in qnorms:
            trunc = generate_truncation(dim, p, q)
            key = tuple(map(tuple, trunc.indices))
            if key not in seen:
                seen[key] = (p, q, trunc)
    return sorted(seen.values(), key=lambda t: (len(t[2]), t[0], t[1]))


def _widen_until_feasible(objective, theta0, scale_const_pos: int):
    """Halve the scale parameter (double the support width) up to the cap."""
    theta = theta0.copy()
    for _ in range(_WIDEN_STEPS + 1):
        if np.isfinite(objective(theta)):
            return theta
        theta[scale_const_pos] -= np.log(2.0)
    raise FittingError("no feasible starting point after widening the scale")


def fit_glam(
    data: Dataset,
    input_model: InputModel,
    grid: CandidateGrid | None = None,
    optim_config: OptimConfig | None = None,
    seed: int = 0,
) -> tuple[GlamModel, FitReport]:
    """Fit a single-fidelity GLaM by FGLS initialization, shape-grid
    escalation, and joint maximum likelihood with BIC selection.

    Shape candidates are explored jointly in waves of increasing total
    degree; escalation stops as soon as a wave fails to improve the BIC.
    """
    t_start = time.perf_counter()
    if data.n == 0:
        raise FittingError("dataset is empty")
    grid = grid or CandidateGrid.for_size(data.n)
    optim_config = optim_config or OptimConfig()

    fgls = fgls_init(data, input_model, grid)
    a1, c1_0 = fgls.mean_truncation, fgls.mean_coefficients
    a2 = fgls.logvar_truncation
    c2_0 = _initial_scale_series(fgls, INITIAL_SHAPE)

    cands3 = _unique_shape_candidates(input_model.dim, grid.l3_degrees, grid.l3_qnorms)
    cands4 = _unique_shape_candidates(input_model.dim, grid.l4_degrees, grid.l4_qnorms)
    combos = [(p3, q3, t3, p4, q4, t4) for (p3, q3, t3) in cands3 for (p4, q4, t4) in cands4]
    waves = sorted({c[0] + c[3] for c in combos})

    best = None
    bic_table = []
    failures = 0
    for wave in waves:
        prev_best_bic = best[0] if best else np.inf
        for (p3, q3, t3, p4, q4, t4) in (c for c in combos if c[0] + c[3] == wave):
            obj = SingleFidelityObjective(data, input_model, (a1, a2, t3, t4))
            c3_0 = np.zeros(len(t3))
            c3_0[t3.index_of_constant()] = INITIAL_SHAPE
            c4_0 = np.zeros(len(t4))
            c4_0[t4.index_of_constant()] = INITIAL_SHAPE
            theta0 = np.concatenate([c1_0, c2_0, c3_0, c4_0])
            scale_const_pos = len(a1) + a2.index_of_constant()
            try:
                theta0 = _widen_until_feasible(obj, theta0, scale_const_pos)
                report = maximize(
                    obj, theta0, optim_config, derive_rng(seed, "fit", wave, p3, q3, p4, q4)
                )
            except (FittingError, InfeasibleStartError):
                failures += 1
                continue
            k = obj.n_params
            score = bic(report.loglik, k, data.n)
            bic_table.append(
                {
                    "p3": p3, "q3": q3, "p4": p4, "q4": q4,
                    "n_params": k,
                    "loglik": report.loglik,
                    "bic": score,
                    "stage": report.stage,
                    "converged": report.converged,
                }
            )
            if best is None or score < best[0]:
                best = (score, obj, report, (t3, t4))
        if best is None:
            continue
        if best[0] >= prev_best_bic:  # this wave brought no improvement
            break

    if best is None:
        raise FittingError(f"all {len(combos)} shape candidates failed to fit ({failures} failures)")

    score, obj, report, (t3, t4) = best
    c = obj.split(report.theta_star)
    model = GlamModel(
        input_model,
        (
            LambdaExpansion(a1, c[0], IDENTITY),
            LambdaExpansion(a2, c[1], EXP),
            LambdaExpansion(t3, c[2], IDENTITY),
            LambdaExpansion(t4, c[3], IDENTITY),
        ),
    )
    fit_report = FitReport(
        selected={
            "lambda1": {"p": a1.p, "q": a1.q, "n_terms": len(a1)},
            "lambda2": {"p": a2.p, "q": a2.q, "n_terms": len(a2)},
            "lambda3": {"p": t3.p, "q": t3.q, "n_terms": len(t3)},
            "lambda4": {"p": t4.p, "q": t4.q, "n_terms": len(t4)},
        },
        loglik=report.loglik,
        bic=score,
        n_obs=data.n,
        n_params=obj.n_params,
        bic_table=bic_table,
        fgls_iterations=fgls.iterations,
        optimizer_stage=report.stage,
        converged=report.converged,
        seed=seed,
        wall_time=time.perf_counter() - t_start,
    )
    return model, fit_report
