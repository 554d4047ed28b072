"""Two-stage likelihood maximizer.

Stage one is a derivative-based trust-region ascent (SR1 curvature
accumulation, dogleg subproblem, finite-difference gradients).  When the
gradient test cannot be met, typically because trial points keep landing
outside the feasible region where the objective is -inf, stage two takes
over: a constrained (1+1)-CMA-ES that resamples infeasible offspring and
adapts its step size by a smoothed 1/5th success rule.  The best feasible
point ever seen is returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["OptimConfig", "OptimReport", "FdGradient", "fd_gradient", "maximize", "InfeasibleStartError"]


class InfeasibleStartError(RuntimeError):
    """The objective is -inf at the requested starting point."""


@dataclass(frozen=True)
class OptimConfig:
    """Tolerances and budgets; defaults match the documented contracts."""

    tr_max_iter: int = 500
    tr_grad_tol: float = 1e-6
    tr_initial_radius: float = 0.5
    tr_max_radius: float = 100.0
    fd_rel_step: float = 1e-6
    cma_budget: int = 5000
    cma_initial_sigma: float = 0.1
    start_at_cmaes: bool = False


@dataclass
class OptimReport:
    theta_star: np.ndarray
    loglik: float
    stage: str
    iterations: int
    converged: bool
    n_eval: int = 0
    encountered_infeasible: bool = False

    def __post_init__(self) -> None:
        if not np.isfinite(self.loglik):
            raise ValueError("optimizer reports must carry a finite objective value")


@dataclass(frozen=True)
class FdGradient:
    gradient: np.ndarray
    infeasible: np.ndarray  # True where both probes of a coordinate were -inf
    n_eval: int


def fd_gradient(objective, theta: np.ndarray, rel_step: float = 1e-6) -> FdGradient:
    """Central-difference gradient with per-coordinate step rel_step*(1+|theta_k|).

    Falls back to a one-sided difference when the opposite probe is
    infeasible; coordinates with both probes infeasible report gradient 0
    and are flagged.
    """
    theta = np.asarray(theta, dtype=float)
    f0 = None
    grad = np.zeros_like(theta)
    infeasible = np.zeros(theta.shape, dtype=bool)
    n_eval = 0
    for k in range(theta.shape[0]):
        h = rel_step * (1.0 + abs(theta[k]))
        tp = theta.copy()
        tp[k] += h
        tm = theta.copy()
        tm[k] -= h
        fp = objective(tp)
        fm = objective(tm)
        n_eval += 2
        if np.isfinite(fp) and np.isfinite(fm):
            grad[k] = (fp - fm) / (2.0 * h)
        elif np.isfinite(fp) or np.isfinite(fm):
            if f0 is None:
                f0 = objective(theta)
                n_eval += 1
            if not np.isfinite(f0):
                infeasible[k] = True
                continue
            grad[k] = (fp - f0) / h if np.isfinite(fp) else (f0 - fm) / h
        else:
            infeasible[k] = True
    return FdGradient(grad, infeasible, n_eval)


def _dogleg_step(g: np.ndarray, B: np.ndarray, radius: float) -> np.ndarray:
    """Approximate minimizer of g.p + 0.5 p.B.p within ||p|| <= radius.

    B is symmetrized and shifted to positive definite if needed; falls back
    to the Cauchy point direction when curvature information is useless.
    """
    B = 0.5 * (B + B.T)
    try:
        w = np.linalg.eigvalsh(B)
        shift = max(0.0, -float(w.min())) + 1e-8 * (1.0 + abs(float(w.max(initial=0.0))))
        if w.min() <= 0.0:
            B = B + shift * np.eye(B.shape[0])
        p_newton = -np.linalg.solve(B, g)
    except np.linalg.LinAlgError:
        p_newton = None

    gBg = float(g @ B @ g)
    gg = float(g @ g)
    if gg == 0.0:
        return np.zeros_like(g)
    if gBg <= 0.0:
        return -(radius / np.sqrt(gg)) * g
    p_cauchy = -(gg / gBg) * g

    if p_newton is not None and np.all(np.isfinite(p_newton)):
        if np.linalg.norm(p_newton) <= radius:
            return p_newton
        nc = float(np.linalg.norm(p_cauchy))
        if nc >= radius:
            return p_cauchy * (radius / nc)
        # walk from the Cauchy point toward the Newton point up to the boundary
        dv = p_newton - p_cauchy
        aa = float(dv @ dv)
        bb = 2.0 * float(p_cauchy @ dv)
        cc = float(p_cauchy @ p_cauchy) - radius**2
        disc = max(bb * bb - 4.0 * aa * cc, 0.0)
        t = (-bb + np.sqrt(disc)) / (2.0 * aa) if aa > 0 else 0.0
        return p_cauchy + t * dv
    nc = float(np.linalg.norm(p_cauchy))
    return p_cauchy if nc <= radius else p_cauchy * (radius / nc)


def _trust_region_ascent(objective, theta0, f0, config: OptimConfig):
    """SR1/dogleg trust-region maximization via minimization of -objective.

    When the radius collapses while the gradient test is still unmet (a
    stall, usually from corrupted curvature or a nearby feasibility
    boundary), the curvature model and radius are reset a few times before
    giving up.
    """
    x = np.asarray(theta0, dtype=float).copy()
    fx = f0
    dim = x.shape[0]
    B = np.eye(dim)
    radius = config.tr_initial_radius
    n_eval = 0
    hit_inf = False
    converged = False
    resets_left = 3

    res = fd_gradient(objective, x, config.fd_rel_step)
    n_eval += res.n_eval
    hit_inf |= bool(res.infeasible.any())
    g = -res.gradient  # gradient of the minimized -objective

    it = 0
    for it in range(1, config.tr_max_iter + 1):
        if np.linalg.norm(g) < config.tr_grad_tol * (1.0 + abs(fx)):
            converged = True
            break
        if radius < 1e-12:
            if resets_left == 0:
                break
            resets_left -= 1
            B = np.eye(dim)
            radius = 1e-2 * config.tr_initial_radius
        p = _dogleg_step(g, B, radius)
        pred = -(float(g @ p) + 0.5 * float(p @ B @ p))
        if not np.isfinite(pred) or pred <= 0.0 or np.linalg.norm(p) == 0.0:
            radius *= 0.25
            continue
        x_new = x + p
        f_new = objective(x_new)
        n_eval += 1
        if not np.isfinite(f_new):
            hit_inf = True
            radius *= 0.25
            continue
        actual = f_new - fx
        rho = actual / pred
        if rho < 0.25:
            radius *= 0.25
        elif rho > 0.75 and np.linalg.norm(p) > 0.99 * radius:
            radius = min(2.0 * radius, config.tr_max_radius)
        if rho > 1e-4 and actual > 0.0:
            res_new = fd_gradient(objective, x_new, config.fd_rel_step)
            n_eval += res_new.n_eval
            hit_inf |= bool(res_new.infeasible.any())
            g_new = -res_new.gradient
            s = p
            yv = g_new - g
            v = yv - B @ s
            denom = float(v @ s)
            if abs(denom) > 1e-8 * np.linalg.norm(s) * np.linalg.norm(v):
                B = B + np.outer(v, v) / denom
            x, fx, g = x_new, f_new, g_new

    return x, fx, it, converged, hit_inf, n_eval


def _cmaes_ascent(objective, theta0, f0, config: OptimConfig, rng: np.random.Generator):
    """(1+1)-CMA-ES maximization with infeasible-offspring resampling.

    Cholesky-factor covariance adaptation; step size follows a smoothed
    1/5th-success rule.  Infeasible offspring count as failures, which
    shrinks the step back toward the feasible region.
    """
    x = np.asarray(theta0, dtype=float).copy()
    fx = f0
    dim = x.shape[0]
    A = np.eye(dim)
    sigma = config.cma_initial_sigma
    # standard (1+1)-ES constants
    p_target = 2.0 / 11.0
    p_succ = p_target
    c_p = 1.0 / 12.0
    damp = 1.0 + dim / 2.0
    c_cov = 2.0 / (dim**2 + 6.0)
    c_a = np.sqrt(1.0 - c_cov)

    n_eval = 0
    it = 0
    while n_eval < config.cma_budget:
        it += 1
        z = rng.standard_normal(dim)
        y = x + sigma * (A @ z)
        fy = objective(y)
        n_eval += 1
        success = np.isfinite(fy) and fy >= fx
        p_succ = (1.0 - c_p) * p_succ + c_p * (1.0 if success else 0.0)
        sigma *= np.exp((p_succ - p_target) / (damp * (1.0 - p_target)))
        if success:
            x, fx = y, float(fy)
            if p_succ < 0.44:
                z2 = float(z @ z)
                if z2 > 0.0:
                    factor = (c_a / z2) * (np.sqrt(1.0 + (1.0 - c_a**2) * z2 / c_a**2) - 1.0)
                    A = c_a * A + factor * np.outer(A @ z, z)
        if sigma < 1e-12:
            break

    converged = sigma < 1e-6 * config.cma_initial_sigma
    return x, fx, it, converged, n_eval


def maximize(
    objective,
    theta0: np.ndarray,
    config: OptimConfig | None = None,
    rng: np.random.Generator | None = None,
) -> OptimReport:
    """Maximize a (possibly -inf-valued) objective from a feasible start.

    Raises :class:`InfeasibleStartError` when the objective is -inf at
    ``theta0``.  Both stages work in per-coordinate scaled variables
    (scale 1 + |theta0_k|) so coefficients of very different magnitude
    share one trust radius / step size.  The report carries the best
    feasible point seen, never worse than the start.
    """
    config = config or OptimConfig()
    rng = rng or np.random.default_rng(0)
    theta0 = np.asarray(theta0, dtype=float)
    f0 = objective(theta0)
    if not np.isfinite(f0):
        raise InfeasibleStartError("objective is not finite at the starting point")

    scale = 1.0 + np.abs(theta0)

    def scaled_objective(phi: np.ndarray) -> float:
        return objective(theta0 + scale * phi)

    phi0 = np.zeros_like(theta0)
    total_eval = 1
    if config.start_at_cmaes:
        phi, fx, it, conv, n_eval = _cmaes_ascent(scaled_objective, phi0, f0, config, rng)
        return OptimReport(theta0 + scale * phi, fx, "cmaes", it, conv, total_eval + n_eval, True)

    phi, fx, it, converged, hit_inf, n_eval = _trust_region_ascent(
        scaled_objective, phi0, f0, config
    )
    total_eval += n_eval
    if converged:
        return OptimReport(theta0 + scale * phi, fx, "trust-region", it, True, total_eval, hit_inf)

    # stage 1 stalled or ran against the feasibility boundary
    phi2, fx2, it2, conv2, n_eval2 = _cmaes_ascent(scaled_objective, phi, fx, config, rng)
    total_eval += n_eval2
    if fx2 < fx:  # never report a point worse than stage 1's best
        phi2, fx2 = phi, fx
    return OptimReport(theta0 + scale * phi2, fx2, "cmaes", it + it2, conv2, total_eval, True)
