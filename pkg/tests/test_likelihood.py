"""Objective values, importance weights, finite-difference gradients, and the
two-stage maximizer."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfglam import gld
from mfglam.inputs import InputModel, Marginal
from mfglam.likelihood import (
    Dataset,
    MultiFidelityObjective,
    SingleFidelityObjective,
    mf_loglik,
    mf_weights,
    single_loglik,
)
from mfglam.optim import InfeasibleStartError, OptimConfig, fd_gradient, maximize
from mfglam.pce import generate_truncation


CONST_PARAMS = gld.GldParams(2.0, 1.0, 0.38, 0.4)


def constant_objective(y, dim=1):
    im = InputModel(tuple(Marginal.uniform(0, 1) for _ in range(dim)), tuple(f"x{i}" for i in range(dim)))
    X = np.linspace(0.05, 0.95, len(y))[:, None] * np.ones((1, dim))
    t0 = generate_truncation(dim, 0, 1.0)
    return SingleFidelityObjective(Dataset(X, np.asarray(y, float)), im, (t0, t0, t0, t0))


def theta_for(params: gld.GldParams):
    return np.array([params.lambda1, np.log(params.lambda2), params.lambda3, params.lambda4])


class TestDataset:
    def test_row_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((3, 2)), np.zeros(4))

    def test_bad_fidelity_rejected(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((3, 2)), np.zeros(3), "MEDIUM")


class TestSingleLoglik:
    def test_single_observation_delegates_to_gld(self):
        y_med = gld.quantile(0.5, CONST_PARAMS)
        obj = constant_objective([y_med])
        got = obj(theta_for(CONST_PARAMS))
        assert got == pytest.approx(gld.log_pdf(y_med, CONST_PARAMS), rel=1e-12)

    def test_out_of_support_gives_minus_inf(self):
        # support of the constant model is bounded; put one point outside
        hi = gld.support(CONST_PARAMS).upper
        obj = constant_objective([2.0, hi + 1.0])
        assert obj(theta_for(CONST_PARAMS)) == -np.inf

    def test_one_shot_helper_matches_objective(self, rng):
        ys = gld.sample(CONST_PARAMS, 50, rng)
        obj = constant_objective(ys)
        theta = theta_for(CONST_PARAMS)
        im = obj.input_model
        parts = obj.split(theta)
        assert single_loglik(parts, obj.data, im, obj.truncations) == obj(theta)

    def test_likelihood_dominance_at_truth(self):
        # the true parameters should beat a location-shifted alternative on
        # data simulated from the truth, in nearly all repetitions
        wins = 0
        theta_true = theta_for(CONST_PARAMS)
        theta_shift = theta_true + np.array([0.5, 0.0, 0.0, 0.0])
        for seed in range(100):
            ys = gld.sample(CONST_PARAMS, 1000, np.random.default_rng(seed))
            obj = constant_objective(ys)
            if obj(theta_true) > obj(theta_shift):
                wins += 1
        assert wins >= 95


class TestMfWeights:
    def test_reference_values(self):
        assert mf_weights(0.5, 1000, 200) == pytest.approx((0.6, 3.0), abs=0)

    def test_equal_sizes_give_unit_weights(self):
        assert mf_weights(0.5, 321, 321) == pytest.approx((1.0, 1.0), abs=0)

    @settings(max_examples=100, deadline=None)
    @given(
        p=st.floats(0.01, 0.99),
        n_lf=st.integers(1, 10**6),
        n_hf=st.integers(1, 10**6),
    )
    def test_total_mass_identity(self, p, n_lf, n_hf):
        w_lf, w_hf = mf_weights(p, n_lf, n_hf)
        assert w_lf * n_lf + w_hf * n_hf == pytest.approx(n_lf + n_hf, rel=1e-12)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
    def test_invalid_p_rejected(self, p):
        with pytest.raises(ValueError):
            mf_weights(p, 10, 10)


def small_mf_objective(rng, n_hf=40, n_lf=80, p=0.5):
    im = InputModel((Marginal.uniform(0, 2), Marginal.uniform(0, 2)), ("a", "b"))
    t1 = generate_truncation(2, 1, 1.0)
    t0 = generate_truncation(2, 0, 1.0)
    x_lf = im.lhs_sample(n_lf, rng)
    x_hf = im.lhs_sample(n_hf, rng)
    y_lf = 2.0 + 0.3 * x_lf[:, 0] + 0.2 * rng.standard_normal(n_lf)
    y_hf = 2.2 + 0.3 * x_hf[:, 0] + 0.25 * rng.standard_normal(n_hf)
    hf = Dataset(x_hf, y_hf, "HF")
    lf = Dataset(x_lf, y_lf, "LF")
    obj = MultiFidelityObjective(hf, lf, im, (t1, t0, t0, t0), (t0, t0, t0, t0), (0, 1), p)
    theta = np.array([2.0, 0.3, 0.0, 0.8, 0.13, 0.13, 0.2, -0.1, 0.05, 0.05])
    # widen the scale until every observation is inside its support
    while not np.isfinite(obj(theta)):
        theta[2] -= np.log(2.0)
    return obj, theta, hf, lf, im


class TestMfLoglik:
    def test_duplicated_dataset_additivity(self, rng):
        # with hf == lf, zero discrepancy, and p = 0.5, the weighted joint
        # likelihood is exactly twice the single-fidelity one
        im = InputModel((Marginal.uniform(0, 2),), ("a",))
        t0 = generate_truncation(1, 0, 1.0)
        x = im.lhs_sample(60, rng)
        y = 2.0 + 0.1 * rng.standard_normal(60)
        data = Dataset(x, y, "HF")
        single = SingleFidelityObjective(data, im, (t0, t0, t0, t0))
        theta = np.array([2.0, 0.5, 0.13, 0.13])
        mf = MultiFidelityObjective(
            Dataset(x, y, "HF"), Dataset(x, y, "LF"), im,
            (t0, t0, t0, t0), tuple(generate_truncation(1, 0, 1.0) for _ in range(4)), (0,), 0.5,
        )
        theta_mf = np.concatenate([theta, np.zeros(4)])
        assert mf(theta_mf) == pytest.approx(2.0 * single(theta), rel=1e-14)

    def test_matches_direct_transcription_at_half(self, rng):
        # regression against a literal transcription of the p = 0.5 form:
        # (N_L+N_H)/(2 N_L) * sum_LF log f_L + (N_L+N_H)/(2 N_H) * sum_HF log f_MF
        obj, theta, hf, lf, im = small_mf_objective(rng)
        c, d = obj.split(theta)
        lf_model_ll = single_loglik(c, lf, im, obj.lf_truncations)
        s_hf = [
            obj.design_hf_base[i] @ c[i] + obj.design_hf_delta[i] @ d[i] for i in range(4)
        ]
        from mfglam.likelihood import glam_loglik_core

        hf_ll = glam_loglik_core(hf.y, *s_hf)
        n = hf.n + lf.n
        expected = n / (2 * lf.n) * lf_model_ll + n / (2 * hf.n) * hf_ll
        assert obj(theta) == pytest.approx(expected, rel=1e-12)

    def test_one_shot_helper(self, rng):
        obj, theta, hf, lf, im = small_mf_objective(rng)
        c, d = obj.split(theta)
        got = mf_loglik(c, d, hf, lf, im, obj.lf_truncations, obj.delta_truncations, (0, 1), 0.5)
        assert got == obj(theta)

    def test_out_of_support_sample_gives_minus_inf(self, rng):
        obj, theta, hf, lf, im = small_mf_objective(rng)
        bad = theta.copy()
        bad[2] += 8.0  # huge scale: support shrinks below the data spread
        assert obj(bad) == -np.inf


class TestFdGradient:
    def test_quadratic(self):
        res = fd_gradient(lambda t: float(np.sum(t**2)), np.array([1.0, -2.0]))
        assert res.gradient == pytest.approx([2.0, -4.0], abs=1e-6)
        assert not res.infeasible.any()

    def test_constant(self):
        res = fd_gradient(lambda t: 3.14, np.array([0.5, -0.5, 2.0]))
        assert np.array_equal(res.gradient, np.zeros(3))

    def test_one_sided_fallback(self):
        def half_space(t):
            return -float(t[0] ** 2) if t[0] >= 0.0 else -np.inf

        res = fd_gradient(half_space, np.array([0.0]))
        assert not res.infeasible.any()
        assert res.gradient[0] == pytest.approx(0.0, abs=1e-5)

    def test_fully_infeasible_coordinate_flagged(self):
        def spike(t):
            return 0.0 if abs(t[0]) < 1e-12 else -np.inf

        res = fd_gradient(spike, np.array([0.0]))
        assert res.infeasible[0]
        assert res.gradient[0] == 0.0

    def test_two_step_self_consistency_single(self, rng):
        ys = gld.sample(CONST_PARAMS, 400, rng)
        obj = constant_objective(ys)
        for _ in range(5):
            theta = theta_for(CONST_PARAMS) + rng.normal(scale=[0.05, 0.05, 0.02, 0.02])
            if not np.isfinite(obj(theta)):
                continue
            g6 = fd_gradient(obj, theta, rel_step=1e-6).gradient
            g8 = fd_gradient(obj, theta, rel_step=1e-8).gradient
            denom = max(np.linalg.norm(g8), 1e-12)
            assert np.linalg.norm(g6 - g8) / denom < 1e-3


class TestMaximize:
    def test_quadratic_bowl_stage_one(self):
        target = np.array([1.0, -2.0, 0.5])
        rep = maximize(lambda t: -float(np.sum((t - target) ** 2)), np.zeros(3))
        assert rep.stage == "trust-region"
        assert rep.converged
        assert np.max(np.abs(rep.theta_star - target)) < 1e-5

    def test_start_at_maximizer_converges_immediately(self):
        target = np.array([1.0, -2.0])
        rep = maximize(lambda t: -float(np.sum((t - target) ** 2)), target.copy())
        assert rep.converged and rep.iterations <= 2

    def test_infeasible_start_raises(self):
        with pytest.raises(InfeasibleStartError):
            maximize(lambda t: -np.inf, np.zeros(2))

    def test_monotone_improvement_and_feasibility(self, rng):
        ys = gld.sample(CONST_PARAMS, 300, np.random.default_rng(4))
        obj = constant_objective(ys)
        theta0 = theta_for(CONST_PARAMS) + np.array([0.3, -0.2, 0.05, -0.05])
        f0 = obj(theta0)
        rep = maximize(obj, theta0, OptimConfig(tr_max_iter=150), rng)
        assert np.isfinite(rep.loglik)
        assert rep.loglik >= f0

    def test_cmaes_stage_improves_on_rough_objective(self, rng):
        # non-smooth objective defeats the trust region; sampling stage
        # must still make progress from the best feasible point
        target = np.array([0.7, -0.3])

        def rough(t):
            return -float(np.sum(np.abs(t - target)) ** 0.5) - 0.05 * float(np.sum(np.round(t * 3) ** 2))

        rep = maximize(rough, np.zeros(2), OptimConfig(cma_budget=2000), rng)
        assert np.isfinite(rep.loglik)
        assert rep.loglik >= rough(np.zeros(2))

    def test_mle_recovers_constant_gld(self):
        true = gld.GldParams(2.0, 1.2, 0.38, 0.4)
        ys = gld.sample(true, 20000, np.random.default_rng(77))
        obj = constant_objective(ys)
        theta0 = np.array([np.mean(ys), -np.log(np.std(ys, ddof=1)), 0.13, 0.13])
        rep = maximize(obj, theta0, rng=np.random.default_rng(1))
        l1, s2, l3, l4 = rep.theta_star
        assert l1 == pytest.approx(2.0, abs=0.08)
        assert np.exp(s2) == pytest.approx(1.2, rel=0.12)
        assert l3 == pytest.approx(0.38, abs=0.12)
        assert l4 == pytest.approx(0.4, abs=0.12)
