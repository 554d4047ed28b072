"""Model evaluation, multifidelity fusion identities, and serialization."""

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfglam import gld
from mfglam.inputs import InputModel, Marginal
from mfglam.model import (
    EXP,
    IDENTITY,
    GlamModel,
    LambdaExpansion,
    MfGlamModel,
    deserialize,
    serialize,
)
from mfglam.pce import TruncationSet, generate_truncation


def constant_model(values=(2.0, 0.0, 0.38, 0.4), dim=2):
    im = InputModel(tuple(Marginal.uniform(0, 2) for _ in range(dim)), tuple(f"x{i+1}" for i in range(dim)))
    trunc = generate_truncation(dim, 0, 1.0)
    links = (IDENTITY, EXP, IDENTITY, IDENTITY)
    exps = tuple(LambdaExpansion(trunc, np.array([v]), lk) for v, lk in zip(values, links))
    return GlamModel(im, exps)


def make_mf(base: GlamModel, deltas=None) -> MfGlamModel:
    dim = base.input.dim
    empty = LambdaExpansion.empty(dim)
    if deltas is None:
        deltas = (empty, LambdaExpansion.empty(dim, EXP), empty, empty)
    return MfGlamModel(base.input, base.expansions, deltas, tuple(range(dim)))


class TestEvalLambda:
    def test_constant_model(self, rng):
        m = constant_model()
        for _ in range(5):
            params = m.eval_lambda(rng.uniform(0, 2, 2))
            assert params.as_tuple() == pytest.approx((2.0, 1.0, 0.38, 0.4))

    def test_mf_zero_discrepancy_equals_lf(self, synth_pair, rng):
        mf = make_mf(synth_pair.lf)
        x = rng.uniform(0, 2, (50, 4))
        lf_fields = synth_pair.lf.lambda_fields(x)
        mf_fields = mf.lambda_fields(x)
        for a, b in zip(lf_fields, mf_fields):
            assert np.array_equal(a, b)

    def test_synthetic_hf_location_at_domain_center(self, synth_pair):
        # at x = (1,1,1,1) the standardized point is 0; odd-degree terms
        # vanish, so lambda1 is the sum of even-degree contributions only,
        # reproduced here by direct orthonormal-Legendre evaluation
        def leg_orth(k, t):
            polys = {0: 1.0, 1: t, 2: 0.5 * (3 * t * t - 1), 3: 0.5 * (5 * t**3 - 3 * t)}
            return polys[k] * np.sqrt(2 * k + 1)

        table = {
            (0, 0, 0, 0): 2.0, (0, 0, 0, 1): 3.5, (0, 0, 1, 0): 2.45, (0, 1, 0, 0): -0.5,
            (1, 0, 0, 0): 0.2, (0, 0, 2, 0): 0.05, (0, 2, 0, 0): 2.3, (2, 0, 0, 0): 2.3,
            (0, 0, 1, 1): 0.12, (1, 1, 0, 0): 0.5, (2, 1, 0, 0): 0.04, (1, 1, 1, 0): 0.02,
        }
        expected = sum(
            c * np.prod([leg_orth(k, 0.0) for k in alpha]) for alpha, c in table.items()
        )
        got = synth_pair.hf.eval_lambda(np.array([1.0, 1.0, 1.0, 1.0])).lambda1
        assert got == pytest.approx(expected, rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(c0=st.floats(-30, 30), c1=st.floats(-10, 10), x=st.floats(0, 2))
    def test_exp_link_keeps_scale_positive(self, c0, c1, x):
        im = InputModel((Marginal.uniform(0, 2),), ("x",))
        t1 = generate_truncation(1, 1, 1.0)
        exps = (
            LambdaExpansion(generate_truncation(1, 0, 1.0), np.array([0.0]), IDENTITY),
            LambdaExpansion(t1, np.array([c0, c1]), EXP),
            LambdaExpansion(generate_truncation(1, 0, 1.0), np.array([0.1]), IDENTITY),
            LambdaExpansion(generate_truncation(1, 0, 1.0), np.array([0.1]), IDENTITY),
        )
        m = GlamModel(im, exps)
        assert m.lambda_fields(np.array([[x]]))[1][0] > 0.0


class TestPredictions:
    def test_median_delegates_to_quantile(self):
        m = constant_model()
        x = np.array([0.3, 1.7])
        want = gld.quantile(0.5, gld.GldParams(2, 1, 0.38, 0.4))
        got = m.predict_quantiles(x, [0.5])[0, 0]
        assert got == want

    def test_pdf_integrates_to_one(self, synth_pair, rng):
        x = rng.uniform(0, 2, (10, 4))
        for xi in x:
            params = synth_pair.hf.eval_lambda(xi)
            lo, hi = gld.quantile(1e-9, params), gld.quantile(1 - 1e-9, params)
            grid = np.linspace(lo, hi, 4001)
            dens = synth_pair.hf.predict_pdf(xi[None, :], grid)[0]
            assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-4)

    def test_moments_undefined_propagates(self):
        m = constant_model(values=(0.0, 0.0, -0.6, 0.4))
        mean, var = m.predict_moments(np.array([[1.0, 1.0]]))
        assert np.isnan(mean[0]) and np.isnan(var[0])

    def test_sampled_upper_quantile_matches_prediction(self, synth_pair):
        x = np.array([0.5, 1.5, 1.0, 0.25])
        n = 10**5
        draws = synth_pair.hf.sample_response(x, n, np.random.default_rng(17))
        q90_pred = synth_pair.hf.predict_quantiles(x, [0.9])[0, 0]
        # order-statistic confidence interval for the 0.9 empirical quantile
        k = int(0.9 * n)
        se = np.sqrt(0.9 * 0.1 / n)
        lo_u, hi_u = 0.9 - 4 * se, 0.9 + 4 * se
        params = synth_pair.hf.eval_lambda(x)
        lo_y, hi_y = gld.quantile(lo_u, params), gld.quantile(hi_u, params)
        emp = np.partition(draws, k)[k]
        assert lo_y <= emp <= hi_y
        assert lo_y <= q90_pred <= hi_y


class TestSerialization:
    def test_round_trip_glam_bit_exact(self, synth_pair, rng):
        doc = serialize(synth_pair.hf)
        back = deserialize(json.loads(json.dumps(doc)))
        x = rng.uniform(0, 2, (20, 4))
        levels = np.linspace(0.01, 0.99, 21)
        a = synth_pair.hf.predict_quantiles(x, levels)
        b = back.predict_quantiles(x, levels)
        assert np.array_equal(a, b)

    def test_round_trip_mf(self, synth_pair, rng):
        t1 = generate_truncation(4, 1, 1.0)
        deltas = (
            LambdaExpansion(t1, rng.normal(size=len(t1)), IDENTITY),
            LambdaExpansion(generate_truncation(4, 0, 1.0), np.array([-0.1]), EXP),
            LambdaExpansion.empty(4),
            LambdaExpansion.empty(4),
        )
        mf = MfGlamModel(synth_pair.lf.input, synth_pair.lf.expansions, deltas, (0, 1, 2, 3))
        back = deserialize(json.loads(json.dumps(serialize(mf))))
        x = rng.uniform(0, 2, (10, 4))
        for a, b in zip(mf.lambda_fields(x), back.lambda_fields(x)):
            assert np.array_equal(a, b)

    def test_missing_version_rejected(self, synth_pair):
        doc = serialize(synth_pair.hf)
        del doc["version"]
        with pytest.raises(ValueError, match="version"):
            deserialize(doc)

    def test_unknown_version_rejected(self, synth_pair):
        doc = serialize(synth_pair.hf)
        doc["version"] = 99
        with pytest.raises(ValueError, match="version"):
            deserialize(doc)

    def test_missing_link_rejected(self, synth_pair):
        doc = serialize(synth_pair.hf)
        del doc["expansions"]["lambda2"]["link"]
        with pytest.raises(ValueError, match="link"):
            deserialize(doc)

    def test_wrong_scale_link_rejected(self, synth_pair):
        doc = serialize(synth_pair.hf)
        doc["expansions"]["lambda2"]["link"] = "identity"
        with pytest.raises(ValueError):
            deserialize(doc)

    def test_handwritten_minimal_document(self):
        doc = {
            "version": 1,
            "role": "glam",
            "input": {"marginals": [{"name": "x1", "kind": "uniform", "a": 0.0, "b": 2.0}]},
            "expansions": {
                "lambda1": {"indices": [[0]], "coefficients": [2.0], "link": "identity"},
                "lambda2": {"indices": [[0]], "coefficients": [0.0], "link": "exp"},
                "lambda3": {"indices": [[0]], "coefficients": [0.38], "link": "identity"},
                "lambda4": {"indices": [[0]], "coefficients": [0.4], "link": "identity"},
            },
        }
        model = deserialize(doc)
        reference = gld.quantile_batch(np.array([0.1, 0.5, 0.9]), 2.0, 1.0, 0.38, 0.4)
        got = model.predict_quantiles(np.array([0.77]), [0.1, 0.5, 0.9])[0]
        assert np.array_equal(got, reference)


class TestMfValidation:
    def test_duplicate_lf_columns_rejected(self, synth_pair):
        empty = LambdaExpansion.empty(4)
        with pytest.raises(ValueError, match="duplicate"):
            MfGlamModel(
                synth_pair.lf.input,
                synth_pair.lf.expansions,
                (empty, LambdaExpansion.empty(4, EXP), empty, empty),
                (0, 0, 1, 2),
            )

    def test_fusion_splits_additively(self, synth_pair, rng):
        # the lambda fields must equal LF series plus discrepancy series,
        # with the scale combined inside a single exponential
        t1 = generate_truncation(4, 1, 1.0)
        d_coef = rng.normal(size=len(t1))
        deltas = (
            LambdaExpansion(t1, d_coef, IDENTITY),
            LambdaExpansion(generate_truncation(4, 0, 1.0), np.array([0.3]), EXP),
            LambdaExpansion.empty(4),
            LambdaExpansion.empty(4),
        )
        mf = MfGlamModel(synth_pair.lf.input, synth_pair.lf.expansions, deltas, (0, 1, 2, 3))
        x = rng.uniform(0, 2, (30, 4))
        lf_series, delta_series = mf.series_split(x)
        fields = mf.lambda_fields(x)
        assert np.allclose(fields[0], lf_series[0] + delta_series[0], rtol=0, atol=0)
        assert np.array_equal(fields[1], np.exp(lf_series[1] + delta_series[1]))
        assert np.array_equal(fields[2], lf_series[2])
        assert np.array_equal(fields[3], lf_series[3])
