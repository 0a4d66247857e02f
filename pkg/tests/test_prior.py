"""Tests for the non-categorical adapter and the text-prior baseline."""

from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from ncap_lab._errors import ConfigurationError, DomainError, ShapeError
from ncap_lab._numcore import (
    central_difference,
    linear_forward,
    make_rng,
    max_relative_error,
    prelu,
    softmax_temp,
)
from ncap_lab._prior import (
    AdapterParams,
    TextPriorParams,
    adapter_param_count,
    apply_adapter_step,
    init_adapter,
    init_text_prior,
    ncap_backward,
    ncap_forward,
    param_overhead,
    tp_backward,
    tp_forward,
)


def _objective(h, params, upstream):
    return float(np.sum(upstream * ncap_forward(h, params)))


class TestNcapForward:
    """Test the adapter forward pass."""

    def test_zero_input(self, rng):
        params = init_adapter(rng, 8, 4)
        assert_array_equal(ncap_forward(np.zeros((3, 8)), params), 0.0)

    def test_positive_path_is_linear(self, rng):
        params = AdapterParams(
            W1=rng.uniform(0.1, 1.0, size=(6, 3)),
            W2=rng.uniform(0.1, 1.0, size=(3, 2)),
            slope1=-3.0,
            slope2=7.0,
        )
        h = rng.uniform(0.1, 1.0, size=(5, 6))
        assert_allclose(ncap_forward(h, params), h @ params.W1 @ params.W2)

    def test_matches_composition(self):
        rng = make_rng(2)
        params = replace(init_adapter(rng, 8, 4), slope1=0.1, slope2=0.3)
        h = rng.normal(size=(6, 8))
        hidden = prelu(linear_forward(h, params.W1), 0.1)
        expected = prelu(linear_forward(hidden, params.W2), 0.3)
        assert_allclose(ncap_forward(h, params), expected, rtol=1e-14)

    def test_with_bias(self, rng):
        params = init_adapter(rng, 8, 4, use_bias=True)
        params = replace(params, b1=np.ones(4), b2=np.ones(4))
        h = np.zeros((2, 8))
        hidden = prelu(np.ones((2, 4)), params.slope1)
        expected = prelu(hidden @ params.W2 + 1.0, params.slope2)
        assert_allclose(ncap_forward(h, params), expected)

    def test_width_mismatch(self, rng):
        with pytest.raises(ShapeError):
            ncap_forward(np.zeros((2, 6)), init_adapter(rng, 8, 4))

    def test_odd_embed(self, rng):
        with pytest.raises(ConfigurationError):
            init_adapter(rng, 7, 4)

    def test_deterministic_init(self):
        a = init_adapter(make_rng(1, 2), 8, 4)
        b = init_adapter(make_rng(1, 2), 8, 4)
        assert_array_equal(a.W1, b.W1)
        assert_array_equal(a.W2, b.W2)


class TestNcapBackward:
    """Test adapter gradients against finite differences."""

    def test_zero_upstream(self, rng):
        params = init_adapter(rng, 8, 4)
        grads = ncap_backward(
            rng.normal(size=(3, 8)), params, np.zeros((3, 4))
        )
        assert_array_equal(grads.W1, 0.0)
        assert_array_equal(grads.W2, 0.0)
        assert_array_equal(grads.h, 0.0)
        assert grads.slope1 == 0.0
        assert grads.slope2 == 0.0

    def test_positive_activations_leave_slopes(self, rng):
        params = AdapterParams(
            W1=rng.uniform(0.1, 1.0, size=(4, 2)),
            W2=rng.uniform(0.1, 1.0, size=(2, 3)),
        )
        h = rng.uniform(0.1, 1.0, size=(5, 4))
        grads = ncap_backward(h, params, rng.normal(size=(5, 3)))
        assert grads.slope1 == 0.0
        assert grads.slope2 == 0.0

    def test_finite_differences(self):
        rng = make_rng(9)
        params = replace(init_adapter(rng, 8, 4), slope1=0.2, slope2=0.4)
        h = rng.normal(size=(5, 8))
        upstream = rng.normal(size=(5, 4))
        grads = ncap_backward(h, params, upstream)

        checks = {
            "h": (
                grads.h,
                central_difference(
                    lambda v: _objective(v, params, upstream), h
                ),
            ),
            "W1": (
                grads.W1,
                central_difference(
                    lambda v: _objective(h, replace(params, W1=v), upstream),
                    params.W1,
                ),
            ),
            "W2": (
                grads.W2,
                central_difference(
                    lambda v: _objective(h, replace(params, W2=v), upstream),
                    params.W2,
                ),
            ),
            "slope1": (
                np.array([grads.slope1]),
                central_difference(
                    lambda v: _objective(
                        h, replace(params, slope1=float(v[0])), upstream
                    ),
                    np.array([params.slope1]),
                ),
            ),
            "slope2": (
                np.array([grads.slope2]),
                central_difference(
                    lambda v: _objective(
                        h, replace(params, slope2=float(v[0])), upstream
                    ),
                    np.array([params.slope2]),
                ),
            ),
        }
        for name, (analytic, numeric) in checks.items():
            assert max_relative_error(analytic, numeric) < 1e-5, name

    def test_finite_differences_many_instances(self):
        rng = make_rng(19)
        worst = 0.0
        for _ in range(100):
            params = replace(
                init_adapter(rng, 6, 3),
                slope1=float(rng.uniform(0.05, 0.5)),
                slope2=float(rng.uniform(0.05, 0.5)),
            )
            h = rng.normal(size=(4, 6))
            upstream = rng.normal(size=(4, 3))
            grads = ncap_backward(h, params, upstream)
            numeric = central_difference(
                lambda v, p=params, u=upstream: _objective(v, p, u), h
            )
            worst = max(worst, max_relative_error(grads.h, numeric))
            numeric = central_difference(
                lambda v, p=params, x=h, u=upstream: _objective(
                    x, replace(p, W1=v), u
                ),
                params.W1,
            )
            worst = max(worst, max_relative_error(grads.W1, numeric))
        assert worst < 1e-5

    def test_bias_gradients(self):
        rng = make_rng(10)
        params = init_adapter(rng, 6, 2, use_bias=True)
        h = rng.normal(size=(4, 6))
        upstream = rng.normal(size=(4, 2))
        grads = ncap_backward(h, params, upstream)
        numeric = central_difference(
            lambda v: _objective(h, replace(params, b2=v), upstream),
            params.b2,
        )
        assert max_relative_error(grads.b2, numeric) < 1e-5

    def test_upstream_shape(self, rng):
        params = init_adapter(rng, 8, 4)
        with pytest.raises(ShapeError):
            ncap_backward(np.zeros((2, 8)), params, np.zeros((2, 3)))

    def test_step_moves_against_gradient(self, rng):
        params = init_adapter(rng, 8, 4)
        h = rng.normal(size=(3, 8))
        grads = ncap_backward(h, params, np.ones((3, 4)))
        stepped = apply_adapter_step(params, grads, 0.1)
        assert_allclose(stepped.W1, params.W1 - 0.1 * grads.W1)
        assert stepped.slope2 == pytest.approx(
            params.slope2 - 0.1 * grads.slope2
        )


class TestTextPrior:
    """Test the categorical text-prior baseline."""

    def test_zero_input_is_uniform(self, rng):
        params = init_text_prior(rng, rng.normal(size=(6, 5)), None, 3)
        logits, feature = tp_forward(np.zeros((2, 6)), params)
        assert_allclose(softmax_temp(logits), np.full((2, 5), 0.2))
        assert_allclose(
            feature, np.tile(params.W_proj.mean(axis=0), (2, 1))
        )

    def test_saturated_prediction_selects_row(self, rng):
        params = init_text_prior(rng, np.eye(4), None, 3)
        h = np.zeros((1, 4))
        h[0, 2] = 50.0
        _, feature = tp_forward(h, params)
        assert_allclose(feature[0], params.W_proj[2], atol=1e-12)

    def test_matches_composition(self):
        rng = make_rng(4)
        params = init_text_prior(
            rng, rng.normal(size=(8, 5)), rng.normal(size=5), 4
        )
        h = rng.normal(size=(3, 8))
        logits = linear_forward(h, params.W_pred, params.b_pred)
        _, feature = tp_forward(h, params, 2.0)
        assert_allclose(
            feature, softmax_temp(logits, 2.0) @ params.W_proj, rtol=1e-14
        )

    def test_shift_invariance(self, rng):
        params = init_text_prior(
            rng, rng.normal(size=(8, 5)), np.zeros(5), 4
        )
        shifted = replace(params, b_pred=np.full(5, 3.0))
        h = rng.normal(size=(3, 8))
        assert np.max(
            np.abs(tp_forward(h, params)[1] - tp_forward(h, shifted)[1])
        ) < 1e-12

    def test_backward(self, rng):
        params = init_text_prior(rng, rng.normal(size=(6, 5)), None, 3)
        h = rng.normal(size=(4, 6))
        upstream = rng.normal(size=(4, 3))
        numeric = central_difference(
            lambda v: float(
                np.sum(upstream * tp_forward(h, replace(params, W_proj=v))[1])
            ),
            params.W_proj,
        )
        analytic = tp_backward(h, params, 1.0, upstream)
        assert max_relative_error(analytic, numeric) < 1e-5

    def test_alphabet_mismatch(self):
        with pytest.raises(ShapeError):
            TextPriorParams(W_pred=np.zeros((4, 5)), W_proj=np.zeros((6, 2)))


class TestParameterAccounting:
    """Test adapter parameter counts and overhead ratios."""

    def test_enumeration(self):
        assert adapter_param_count(8, 4) == 8 * 4 + 4 * 4 + 2 == 50

    def test_matches_array_enumeration(self):
        rng = make_rng(30)
        for _ in range(20):
            embed = 2 * int(rng.integers(1, 64))
            prior_dim = int(rng.integers(1, 32))
            for use_bias in (False, True):
                params = init_adapter(rng, embed, prior_dim, use_bias)
                enumerated = sum(
                    a.size for a in params.named_arrays().values()
                )
                assert enumerated == adapter_param_count(
                    embed, prior_dim, use_bias
                )

    def test_bias_terms(self):
        assert adapter_param_count(8, 4, use_bias=True) == 50 + 4 + 4

    def test_matches_params(self, rng):
        params = init_adapter(rng, 8, 4)
        assert params.trainable_count == 50
        assert param_overhead(params, 50) == 1.0

    def test_realistic_overhead(self, rng):
        params = init_adapter(rng, 384, 64)
        ratio = param_overhead(params, 31_440_000)
        assert ratio == pytest.approx((384 * 192 + 192 * 64 + 2) / 31.44e6)
        assert 0.002 <= ratio <= 0.004

    def test_monotone(self):
        counts = [adapter_param_count(e, 4) for e in (4, 8, 16, 32)]
        assert counts == sorted(counts)
        counts = [adapter_param_count(8, c) for c in (1, 2, 4, 8)]
        assert counts == sorted(counts)

    @pytest.mark.parametrize("base", [0, -5])
    def test_bad_base(self, rng, base):
        with pytest.raises(DomainError):
            param_overhead(init_adapter(rng, 8, 4), base)
