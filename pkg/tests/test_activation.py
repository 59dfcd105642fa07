"""Activation derivatives, sup-norms, and bound constants."""

import math

import numpy as np
import pytest

from nngplab.activation import (
    ACTIVATION_NAMES,
    UnboundedActivationError,
    UnsupportedDerivativeError,
    bound_constants,
    eval as act_eval,
    make_activation,
    parse_activation,
)

SMOOTH = ["gaussian", "cos", "sin", "erf", "tanh", "sigmoid"]
BOUNDED = SMOOTH + ["clipped_relu", "step"]


class TestPointValues:
    def test_gaussian_at_zero(self):
        assert act_eval(make_activation("gaussian"), 0, 0.0) == 1.0

    def test_cos_second_derivative_at_zero(self):
        assert act_eval(make_activation("cos"), 2, 0.0) == pytest.approx(-1.0, abs=1e-15)

    def test_values_at_zero(self):
        assert act_eval(make_activation("cos"), 0, 0.0) == 1.0
        assert act_eval(make_activation("sin"), 0, 0.0) == 0.0
        assert act_eval(make_activation("relu"), 0, 0.0) == 0.0

    def test_clipped_relu_is_difference_of_relus(self):
        spec = make_activation("clipped_relu")
        relu = make_activation("relu")
        assert act_eval(spec, 0, 2.0) == 1.0
        xs = np.linspace(-3, 3, 601)
        expected = act_eval(relu, 0, xs) - act_eval(relu, 0, xs - 1.0)
        np.testing.assert_allclose(act_eval(spec, 0, xs), expected, atol=0)

    def test_relu_derivative_convention_at_zero(self):
        assert act_eval(make_activation("relu"), 1, 0.0) == 0.0

    def test_vectorized_matches_scalar(self):
        spec = make_activation("tanh")
        xs = np.linspace(-2, 2, 7)
        vec = act_eval(spec, 3, xs)
        for x, v in zip(xs, vec):
            assert act_eval(spec, 3, float(x)) == pytest.approx(v, rel=1e-15)


class TestErrors:
    @pytest.mark.parametrize("name,order", [("relu", 2), ("clipped_relu", 3), ("step", 1)])
    def test_missing_derivatives_raise(self, name, order):
        with pytest.raises(UnsupportedDerivativeError):
            act_eval(make_activation(name), order, 0.5)

    def test_order_out_of_range(self):
        with pytest.raises(UnsupportedDerivativeError):
            act_eval(make_activation("gaussian"), 5, 0.0)

    @pytest.mark.parametrize("name", ["relu", "step", "clipped_relu"])
    def test_bound_constants_reject_unbounded(self, name):
        with pytest.raises(UnboundedActivationError):
            bound_constants(make_activation(name))

    def test_unknown_activation(self):
        with pytest.raises(ValueError):
            make_activation("swish")


class TestSupNorms:
    @pytest.mark.parametrize("name", BOUNDED)
    def test_bounded_by_sup_norm(self, name):
        spec = make_activation(name)
        rng = np.random.default_rng(1234)
        xs = rng.uniform(-50, 50, size=100_000)
        assert np.all(np.abs(act_eval(spec, 0, xs)) <= spec.sup_norms[0] + 1e-12)

    def test_cos_frequency_scaling(self):
        base = make_activation("cos", a=1.0)
        doubled = make_activation("cos", a=2.0)
        for j in range(5):
            assert doubled.sup_norms[j] == pytest.approx(2**j * base.sup_norms[j])

    def test_gaussian_norms(self):
        spec = make_activation("gaussian")
        assert spec.sup_norms[0] == 1.0
        assert spec.sup_norms[1] == pytest.approx(math.exp(-0.5))
        assert spec.sup_norms[2] == 1.0
        assert spec.sup_norms[4] == pytest.approx(3.0, rel=1e-9)

    @pytest.mark.parametrize("name", SMOOTH)
    def test_grid_maximum_is_attained(self, name):
        # the stored sup-norm should not be beaten anywhere on a fresh grid
        spec = make_activation(name)
        xs = np.linspace(-25, 25, 50_001)
        for j in range(5):
            observed = np.max(np.abs(act_eval(spec, j, xs)))
            assert observed <= spec.sup_norms[j] * (1 + 1e-9) + 1e-12


class TestFiniteDifferences:
    @pytest.mark.parametrize("name", SMOOTH)
    def test_derivative_ladder(self, name):
        spec = make_activation(name)
        rng = np.random.default_rng(99)
        xs = rng.uniform(-3, 3, size=100)
        h = 1e-6
        for j in range(1, 5):
            analytic = act_eval(spec, j, xs)
            numeric = (act_eval(spec, j - 1, xs + h) - act_eval(spec, j - 1, xs - h)) / (2 * h)
            scale = np.maximum(np.abs(analytic), 1e-3)
            assert np.max(np.abs(analytic - numeric) / scale) < 1e-5


class TestBoundConstants:
    def test_gaussian_c2_from_grid_oracle(self):
        # independent oracle: maximize |derivatives| on a fine grid, then
        # apply the constant formulas directly
        spec = make_activation("gaussian")
        xs = np.linspace(-20, 20, 400_001)
        sup = [np.max(np.abs(act_eval(spec, j, xs))) for j in range(5)]
        expected_c2 = max(2 * sup[2] * sup[0], 2 * sup[1] ** 2, 2.5)
        got = bound_constants(spec)
        assert expected_c2 == pytest.approx(2.5)
        assert got.c2 == pytest.approx(expected_c2)
        expected_c1 = sup[0] ** 2 * math.sqrt(max(sup[4] * sup[0], sup[3] * sup[1], sup[2] ** 2))
        assert got.c1 == pytest.approx(expected_c1, rel=1e-9)

    def test_cos_c_var(self):
        got = bound_constants(make_activation("cos", a=1.0))
        assert got.c_var == pytest.approx(4.0)

    def test_c2_floor(self):
        for name in SMOOTH:
            assert bound_constants(make_activation(name)).c2 >= 2.5

    def test_deterministic(self):
        a = bound_constants(make_activation("tanh"))
        b = bound_constants(make_activation("tanh"))
        assert (a.c_var, a.c1, a.c2) == (b.c_var, b.c1, b.c2)


class TestParsing:
    def test_plain_name(self):
        assert parse_activation("gaussian").name == "gaussian"

    def test_with_frequency(self):
        spec = parse_activation("cos:a=2.5")
        assert spec.name == "cos"
        assert spec.a == 2.5

    def test_label_round_trip(self):
        spec = parse_activation("sin:a=0.5")
        assert parse_activation(spec.label()) == spec

    @pytest.mark.parametrize("text", ["cos:b=1", "cos:a=", "nosuch", "cos:a=xyz"])
    def test_malformed(self, text):
        with pytest.raises(ValueError):
            parse_activation(text)

    def test_all_names_constructible(self):
        for name in ACTIVATION_NAMES:
            assert make_activation(name).name == name
