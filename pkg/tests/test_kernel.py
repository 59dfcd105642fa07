"""Kernel recursion, closed forms, quadrature, and the deviation bound."""

import math

import numpy as np
import pytest

from nngplab.activation import UnboundedActivationError, make_activation
from nngplab.kernel import (
    Cov2,
    closed_cos_kernel,
    closed_gaussian_kernel,
    closed_sin_kernel,
    cross_gram,
    deviation_bound,
    gram,
    nngp_eval,
    recursion_kernel,
    sigma_bar,
    unit_sphere_profile,
    zonal_kernel,
)


def random_psd_cov2(rng):
    sxx = rng.uniform(0.0, 3.0)
    syy = rng.uniform(0.0, 3.0)
    rho = rng.uniform(-1.0, 1.0)
    return Cov2(sxx, rho * math.sqrt(sxx * syy), syy)


class TestSigmaBar:
    def test_cos_identity_cov(self):
        spec = make_activation("cos", a=1.0)
        assert sigma_bar(spec, Cov2(1, 0, 1)) == pytest.approx(math.exp(-1), rel=1e-12)

    def test_gaussian_all_ones_cov(self):
        spec = make_activation("gaussian")
        assert sigma_bar(spec, Cov2(1, 1, 1)) == pytest.approx(1 / math.sqrt(3), rel=1e-12)

    @pytest.mark.parametrize("name", ["gaussian", "cos", "sin", "tanh", "relu"])
    def test_zero_cov_is_point_mass(self, name):
        spec = make_activation(name)
        from nngplab.activation import eval as act_eval

        expected = act_eval(spec, 0, 0.0) ** 2
        assert sigma_bar(spec, Cov2(0, 0, 0), method="quadrature") == pytest.approx(
            expected, abs=1e-14
        )

    def test_non_psd_rejected(self):
        with pytest.raises(ValueError, match="non-PSD"):
            sigma_bar(make_activation("gaussian"), Cov2(1.0, 2.0, 1.0))

    def test_quad_order_guard(self):
        with pytest.raises(ValueError):
            sigma_bar(make_activation("gaussian"), Cov2(1, 0, 1), quad_order=1)

    def test_closed_unavailable(self):
        with pytest.raises(ValueError):
            sigma_bar(make_activation("tanh"), Cov2(1, 0, 1), method="closed")

    @pytest.mark.parametrize("name", ["gaussian", "cos", "sin"])
    def test_quadrature_matches_closed_form(self, name):
        spec = make_activation(name, a=1.0) if name != "gaussian" else make_activation(name)
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(300):
            cov = random_psd_cov2(rng)
            quad = sigma_bar(spec, cov, quad_order=40, method="quadrature")
            closed = sigma_bar(spec, cov, method="closed")
            worst = max(worst, abs(quad - closed))
        assert worst < 1e-8

    def test_degenerate_correlation_switches_to_1d(self):
        spec = make_activation("tanh")
        val = sigma_bar(spec, Cov2(1.0, 1.0, 1.0), method="quadrature")
        # rank-1 covariance means u = v, so the answer is E[tanh(u)^2]
        t, w = np.polynomial.hermite_e.hermegauss(80)
        expected = float(np.tanh(t) ** 2 @ (w / w.sum()))
        assert val == pytest.approx(expected, rel=1e-10)

    def test_monotone_quadrature_convergence(self):
        spec = make_activation("tanh")
        cov = Cov2(2.0, 0.7, 1.3)
        ref = sigma_bar(spec, cov, quad_order=100, method="quadrature")
        errors = [
            abs(sigma_bar(spec, cov, quad_order=q, method="quadrature") - ref)
            for q in (4, 8, 16, 32)
        ]
        assert errors == sorted(errors, reverse=True)
        assert errors[-1] < 1e-10


class TestNngpEval:
    def test_depth_zero_is_inner_product(self):
        model = recursion_kernel(make_activation("cos"), 0, 3)
        x, y = np.array([1.0, 2.0, 0.5]), np.array([-0.5, 1.0, 2.0])
        assert nngp_eval(model, x, y) == pytest.approx(float(x @ y))

    def test_closed_cos_orthonormal(self):
        model = closed_cos_kernel(3, a=1.0)
        x, y = np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
        assert nngp_eval(model, x, y) == pytest.approx(math.exp(-1), rel=1e-12)

    def test_recursion_matches_nested_closed_form(self):
        # oracle: compose the closed-form map twice by hand
        x = np.array([0.0, 1.0, 0.0])
        s1 = 1 / math.sqrt(3)
        expected = 1 / math.sqrt(1 + 2 * s1)
        model = recursion_kernel(make_activation("gaussian"), 2, 3, use_closed_forms=False)
        assert nngp_eval(model, x, x) == pytest.approx(expected, rel=1e-9)
        model_closed = recursion_kernel(make_activation("gaussian"), 2, 3)
        assert nngp_eval(model_closed, x, x) == pytest.approx(expected, rel=1e-12)

    def test_dimension_mismatch(self):
        model = closed_gaussian_kernel(3)
        with pytest.raises(ValueError):
            nngp_eval(model, np.ones(3), np.ones(4))

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        model = recursion_kernel(make_activation("erf"), 2, 4)
        for _ in range(5):
            x, y = rng.standard_normal(4), rng.standard_normal(4)
            assert nngp_eval(model, x, y) == pytest.approx(nngp_eval(model, y, x), abs=1e-12)

    def test_zonal_rotation_invariance(self):
        # on unit inputs the kernel value depends only on x . y
        rng = np.random.default_rng(11)
        for model, tol in [
            (closed_cos_kernel(4), 1e-10),
            (recursion_kernel(make_activation("tanh"), 1, 4), 1e-7),
        ]:
            x = rng.standard_normal(4)
            x /= np.linalg.norm(x)
            y = rng.standard_normal(4)
            y /= np.linalg.norm(y)
            base = nngp_eval(model, x, y)
            for _ in range(4):
                q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
                rel = abs(nngp_eval(model, q @ x, q @ y) - base) / abs(base)
                assert rel < tol


class TestGram:
    def test_single_unit_point_gaussian(self):
        g = gram(closed_gaussian_kernel(3), np.array([[1.0, 0.0, 0.0]]))
        assert g.shape == (1, 1)
        assert g[0, 0] == pytest.approx(1 / math.sqrt(3), rel=1e-12)

    def test_two_orthonormal_cos(self):
        pts = np.eye(3)[:2]
        g = gram(closed_cos_kernel(3, a=1.0), pts)
        diag = math.exp(-1) * math.cosh(1)
        off = math.exp(-1)
        np.testing.assert_allclose(np.diag(g), diag, rtol=1e-12)
        assert g[0, 1] == pytest.approx(off, rel=1e-12)
        assert g[1, 0] == g[0, 1]

    def test_duplicated_point_constant_block(self):
        pts = np.array([[0.6, 0.8, 0.0], [0.6, 0.8, 0.0]])
        g = gram(recursion_kernel(make_activation("sigmoid"), 1, 3), pts)
        assert np.ptp(g) < 1e-14

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            gram(closed_gaussian_kernel(2), np.empty((0, 2)))

    @pytest.mark.parametrize(
        "factory",
        [
            lambda: closed_gaussian_kernel(3),
            lambda: closed_cos_kernel(3, a=1.3),
            lambda: closed_sin_kernel(3, a=0.7),
            lambda: recursion_kernel(make_activation("tanh"), 2, 3),
        ],
    )
    def test_gram_psd_and_symmetric(self, factory):
        model = factory()
        rng = np.random.default_rng(17)
        pts = rng.standard_normal((24, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        g = gram(model, pts)
        assert np.array_equal(g, g.T)
        eigs = np.linalg.eigvalsh(g)
        assert eigs[0] > -1e-8 * np.trace(g)

    def test_gram_matches_pointwise_eval(self):
        model = recursion_kernel(make_activation("erf"), 2, 3)
        rng = np.random.default_rng(23)
        pts = rng.standard_normal((5, 3))
        g = gram(model, pts)
        for i in range(5):
            for j in range(5):
                assert g[i, j] == pytest.approx(nngp_eval(model, pts[i], pts[j]), rel=1e-10)

    def test_cross_gram_consistency(self):
        model = closed_cos_kernel(3, a=1.0)
        rng = np.random.default_rng(29)
        a = rng.standard_normal((4, 3))
        b = rng.standard_normal((6, 3))
        cg = cross_gram(model, a, b)
        for i in range(4):
            for j in range(6):
                assert cg[i, j] == pytest.approx(nngp_eval(model, a[i], b[j]), rel=1e-12)


class TestUnitSphereProfile:
    def test_gaussian_profile(self):
        prof = unit_sphere_profile(closed_gaussian_kernel(3))
        t = np.linspace(-1, 1, 11)
        np.testing.assert_allclose(prof(t), 1 / np.sqrt(4 - t**2), rtol=1e-12)

    def test_profile_matches_eval_on_unit_vectors(self):
        model = recursion_kernel(make_activation("sigmoid"), 1, 3)
        prof = unit_sphere_profile(model)
        x = np.array([1.0, 0.0, 0.0])
        y = np.array([0.6, 0.8, 0.0])
        assert prof(np.array([0.6]))[0] == pytest.approx(nngp_eval(model, x, y), rel=1e-12)

    def test_zonal_profile_kind(self):
        model = zonal_kernel(lambda t: 1 + t, 3)
        assert nngp_eval(model, np.array([1.0, 0, 0]), np.array([0.0, 1, 0])) == pytest.approx(1.0)


class TestDeviationBound:
    def test_depth_one_is_zero(self):
        assert deviation_bound(make_activation("gaussian"), [], 1) == 0.0

    def test_gaussian_two_layer_value(self):
        # sup-norm oracle gives ||s''''|| = 3 at the origin, so the bound is
        # 1 * max(3, ...) * (5/2)^2 / 100
        got = deviation_bound(make_activation("gaussian"), [100], 2)
        assert got == pytest.approx(0.1875, rel=1e-9)

    def test_linear_in_inverse_widths(self):
        spec = make_activation("cos", a=1.0)
        b1 = deviation_bound(spec, [50, 70], 3)
        b2 = deviation_bound(spec, [100, 140], 3)
        assert b1 == pytest.approx(2 * b2, rel=1e-12)

    def test_width_count_checked(self):
        with pytest.raises(ValueError):
            deviation_bound(make_activation("gaussian"), [10, 10], 2)

    def test_unbounded_rejected(self):
        with pytest.raises(UnboundedActivationError):
            deviation_bound(make_activation("relu"), [10], 2)
