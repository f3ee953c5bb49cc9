from math import comb, factorial

import numpy as np
import pytest

from balanced_metrics.errors import ValidationError
from balanced_metrics.hermitian import distance
from balanced_metrics.quantization import (PolarizedSample, Status, balance_iterate,
                                           bergman_density, exact_slope)
from balanced_metrics.samples import (MAX_SECTIONS, MetricProfile, QuadratureSpec,
                                      balanced_p1_form, build_ac_p1_sample,
                                      build_p1_sample, deformed_p1_sample,
                                      degenerate_sample, expansion_residual,
                                      product_sample, quadrature_nodes)


def beta_gram(k):
    # int_0^1 tau^i (1 - tau)^(k - i) dtau = i! (k - i)! / (k + 1)!
    return np.diag([factorial(i) * factorial(k - i) / factorial(k + 1)
                    for i in range(k + 1)])


class TestQuadrature:
    def test_weights_sum_to_one(self):
        _, _, w = quadrature_nodes(QuadratureSpec(7, 9))
        assert w.sum() == pytest.approx(1.0, abs=1e-15)

    def test_polar_major_order(self):
        tau, theta, _ = quadrature_nodes(QuadratureSpec(3, 4))
        assert np.all(tau[:4] == tau[0]) and np.all(np.diff(tau[::4]) > 0)
        assert np.allclose(theta[:4], 2 * np.pi * np.arange(4) / 4)

    def test_insufficient(self):
        with pytest.raises(ValidationError) as exc:
            build_p1_sample(4, QuadratureSpec(4, 9))
        assert exc.value.invariant == "quadrature-exactness"
        with pytest.raises(ValidationError):
            build_p1_sample(4, QuadratureSpec(5, 8))


class TestP1Sample:
    @pytest.mark.parametrize("k", range(0, 9))
    def test_gram_matches_beta_integrals(self, k):
        s = build_p1_sample(k)
        assert s.V == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(s.gram(), beta_gram(k), atol=1e-13)

    def test_gram_is_binomial(self):
        for k in range(1, 9):
            expected = np.diag([1 / ((k + 1) * comb(k, i)) for i in range(k + 1)])
            np.testing.assert_allclose(build_p1_sample(k).gram(), expected, atol=1e-13)

    def test_level_one(self):
        np.testing.assert_allclose(build_p1_sample(1).gram(), np.diag([0.5, 0.5]),
                                   atol=1e-13)

    def test_level_two_balanced(self):
        res = balance_iterate(build_p1_sample(2))
        np.testing.assert_allclose(res.H.entries, np.diag([1, 0.5, 1]), atol=1e-10)

    def test_level_zero(self):
        s = build_p1_sample(0)
        assert s.N == 1
        np.testing.assert_allclose(bergman_density(s, np.eye(1)), 1.0, atol=1e-15)

    def test_oversampled_is_still_exact(self):
        s = build_p1_sample(3, QuadratureSpec(9, 13))
        np.testing.assert_allclose(s.gram(), beta_gram(3), atol=1e-13)

    def test_negative_level(self):
        with pytest.raises(ValidationError):
            build_p1_sample(-1)

    def test_anticanonical_uses_double_degree(self):
        s = build_ac_p1_sample(2)
        assert s.N == 5 and s.k == 2
        np.testing.assert_array_equal(s.base, s.weights)


class TestProduct:
    def test_level_one_squared(self):
        s = product_sample(build_p1_sample(1), build_p1_sample(1))
        assert s.N == 4 and s.M == build_p1_sample(1).M ** 2 and s.n == 2
        res = balance_iterate(s)
        assert res.status is Status.CONVERGED
        np.testing.assert_allclose(res.H.entries, np.eye(4), atol=1e-10)

    def test_with_point(self):
        s2 = build_p1_sample(3)
        s = product_sample(build_p1_sample(0), s2)
        np.testing.assert_allclose(s.evals, s2.evals, atol=1e-15)
        np.testing.assert_allclose(s.weights, s2.weights, atol=1e-16)

    def test_gram_factorises(self):
        s1, s2 = build_p1_sample(2), build_p1_sample(3)
        np.testing.assert_allclose(product_sample(s1, s2).gram(),
                                   np.kron(s1.gram(), s2.gram()), atol=1e-12)

    def test_balanced_form_factorises(self):
        s1, s2 = build_p1_sample(1), build_p1_sample(2)
        res = balance_iterate(product_sample(s1, s2))
        np.testing.assert_allclose(res.H.entries,
                                   np.kron(balanced_p1_form(1), balanced_p1_form(2)),
                                   atol=1e-10)

    def test_size_cap(self):
        big = build_p1_sample(8)
        with pytest.raises(ValidationError) as exc:
            product_sample(big, big)
        assert exc.value.invariant == "size-cap"
        assert 81 > MAX_SECTIONS


class TestDegenerate:
    def test_requires_flag(self):
        with pytest.raises(ValidationError) as exc:
            degenerate_sample(3, 9, 1)
        assert exc.value.invariant == "gram-positive"

    def test_zero_hyperplane(self):
        with pytest.raises(ValidationError):
            degenerate_sample(3, 9, 0, allow_degenerate=True)

    def test_support(self):
        s = degenerate_sample(4, 10, 2, allow_degenerate=True)
        assert np.all(s.evals[:2] == 0)

    def test_two_sections_slope(self):
        s = degenerate_sample(2, 3, 1, allow_degenerate=True)
        a = np.diag([-1.0, 1.0]) / np.sqrt(2)
        assert exact_slope(s, np.eye(2), a) == pytest.approx(-s.V / np.sqrt(2), abs=1e-14)
        assert balance_iterate(s).status is Status.DIVERGED


class TestProfile:
    def test_round_curvature(self):
        grid = deformed_p1_sample(4, MetricProfile())[1]
        np.testing.assert_allclose(grid.values, 4 * np.pi, atol=1e-8)

    def test_round_sample_matches_closed_form(self):
        s, _ = deformed_p1_sample(5, MetricProfile())
        res = balance_iterate(s)
        np.testing.assert_allclose(bergman_density(s, res.H.entries, "paper"), 6.0,
                                   atol=1e-9)
        np.testing.assert_allclose(res.H.entries, balanced_p1_form(5), atol=1e-10)

    def test_round_potential(self):
        tau = np.linspace(0.05, 0.95, 19)
        u = MetricProfile().potential(tau)
        np.testing.assert_allclose(u, tau * np.log(tau) + (1 - tau) * np.log(1 - tau),
                                   atol=1e-14)

    def test_gradient_is_derivative_of_potential(self):
        prof = MetricProfile((0.4, -0.2, 0.3))
        tau = np.linspace(0.1, 0.9, 9)
        h = 1e-5
        fd = (prof.potential(tau + h) - prof.potential(tau - h)) / (2 * h)
        np.testing.assert_allclose(prof.gradient(tau), fd, atol=1e-8)

    def test_inverse_hessian(self):
        prof = MetricProfile((0.4, -0.2, 0.3))
        tau = np.linspace(0.1, 0.9, 9)
        h = 1e-4
        upp = (prof.gradient(tau + h) - prof.gradient(tau - h)) / (2 * h)
        q = np.polynomial.polynomial.polyval(tau, prof.inverse_hessian())
        np.testing.assert_allclose(1 / upp, q, rtol=1e-6)

    def test_positivity_loss(self):
        with pytest.raises(ValidationError) as exc:
            MetricProfile((-8.0,))
        assert exc.value.invariant == "metric-positivity"

    def test_oversampling_required(self):
        with pytest.raises(ValidationError):
            deformed_p1_sample(4, MetricProfile((0.3,)), QuadratureSpec(6, 9))

    def test_residuals_decrease(self):
        prof = MetricProfile((0.3, 0.3))
        assert prof.margin >= 0.5
        r = [expansion_residual(k, prof) for k in (8, 16, 32)]
        assert r[0] > r[1] > r[2]

    def test_deformation_continuity(self):
        for k in (2, 4, 8):
            for eps in (0.2, 0.1, 0.05, 0.025):
                s, _ = deformed_p1_sample(k, MetricProfile((eps, -eps)))
                res = balance_iterate(s)
                assert res.status is Status.CONVERGED
                assert distance(res.H.entries, balanced_p1_form(k)) <= 10 * np.hypot(eps, eps)

    def test_torus_equivariance(self):
        s, _ = deformed_p1_sample(6, MetricProfile((0.2, 0.1)))
        g = s.gram()
        assert np.abs(g - np.diag(np.diag(g))).max() <= 1e-12
