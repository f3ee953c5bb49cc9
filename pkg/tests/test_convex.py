import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from balanced_metrics.convex import (DescentOptions, Degenerate, Minimizer, RayFunction,
                                     asymptotic_slope, convexity_report, decide_existence,
                                     liminf_harness, minimize_convex,
                                     one_sided_derivatives, properness_certificate)
from balanced_metrics.errors import (ContractError, ConvexityViolation, NotProperError,
                                     PreconditionError, ValidationError)
from balanced_metrics.hermitian import (GeodesicRay, distance, logm, random_positive,
                                        random_unit_direction, reduced_distance)
from balanced_metrics.quantization import BalancingEnergy, PolarizedSample
from balanced_metrics.samples import (balanced_p1_form, build_p1_sample,
                                      degenerate_sample, unstable_direction)


def trace_plus_inverse(h):
    return float(np.trace(h).real + np.trace(np.linalg.inv(h)).real)


def trace_plus_inverse_grad(h):
    # d/dt f(H^{1/2} e^{tA} H^{1/2}) at 0 is tr(A (H - H^{-1}))
    return h - np.linalg.inv(h)


class TestOneSidedDerivatives:
    def test_abs_kink(self):
        assert one_sided_derivatives(abs, 0.0) == (-1.0, 1.0)

    def test_smooth(self):
        left, right = one_sided_derivatives(lambda t: t * t, 1.0)
        assert left == pytest.approx(2, abs=1e-6)
        assert right == pytest.approx(2, abs=1e-6)

    def test_max_kink(self):
        assert one_sided_derivatives(lambda t: max(t, 2 * t), 0.0) == (1.0, 2.0)

    def test_concave_kink_rejected(self):
        with pytest.raises(ConvexityViolation) as exc:
            one_sided_derivatives(lambda t: -abs(t), 0.0)
        assert exc.value.triple is not None

    def test_nonconvex_quotients_rejected(self):
        with pytest.raises(ConvexityViolation):
            one_sided_derivatives(lambda t: -t ** 4 + t ** 2, 0.3, h_max=1.0)

    def test_bad_steps(self):
        with pytest.raises(ValidationError):
            one_sided_derivatives(abs, 0.0, h_min=0.0)

    @given(st.integers(0, 2 ** 32 - 1), st.floats(-2, 2), st.floats(0.1, 2))
    def test_derivative_monotonicity(self, seed, t1, gap):
        # f'_l(t1) <= f'_r(t1) <= chord <= f'_l(t2) <= f'_r(t2) for log-sum-exp
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=4), rng.normal(size=4)

        def f(t):
            z = a * t + b
            m = z.max()
            return m + math.log(np.exp(z - m).sum())

        t2 = t1 + gap
        l1, r1 = one_sided_derivatives(f, t1)
        l2, r2 = one_sided_derivatives(f, t2)
        c = (f(t2) - f(t1)) / gap
        assert l1 <= r1 + 1e-9 and r1 <= c + 1e-9 and c <= l2 + 1e-9 and l2 <= r2 + 1e-9

    @given(st.integers(0, 2 ** 32 - 1), st.floats(-3, 3))
    def test_quotients_nondecreasing(self, seed, x):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=5), rng.normal(size=5)

        def f(t):
            return float(np.max(a * t + b) + 0.1 * t * t)

        taus = np.linspace(0.01, 4, 60)
        q = [(f(x + t) - f(x)) / t for t in taus]
        assert all(q2 >= q1 - 1e-10 for q1, q2 in zip(q, q[1:]))


class TestConvexityReport:
    grid = np.linspace(-3, 3, 31)

    def test_square(self):
        rep = convexity_report(lambda t: t * t, self.grid)
        assert rep.max_violation <= 1e-12
        assert rep.strict_margin > 0

    def test_constant(self):
        rep = convexity_report(lambda t: 4.0, self.grid)
        assert rep.max_violation <= 1e-12
        assert rep.strict_margin == 0

    def test_concave(self):
        rep = convexity_report(lambda t: -t * t, self.grid)
        assert rep.max_violation > 0

    def test_short_grid(self):
        with pytest.raises(ValidationError):
            convexity_report(abs, [0.0, 1.0])

    def test_unsorted_grid(self):
        with pytest.raises(ValidationError):
            convexity_report(abs, [0.0, 2.0, 1.0])


class TestAsymptoticSlope:
    def test_abs(self):
        est = asymptotic_slope(abs)
        assert est.value == 1.0 and est.converged

    def test_square_is_infinite(self):
        est = asymptotic_slope(lambda t: t * t, cap=1e6)
        assert est.is_infinite

    def test_drift_bounded_when_converged(self):
        est = asymptotic_slope(lambda t: math.sqrt(1 + t * t), tol=1e-8)
        assert est.converged and est.drift <= 1e-8
        assert est.value == pytest.approx(1.0, abs=1e-8)

    def test_concave_rejected(self):
        with pytest.raises(ConvexityViolation):
            asymptotic_slope(lambda t: -t * t)

    def test_integral_ray_matches_exact(self):
        rng = np.random.default_rng(5)
        s = build_p1_sample(3)
        energy = BalancingEnergy(s)
        q, _ = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
        a = (q * rng.integers(-3, 4, size=4)) @ q.conj().T
        rf = energy.restriction(random_positive(rng, 4), a)
        est = asymptotic_slope(rf, t_max=60.0)
        assert est.window == pytest.approx((40.0, 60.0))
        assert est.value == pytest.approx(rf.exact_slope, abs=1e-8)

    def test_window_chords_nondecreasing(self):
        rf = RayFunction(lambda t: math.log(math.exp(-t) + math.exp(0.5 * t)))
        chords = [(rf(t + 5) - rf(t)) / 5 for t in np.linspace(0, 40, 41)]
        assert all(b >= a - 1e-10 for a, b in zip(chords, chords[1:]))


class TestProperness:
    def test_trace_plus_inverse(self, rng):
        dirs = [random_unit_direction(rng, 2) for _ in range(64)]
        cert = properness_certificate(trace_plus_inverse, np.eye(2), dirs)
        assert cert.C > 0 and cert.D > 0
        assert cert.residual >= 0
        assert cert.validation_residual >= 0

    def test_linear_not_proper(self, rng):
        a0 = np.diag([1.0, -1.0]).astype(complex)

        def f(h):
            return float(np.trace(a0 @ logm(h)).real)

        dirs = [random_unit_direction(rng, 2) for _ in range(16)]
        with pytest.raises(NotProperError) as exc:
            properness_certificate(f, np.eye(2), dirs)
        assert exc.value.slope <= 0

    def test_degenerate_energy_witness(self, rng):
        s = degenerate_sample(3, 9, 1, allow_degenerate=True)
        energy = BalancingEnergy(s)
        target = unstable_direction(3, 1)
        dirs = [random_unit_direction(rng, 3, traceless=True) for _ in range(8)]
        dirs.insert(3, target)
        with pytest.raises(NotProperError) as exc:
            properness_certificate(energy.value, np.eye(3), dirs,
                                   ray=energy.restriction)
        assert np.allclose(exc.value.direction, target, atol=1e-12)
        assert exc.value.slope < 0


class TestMinimize:
    def test_trace_plus_inverse(self, rng):
        h0 = random_positive(rng, 3, spread=1.5)
        v = minimize_convex(trace_plus_inverse, trace_plus_inverse_grad, h0)
        assert isinstance(v, Minimizer)
        assert np.abs(v.point.entries - np.eye(3)).max() < 1e-8
        assert v.value == pytest.approx(6.0, abs=1e-8)
        assert v.gradient_norm <= 1e-9

    def test_p1_level_two(self):
        energy = BalancingEnergy(build_p1_sample(2))
        v = minimize_convex(energy.value, energy.gradient, np.eye(3))
        assert isinstance(v, Minimizer)
        assert reduced_distance(v.point.entries, balanced_p1_form(2)) < 1e-7

    def test_degenerate(self):
        energy = BalancingEnergy(degenerate_sample(3, 9, 1, allow_degenerate=True))
        v = minimize_convex(energy.value, energy.gradient, np.eye(3),
                            slope_oracle=energy.exact_slope)
        assert isinstance(v, Degenerate)
        assert v.certified_slope < 0 and v.slope_source == "exact"

    def test_wrong_gradient_rejected(self):
        with pytest.raises(ContractError):
            minimize_convex(trace_plus_inverse, lambda h: 3 * trace_plus_inverse_grad(h),
                            2 * np.eye(2))


class TestDecideExistence:
    @pytest.mark.parametrize("k", [1, 4, 8])
    def test_p1(self, k):
        v = decide_existence(BalancingEnergy(build_p1_sample(k)))
        assert isinstance(v, Minimizer)
        assert v.gradient_norm <= 1e-9

    def test_degenerate(self):
        v = decide_existence(BalancingEnergy(degenerate_sample(4, 12, 2,
                                                               allow_degenerate=True)))
        assert isinstance(v, Degenerate)
        assert v.certified_slope <= -1e-6

    def test_single_section(self):
        s = PolarizedSample(np.array([[1.0, 2.0, 0.5]]), np.ones(3) / 3)
        assert isinstance(decide_existence(BalancingEnergy(s)), Minimizer)

    def test_rejects_scale_dependent_energy(self):
        class Bad:
            dim = 2
            value = staticmethod(trace_plus_inverse)
            gradient = staticmethod(trace_plus_inverse_grad)

        with pytest.raises(PreconditionError):
            decide_existence(Bad())

    @pytest.mark.parametrize("c", [1e-3, 1e3])
    def test_scaling_equivariance(self, c, rng):
        energy = BalancingEnergy(build_p1_sample(3))
        h_init = random_positive(rng, 4)
        v1 = decide_existence(energy, h_init)
        v2 = decide_existence(energy, c * h_init)
        assert type(v1) is type(v2) is Minimizer
        assert reduced_distance(v1.point.entries, v2.point.entries) <= 1e-6

    def test_scaling_equivariance_degenerate(self):
        energy = BalancingEnergy(degenerate_sample(3, 9, 1, allow_degenerate=True))
        v1 = decide_existence(energy, np.eye(3))
        v2 = decide_existence(energy, 1e3 * np.eye(3))
        assert type(v1) is type(v2) is Degenerate


def _diag2(x, y):
    return np.diag([x, y]).astype(complex)


class TestLiminf:
    def test_euclidean_rotating_rays(self):
        theta_star = 0.3
        star = GeodesicRay.from_arrays(np.eye(2), _diag2(math.cos(theta_star),
                                                         math.sin(theta_star)),
                                       "arc-length")
        family = []
        for i in range(1, 30):
            th = theta_star + 1.0 / i
            base = _diag2(math.exp(0.5 / i), 1.0)
            ray = GeodesicRay.from_arrays(base, _diag2(math.cos(th), math.sin(th)),
                                          "arc-length")
            family.append((ray, 10.0 * i))

        def f(h):
            return distance(np.eye(2), h)

        rep = liminf_harness(f, family, star)
        assert rep.passed
        assert rep.limit_slope == pytest.approx(1.0, abs=1e-8)
        # distance from I is at least tau minus the base offset
        assert rep.floor >= math.cos(1.0) * 0.99
        assert rep.gaps[-1] < rep.gaps[0]

    def test_balancing_energy_family(self, rng):
        s = build_p1_sample(3)
        energy = BalancingEnergy(s)
        a_star = np.diag([2.0, 1.0, -1.0, -2.0]).astype(complex) / math.sqrt(10)
        base = balanced_p1_form(3)
        star = GeodesicRay.from_arrays(base, a_star)
        family = []
        for i in range(1, 15):
            pert = random_unit_direction(rng, 4, traceless=True) / (i * i)
            family.append((GeodesicRay.from_arrays(base, a_star + pert), 5.0 * i))
        rep = liminf_harness(energy.value, family, star, ray=energy.restriction)
        assert rep.limit_slope > 0
        assert rep.passed and rep.floor > 0

    def test_constant_rejected(self):
        star = GeodesicRay.from_arrays(np.eye(2), _diag2(1.0, 0.0))
        with pytest.raises(PreconditionError):
            liminf_harness(lambda h: 1.0, [(star, 1.0)], star)


def test_descent_options_defaults():
    o = DescentOptions()
    assert o.stat_tol == 1e-9 and o.cond_cap == 1e12 and o.radius == 1e3
