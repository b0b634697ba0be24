import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from heavytail.targets import anisotropic_student, custom_target, isotropic_student
from heavytail.theory import (
    ASSUMPTIONS,
    InapplicableError,
    MomentsInfiniteError,
    analytic_moments_student,
    asymptotic_bias,
    best_moment_bound_general,
    bridge_small_beta,
    check_radial_condition,
    chi2_rate_small_beta,
    chi2_rate_strongly_convex,
    contraction_params,
    default_w2_init,
    delta,
    dissipativity_condition,
    dissipativity_constant_student,
    first_order_step_bound,
    gamma_ratio_and_bound,
    iteration_complexity,
    iteration_complexity_upper,
    log_accuracy_factor,
    moment_bound_general,
    moment_bound_lyapunov,
    moment_difference_bound,
    moment_difference_simplified,
    recommended_sigma,
    second_moment_student,
    sigma_for_accuracy,
    step_size_for_accuracy,
    student_cv_gamma,
    theory_report,
    w2_bound,
    wpi_constant_small_beta,
    wpi_constant_strongly_convex,
    wpi_constant_student_small_beta,
    zeroth_order_complexity_order,
    zeroth_order_iteration_complexity,
    zeroth_order_params,
    zeroth_order_step_bound,
    zeroth_order_step_for_accuracy,
)

DIMS = (5, 10, 20, 40)


def rel(a, b):
    return abs(float(a) - float(b)) / abs(float(b))


class TestDelta:
    @pytest.mark.parametrize("d", DIMS)
    def test_large_dof_is_one(self, d):
        assert delta(d + 1.0, d, 2.0) == 1.0

    @pytest.mark.parametrize("d", DIMS)
    def test_small_dof_is_one_over_d(self, d):
        assert delta((d + 3.0) / 2.0, d, 2.0) == 1.0 / d

    def test_boundary_raises_with_value(self):
        with pytest.raises(InapplicableError) as info:
            delta(1 + 2.0 * 8 / 4, 8, 2.0)
        assert info.value.value == 0.0
        assert info.value.assumption == "positive-delta"

    @settings(max_examples=100)
    @given(beta=st.floats(1.5, 100), d=st.integers(1, 50), cv=st.floats(0.1, 10))
    def test_matches_high_precision(self, beta, d, cv):
        exact = oracles.mp_delta(beta, d, cv)
        if exact <= 0:
            with pytest.raises(InapplicableError):
                delta(beta, d, cv)
        else:
            assert delta(beta, d, cv) == pytest.approx(float(exact), rel=1e-10)


class TestFirstOrderStep:
    def test_large_dof_example(self):
        assert first_order_step_bound(2, 2, 11, 1) == 0.0125

    def test_small_dof_example(self):
        assert first_order_step_bound(2, 2, 6.5, 0.1) == pytest.approx(min(1 / 44, 0.2 / (3.3 * 2 * 5.5)), rel=1e-15)

    def test_large_delta_limit(self):
        assert first_order_step_bound(2, 2, 11, 1e9) == pytest.approx(1 / 80)

    def test_requires_positive_delta(self):
        with pytest.raises(InapplicableError):
            first_order_step_bound(2, 2, 11, 0.0)


class TestContraction:
    args = dict(alpha=2.0, lipschitz=2.0, beta=11.0, delta_=1.0, d=10, ev=2.0, egrad2=4.0)

    def test_a_example(self):
        assert contraction_params(0.01, **self.args).A == pytest.approx(0.2 / 6, rel=1e-15)

    def test_against_second_implementation(self):
        p = contraction_params(0.01, **self.args)
        a, b, c = oracles.mp_abc(0.01, 2, 2, 11, 1, 10, 2, 4)
        assert rel(p.A, a) < 1e-10 and rel(p.B, b) < 1e-10 and rel(p.C, c) < 1e-10

    @settings(max_examples=60, deadline=None)
    @given(d=st.integers(1, 40), extra=st.floats(0.1, 30), frac=st.floats(0.01, 0.99))
    def test_random_inputs_against_second_implementation(self, d, extra, frac):
        beta = 1 + d / 2 + extra
        dl = delta(beta, d, 2.0)
        mom = analytic_moments_student(d, beta)
        h = frac * first_order_step_bound(2, 2, beta, dl)
        p = contraction_params(h, 2, 2, beta, dl, d, mom.ev, mom.egrad2)
        ref = oracles.mp_abc(h, 2, 2, beta, dl, d, mom.ev, mom.egrad2)
        for got, want in zip((p.A, p.B, p.C), ref):
            assert rel(got, want) < 1e-10

    def test_step_above_bound_rejected(self):
        with pytest.raises(InapplicableError) as info:
            contraction_params(0.0125, **self.args)
        assert info.value.assumption == "first-order-step"

    def test_monotone_in_h(self):
        grid = 0.0125 * 0.5 ** np.arange(1, 30)
        params = [contraction_params(h, **self.args) for h in grid]
        a_values = [p.A for p in params]
        assert all(x > y for x, y in zip(a_values, a_values[1:]))
        c_over_a = [p.C / p.A for p in params]
        b_term = [p.B / math.sqrt(p.A * (2 - p.A)) for p in params]
        assert all(x > y for x, y in zip(c_over_a, c_over_a[1:]))
        assert all(x > y for x, y in zip(b_term, b_term[1:]))
        # both terms shrink like sqrt(h): 2^-28 in h is 2^-14 in the bias
        assert c_over_a[-1] < 1e-3 * c_over_a[0] and b_term[-1] < 1e-3 * b_term[0]


class TestW2Bound:
    def test_k_zero(self):
        p = contraction_params(0.005, **TestContraction.args)
        assert w2_bound(0, 3.0, p) == pytest.approx(3.0 + p.C / p.A + p.B / math.sqrt(p.A * (2 - p.A)))

    def test_k_infinite(self):
        p = contraction_params(0.005, **TestContraction.args)
        assert w2_bound(10**7, 3.0, p) == pytest.approx(asymptotic_bias(p), rel=1e-14)

    def test_pure_decay_example(self):
        from heavytail.theory import ContractionParams

        value = w2_bound(100, 1.0, ContractionParams(0.0333, 0.0, 0.0, 0.01))
        assert value == pytest.approx((1 - 0.0333) ** 100, rel=1e-14)
        assert value == pytest.approx(0.0336, rel=1e-2)

    def test_negative_k(self):
        p = contraction_params(0.005, **TestContraction.args)
        with pytest.raises(ValueError):
            w2_bound(-1, 1.0, p)


class TestStepSizeForAccuracy:
    @pytest.mark.parametrize("d, beta", [(10, 11.0), (10, 6.5), (5, 6.0), (40, 41.0)])
    def test_delivers_accuracy(self, d, beta):
        dl = delta(beta, d, 2.0)
        mom = analytic_moments_student(d, beta)
        h = step_size_for_accuracy(0.5, d, beta, 2, 2, dl, mom.ev, mom.egrad2)
        p = contraction_params(h, 2, 2, beta, dl, d, mom.ev, mom.egrad2)
        assert asymptotic_bias(p) < 0.25

    def test_example_against_second_implementation(self):
        got = step_size_for_accuracy(0.5, 10, 11, 2, 2, 1, 2, 4)
        assert rel(got, oracles.mp_step_size(0.5, 10, 11, 2, 2, 1, 2, 4)) < 1e-10

    def test_eps_scaling_of_branches(self):
        kappa = 2.0

        def first(eps):
            return 1.0**2 * eps**2 / (2 * 81 * 10 * 16 * kappa**2)

        def second(eps):
            return eps / (2 * 81 * 10 * 4 * kappa)

        assert first(1.0) / first(0.5) == pytest.approx(4.0)
        assert second(1.0) / second(0.5) == pytest.approx(2.0)
        for eps in (1e-3, 0.5, 3.0):
            got = step_size_for_accuracy(eps, 10, 11, 2, 2, 1, 2, 4)
            assert got == pytest.approx(min(first(eps), second(eps), 0.0125), rel=1e-12)

    def test_rejects_non_positive_eps(self):
        with pytest.raises(InapplicableError):
            step_size_for_accuracy(0.0, 10, 11, 2, 2, 1, 2, 4)


class TestIterationComplexity:
    def test_already_converged(self):
        assert iteration_complexity(0.5, 0.25, 10, 11, 2, 2, 1, 2, 4) == 0
        assert log_accuracy_factor(0.25, 0.5) == 0.0

    def test_invariant_in_dimension_for_large_dof(self):
        values = set()
        for d in DIMS:
            m = analytic_moments_student(d, d + 1.0)
            values.add(iteration_complexity(0.5, 3.0, d, d + 1.0, 2, 2, 1.0, m.ev, m.egrad2))
        assert len(values) == 1

    @pytest.mark.parametrize("d, beta", [(5, 6.0), (10, 11.0), (10, 6.5), (20, 11.5)])
    def test_upper_bound_dominates(self, d, beta):
        dl = delta(beta, d, 2.0)
        m = analytic_moments_student(d, beta)
        k = iteration_complexity(0.5, 3.0, d, beta, 2, 2, dl, m.ev, m.egrad2)
        assert k <= iteration_complexity_upper(0.5, 3.0, d, beta, 2, 2, dl, m.ev, m.egrad2)

    def test_k_reaches_accuracy(self):
        d, beta, eps, w0 = 10, 11.0, 0.5, 3.0
        m = analytic_moments_student(d, beta)
        k = iteration_complexity(eps, w0, d, beta, 2, 2, 1, m.ev, m.egrad2)
        h = step_size_for_accuracy(eps, d, beta, 2, 2, 1, m.ev, m.egrad2)
        assert w2_bound(k, w0, contraction_params(h, 2, 2, beta, 1, d, m.ev, m.egrad2)) < eps


class TestZerothOrder:
    def test_step_bound_example(self):
        got = zeroth_order_step_bound(2, 2, 11, 1, 10, 1)
        middle = 2 * 1 * 1 / (24 * 2 * 10 * 15 * 4)
        assert got == pytest.approx(min(1 / 60, middle, 1 / 80), rel=1e-15)
        assert got == pytest.approx(1 / 14400, rel=1e-14)

    def test_infinite_batch_reduces_to_first_order(self):
        assert zeroth_order_step_bound(2, 2, 11, 1, 10, math.inf) == first_order_step_bound(2, 2, 11, 1)

    def test_doubling_m_doubles_middle_term(self):
        a = zeroth_order_step_bound(2, 2, 11, 1, 10, 1)
        b = zeroth_order_step_bound(2, 2, 11, 1, 10, 2)
        assert b == pytest.approx(2 * a, rel=1e-14)

    def test_params_against_second_implementation(self):
        p = zeroth_order_params(1e-4, 0.05, 4, 2, 2, 11, 1, 10, 2, 4)
        ref = oracles.mp_abc_zeroth(1e-4, 0.05, 4, 2, 2, 11, 1, 10, 2, 4)
        for got, want in zip((p.A, p.B, p.C), ref):
            assert rel(got, want) < 1e-10

    def test_a_prime_is_half_of_a(self):
        h = 1e-4
        assert zeroth_order_params(h, 0.05, 4, **TestContraction.args).A == pytest.approx(
            contraction_params(h, **TestContraction.args).A / 2, rel=1e-15)

    def test_degenerate_smoothing_matches_first_order(self):
        h = 0.004
        z = zeroth_order_params(h, 0.0, math.inf, **TestContraction.args)
        f = contraction_params(h, **TestContraction.args)
        assert z.B == pytest.approx(f.B, rel=1e-13)
        assert z.C == pytest.approx(f.C, rel=1e-13)

    @pytest.mark.parametrize("eps, dl, d, expected", [(0.5, 1, 4, 0.25), (1, 0.1, 10, 1 / (10 * math.sqrt(10)))])
    def test_recommended_sigma(self, eps, dl, d, expected):
        assert recommended_sigma(eps, dl, d) == pytest.approx(expected, rel=1e-15)

    def test_sigma_to_zero_with_eps(self):
        assert recommended_sigma(1e-12, 1, 10) < 1e-12

    def test_smoothing_floor_is_quarter_eps(self):
        eps, dl, d = 0.5, 1.0, 10
        sig = sigma_for_accuracy(eps, dl, d, 2, 2)
        floor = 6 * (1 + dl) * 2 * sig * math.sqrt(d) / (2 * dl)
        assert floor == pytest.approx(eps / 4, rel=1e-14)

    @pytest.mark.parametrize("d, beta, m", [(10, 11.0, 1), (10, 11.0, 10), (10, 6.5, 1), (5, 4.0, 3)])
    def test_h_star_delivers_accuracy(self, d, beta, m):
        dl = delta(beta, d, 2.0)
        mom = analytic_moments_student(d, beta)
        sig = sigma_for_accuracy(0.5, dl, d, 2, 2)
        h = zeroth_order_step_for_accuracy(0.5, d, beta, 2, 2, dl, mom.ev, mom.egrad2, m, sig)
        bias = asymptotic_bias(zeroth_order_params(h, sig, m, 2, 2, beta, dl, d, mom.ev, mom.egrad2))
        assert bias == pytest.approx(0.25, rel=1e-8) or bias < 0.25

    def test_oversized_sigma_inapplicable(self):
        with pytest.raises(InapplicableError):
            zeroth_order_step_for_accuracy(0.5, 10, 11, 2, 2, 1, 2, 4, 1, sigma=1.0)

    def test_iteration_complexity_matches_a_prime(self):
        d, beta, m = 10, 11.0, 10
        mom = analytic_moments_student(d, beta)
        k = zeroth_order_iteration_complexity(0.5, 3.0, d, beta, 2, 2, 1, mom.ev, mom.egrad2, m)
        h = zeroth_order_step_for_accuracy(0.5, d, beta, 2, 2, 1, mom.ev, mom.egrad2, m)
        a = 2 * 1 * 10 * h / (6 * 2)
        assert k == math.ceil(math.log(2 * 3.0 / 0.5) / a)

    def test_order_formula(self):
        value = zeroth_order_complexity_order(0.5, 3.0, 10, 1.0, 2.0, 4.0, 1)
        expected = max(2 / 0.25, 2 / 0.5, 10 * 4 / 0.25) * math.log(12.0)
        assert value == pytest.approx(expected, rel=1e-14)


class TestWeightedPoincare:
    def test_strongly_convex_value(self):
        expected = 1 / (2 * (math.sqrt(12) - math.sqrt(2)) ** 2)
        assert wpi_constant_strongly_convex(2, 11, 2) == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(0.11899, rel=1e-4)

    def test_strongly_convex_rate(self):
        assert chi2_rate_strongly_convex(2, 11, 2) == pytest.approx(16.81, rel=1e-3)

    def test_boundary(self):
        with pytest.raises(InapplicableError):
            wpi_constant_strongly_convex(2, 11, 12)
        assert chi2_rate_strongly_convex(2, 11, 12) == 0.0

    @settings(max_examples=100)
    @given(alpha=st.floats(0.01, 100), beta=st.floats(1.01, 200), frac=st.floats(0.001, 0.999))
    def test_rate_times_constant_is_two(self, alpha, beta, frac):
        cv = frac * (beta + 1)
        product = chi2_rate_strongly_convex(alpha, beta, cv) * wpi_constant_strongly_convex(alpha, beta, cv)
        assert product == pytest.approx(2.0, rel=1e-12)

    def test_student_cv_gamma(self):
        assert student_cv_gamma(10, 6.5) == pytest.approx(144 / 13, rel=1e-15)

    @pytest.mark.parametrize("d, beta", [(10, 6.5), (10, 7.0), (20, 15.0), (4, 3.5)])
    def test_small_beta_simplified_form(self, d, beta):
        nu = 2 * beta - d
        closed = (d + 2) ** 2 / ((d + 1) * (d + nu) * (nu - 2))
        assert wpi_constant_student_small_beta(d, beta) == pytest.approx(closed, rel=1e-13)

    def test_small_beta_rate_identity(self):
        gamma, cvg = 6.5 / 12, student_cv_gamma(10, 6.5)
        product = chi2_rate_small_beta(6.5, gamma, cvg, 10) * wpi_constant_small_beta(6.5, gamma, cvg, 10)
        assert product == pytest.approx(1.0, rel=1e-12)

    def test_gamma_out_of_range(self):
        with pytest.raises(InapplicableError):
            wpi_constant_small_beta(6.5, 1.0, 1.0, 10)

    def test_student_range(self):
        with pytest.raises(InapplicableError):
            student_cv_gamma(10, 11.0)
        with pytest.raises(InapplicableError):
            student_cv_gamma(10, 6.0)


class TestBridge:
    def test_equal_constants(self):
        res = bridge_small_beta(2, 2, 11, 10)
        assert res.available
        assert res.gamma == pytest.approx(11 / 12)
        assert res.cv_gamma == pytest.approx(2 * 144 / (2 * 4 * 11) / (11 - 0.5 * 12), rel=1e-14)

    def test_hypothesis_fails(self):
        res = bridge_small_beta(2, 2, 6.0, 10)
        assert not res.available and res.cv_gamma is None

    def test_polynomial_predicate(self):
        assert bridge_small_beta(2, 2, 6.5, 10, cv=1.5).polynomial_predicate
        assert not bridge_small_beta(2, 2, 6.5, 10, cv=3.0).polynomial_predicate


class TestMoments:
    @pytest.mark.parametrize("d, beta, ev, eg", [(10, 11.0, 2.0, 4.0), (10, 6.5, 11.0, 40.0)])
    def test_examples(self, d, beta, ev, eg):
        m = analytic_moments_student(d, beta)
        assert (m.ev, m.egrad2) == (pytest.approx(ev, rel=1e-15), pytest.approx(eg, rel=1e-15))

    @pytest.mark.parametrize("d, beta", [(1, 2.0), (3, 3.5), (10, 11.0), (10, 6.5), (6, 4.3)])
    def test_against_quadrature(self, d, beta):
        ev, eg = oracles.student_moments(d, beta)
        m = analytic_moments_student(d, beta)
        assert m.ev == pytest.approx(ev, rel=1e-8)
        assert m.egrad2 == pytest.approx(eg, rel=1e-8)

    def test_anisotropic(self):
        m = analytic_moments_student(2, 3.0, np.diag([1.0, 4.0]))
        assert m.ev == 2.0
        assert m.egrad2 == pytest.approx(10.0)
        assert m.egrad2_provenance == "exact"

    def test_anisotropic_monte_carlo(self):
        from heavytail.targets import eval_grad, reference_sample

        sigma = np.array([[2.0, 0.5], [0.5, 1.0]])
        t = anisotropic_student(sigma, 4.0)
        x = reference_sample(t, 400_000, np.random.default_rng(11)).states
        g = eval_grad(t, x)
        values = np.sum(g * g, axis=1)
        exact = analytic_moments_student(2, 4.0, sigma).egrad2
        assert abs(values.mean() - exact) < 4 * values.std() / math.sqrt(values.size)

    def test_infinite(self):
        with pytest.raises(MomentsInfiniteError):
            analytic_moments_student(10, 6.0)

    def test_second_moment_and_default_w2(self):
        assert second_moment_student(10, 11.0) == pytest.approx(10 / 10)
        assert default_w2_init(isotropic_student(10, 11.0)) == pytest.approx(1.0)
        assert default_w2_init(isotropic_student(10, 11.0), 4.0) == pytest.approx(3.0)

    def test_lyapunov_example(self):
        ev, eg = moment_bound_lyapunov(2, 1, 3.0, 5, 11.0, 10)
        assert ev == 105 and eg == pytest.approx(2100 / 10)

    def test_lyapunov_limits(self):
        ev, eg = moment_bound_lyapunov(2, 0.0, 3.0, 5, 11.0, 10)
        assert ev == 100 and eg == pytest.approx(400 * 5 / 10)
        assert moment_bound_lyapunov(2, 1, 3.0, 5, 1e12, 10)[1] < 1e-6

    def test_general_bound_against_second_implementation(self):
        ev, eg = moment_bound_general(2, 2, 1, 11, 10, 2)
        want = oracles.mp_general_moment_bound(2, 2, 1, 11, 10, 2)
        assert rel(ev, want) < 1e-10
        assert eg == pytest.approx(10 * 2 / 10 * ev, rel=1e-14)

    def test_general_bound_dominates_exact(self):
        _, ev, _ = best_moment_bound_general(2, 2, 1, 11, 10)
        assert ev >= analytic_moments_student(10, 11.0).ev

    def test_general_bound_r_range(self):
        with pytest.raises(InapplicableError):
            moment_bound_general(2, 2, 1, 11, 10, 5.0)
        with pytest.raises(InapplicableError):
            moment_bound_general(3, 2, 1, 11, 10, 1.0)


class TestGammaRatio:
    def test_equality_case(self):
        ratio, bound = gamma_ratio_and_bound(5, 2, 1)
        assert ratio == pytest.approx(4.0, rel=1e-14) and bound == 4.0

    def test_odd_dimension(self):
        ratio, bound = gamma_ratio_and_bound(5, 3, 1)
        assert rel(ratio, oracles.mp_gamma_ratio(5, 3, 1)) < 1e-10
        assert bound == pytest.approx(math.sqrt(2) * 3.5**1.5, rel=1e-14)
        assert ratio <= bound

    def test_one_dimension(self):
        ratio, bound = gamma_ratio_and_bound(2, 1, 0.25)
        assert ratio <= bound

    @settings(max_examples=200)
    @given(d=st.integers(1, 20), beta_frac=st.floats(0.01, 1.0), r_frac=st.floats(0.01, 0.99))
    def test_bound_holds(self, d, beta_frac, r_frac):
        beta = d / 2 + 1.5 + beta_frac * (2 * d - d / 2 - 1.5) if 2 * d > d / 2 + 1.5 else d / 2 + 1.5
        r = r_frac * (beta - d / 2 - 1)
        ratio, bound = gamma_ratio_and_bound(beta, d, r)
        assert rel(ratio, oracles.mp_gamma_ratio(beta, d, r)) < 1e-9
        assert ratio <= bound * (1 + 1e-12)


class TestDissipativity:
    @pytest.mark.parametrize("d", DIMS)
    def test_large_dof(self, d):
        res = dissipativity_constant_student(d + 1.0, d)
        assert res.value == pytest.approx(d) and res.contractive
        assert res.value == pytest.approx(2.0 * delta(d + 1.0, d, 2.0) * d / 2.0)

    @pytest.mark.parametrize("d", DIMS)
    def test_small_dof(self, d):
        assert dissipativity_constant_student((d + 3.0) / 2.0, d).value == pytest.approx(1.0)

    def test_boundary(self):
        res = dissipativity_constant_student(6.0, 10)
        assert res.value == 0.0 and not res.contractive

    def test_condition(self):
        assert dissipativity_condition(2, 11, 10, 2, 10.0)
        assert not dissipativity_condition(2, 11, 10, 2, 9.0)


class TestMomentDifference:
    def test_zero_time(self):
        assert moment_difference_bound(0.0, 11, 2, 10, 2, 4) == 0.0

    def test_example(self):
        t = 0.01
        expected = 4 * (100 * t**2 * 4 + t * 10 * 2) * math.exp(4 * 100 * 4 * t**2 + 10 * 10 * 4 * t**2 + 2 * 10 * 2 * t)
        assert moment_difference_bound(t, 11, 2, 10, 2, 4) == pytest.approx(expected, rel=1e-14)

    def test_simplified_dominates_when_exponent_small(self):
        # beta - 1 = 10 >= 3d/4 = 7.5
        for t in np.linspace(1e-4, 1 / (4 * 10 * 2) * 0.999, 20):
            assert moment_difference_bound(t, 11, 2, 10, 2, 4) <= moment_difference_simplified(t, 11, 10, 2, 4)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            moment_difference_bound(-1.0, 11, 2, 10, 2, 4)


class TestRadialCondition:
    grid = np.geomspace(1e-3, 1e3, 400)

    def test_quadratic(self):
        rep = check_radial_condition(lambda r: 1 + r**2, lambda r: 2 * r, lambda r: 2 + 0 * r, 2.0, self.grid)
        assert rep.holds and rep.n_points == 400

    def test_linear_violates(self):
        rep = check_radial_condition(lambda r: r, lambda r: 1 + 0 * r, lambda r: 0 * r, 2.0, self.grid)
        assert not rep.holds and len(rep.violations) == 400

    def test_quartic(self):
        rep = check_radial_condition(lambda r: 1 + r**4, lambda r: 4 * r**3, lambda r: 12 * r**2, 4.0, self.grid)
        assert rep.holds

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            check_radial_condition(lambda r: r, lambda r: r, lambda r: r, 1.0, [])


class TestReport:
    def test_large_dof_complete(self):
        rep = theory_report(isotropic_student(10, 11.0), 0.5)
        invalid = {n for n, q in rep.quantities.items() if not q.valid}
        assert invalid == {"wpi_constant_small_beta", "chi2_rate_small_beta"}
        assert rep.value("delta") == 1.0
        assert rep.value("K_first") <= rep.value("K_first_upper")

    def test_small_dof(self):
        rep = theory_report(isotropic_student(10, 6.5), 0.5)
        assert rep.value("wpi_constant_small_beta") == pytest.approx(144 / 143)
        assert rep["wpi_constant"].valid
        assert not rep["chi2_rate"].valid and "beta > d" in rep["chi2_rate"].reason
        assert rep.value("dissipativity_constant") == pytest.approx(1.0)

    def test_infinite_moments_marked(self):
        rep = theory_report(isotropic_student(10, 5.5), 0.5)
        assert not rep["delta"].valid
        assert not rep["ev"].valid
        for name in ("h_star_first", "K_first", "A", "K_zeroth"):
            assert not rep[name].valid and rep[name].reason

    def test_step_above_bound_marked(self):
        rep = theory_report(isotropic_student(10, 11.0), 0.5, h=0.02)
        assert not rep["A"].valid and "below" in rep["A"].reason

    def test_custom_target_without_moments(self):
        t = custom_target(lambda x: 1 + np.sum(x**2, -1), lambda x: 2 * x, 3, 5.0, 2.0, 2.0, 2.0)
        rep = theory_report(t, 0.5)
        assert rep["delta"].valid and not rep["K_first"].valid

    def test_rows_long_format(self):
        rows = theory_report(isotropic_student(4, 5.0), 0.5, scenario="x").rows()
        assert {r["scenario"] for r in rows} == {"x"}
        assert all(set(r) == {"scenario", "quantity", "value", "valid", "provenance", "assumptions", "reason"}
                   for r in rows)

    def test_assumption_keys_known(self):
        rep = theory_report(isotropic_student(10, 11.0), 0.5)
        for q in rep.quantities.values():
            assert set(q.assumptions) <= set(ASSUMPTIONS)
