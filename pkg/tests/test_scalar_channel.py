import math

import numpy as np
import pytest
from scipy.special import gamma as gamma_fn

from lscdma.constellation import make_standard
from lscdma.scalar_channel import (
    DecisionRangeError,
    QuadratureError,
    QuadratureRule,
    ScalarParams,
    cross_entropy,
    decision,
    decision_inverse,
    imm_derivative_check,
    mmse,
    mmse_vec,
    moment_fn_p,
    moment_fn_q,
    mse,
    mutual_info,
    mutual_info_vec,
    variance,
)

BPSK = make_standard("bpsk")
QPSK = make_standard("qpsk")
PSK8 = make_standard("8psk")
QAM16 = make_standard("16qam")
GAUSS_R = make_standard("gaussian-real")
GAUSS_C = make_standard("gaussian-complex")


# --- independent oracles (trapezoid quadrature on a wide fine grid) --------

_Z = np.linspace(-16.0, 16.0, 400001)
_PHI = np.exp(-_Z**2 / 2.0) / math.sqrt(2.0 * math.pi)


def mmse_binary_oracle(g):
    return 1.0 - np.trapezoid(_PHI * np.tanh(g - _Z * math.sqrt(g)), _Z)


def info_binary_oracle(g):
    u = g - _Z * math.sqrt(g)
    log_cosh = np.abs(u) + np.log1p(np.exp(-2.0 * np.abs(u))) - math.log(2.0)
    return g - np.trapezoid(_PHI * log_cosh, _Z)


class TestQuadratureRule:
    def test_monomial_exactness(self):
        # exact for polynomial degree 2n-1 against exp(-t^2)
        rule = QuadratureRule("gauss-hermite-1d", 8)
        t, w = rule.abscissae, rule.weights
        for m in range(0, 16):
            got = w @ t**m
            want = 0.0 if m % 2 else gamma_fn((m + 1) / 2.0)
            assert abs(got - want) <= 1e-10 * max(1.0, abs(want))

    def test_positive_weights(self):
        for n in (8, 48, 96, 384):
            assert np.all(QuadratureRule("gauss-hermite-1d", n).weights > 0)

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            QuadratureRule("clenshaw-curtis", 8)

    def test_unverifiable_rule_errors(self):
        # a rule already at the ladder cap cannot be double-checked
        with pytest.raises(QuadratureError):
            mmse(10.0, BPSK, rule=QuadratureRule("gauss-hermite-1d", 3072))


class TestMomentFunctions:
    def test_q0_binary_value(self):
        # 0.5 [phi(z - 1) + phi(z + 1)] at z = 0 equals phi(1)
        params = ScalarParams(1.0, 1.0, 1.0)
        got = moment_fn_q(0, 0.0, params, BPSK)
        assert abs(got - 0.24197072451914337) <= 1e-15

    def test_q1_odd_symmetry(self):
        params = ScalarParams(2.0, 1.0, 0.7)
        assert abs(moment_fn_q(1, 0.0, params, BPSK)) <= 1e-16
        v = moment_fn_q(1, np.array([0.0, 0.0]), params, QPSK)
        assert np.max(np.abs(v)) <= 1e-16

    def test_q0_integrates_to_one(self):
        params = ScalarParams(2.0, 1.0, 0.8)
        vals = moment_fn_q(0, _Z, params, BPSK)
        assert abs(np.trapezoid(vals, _Z) - 1.0) <= 1e-9

    def test_p0_integrates_to_one(self):
        params = ScalarParams(2.0, 0.7, 0.8)
        vals = moment_fn_p(0, _Z, params, BPSK)
        assert abs(np.trapezoid(vals, _Z) - 1.0) <= 1e-9

    def test_p0_binary_value(self):
        snr = 2.0
        params = ScalarParams(snr, 1.0, 1.0)
        z = math.sqrt(snr)
        phi = lambda t: math.exp(-t * t / 2.0) / math.sqrt(2.0 * math.pi)
        want = 0.5 * (phi(0.0) + phi(2.0 * math.sqrt(snr)))
        assert abs(moment_fn_p(0, z, params, BPSK) - want) <= 1e-15

    def test_hard_decision_limit(self):
        # p1/p0 tends to the largest symbol for z -> +inf (z kept inside the
        # range where the raw densities stay representable)
        params = ScalarParams(1.0, 1.0, 1.0)
        z = 15.0
        ratio = moment_fn_p(1, z, params, BPSK) / moment_fn_p(0, z, params, BPSK)
        assert abs(ratio - 1.0) <= 1e-12

    def test_unsupported_moment(self):
        with pytest.raises(ValueError):
            moment_fn_q(3, 0.0, ScalarParams(1.0, 1.0, 1.0), BPSK)


class TestDecision:
    def test_binary_is_tanh(self):
        params = ScalarParams(2.0, 0.9, 0.6)
        for z in (-3.0, -0.4, 0.0, 1.3, 5.0):
            want = math.tanh(0.6 * math.sqrt(2.0) * z)
            assert abs(decision(z, params, BPSK) - want) <= 1e-12

    def test_gaussian_is_linear_attenuator(self):
        params = ScalarParams(4.0, 1.0, 0.5)
        a = 0.5 * 2.0 / (1.0 + 0.5 * 4.0)
        for z in (-2.0, 0.3, 7.0):
            assert abs(decision(z, params, GAUSS_R) - a * z) <= 1e-14

    def test_zero_at_origin_and_saturation(self):
        params = ScalarParams(1.0, 1.0, 1.0)
        assert decision(0.0, params, BPSK) == 0.0
        assert decision(40.0, params, BPSK) > 1.0 - 1e-12

    def test_strictly_increasing(self):
        from lscdma.scalar_channel import _decision_slope

        params = ScalarParams(2.0, 0.7, 0.7)
        grid = np.linspace(-6, 6, 201)
        vals = decision(grid, params, BPSK)
        assert np.all(np.diff(vals) > 0)
        # the slope identity: d'(z) = xi sqrt(snr) (r2 - d^2) stays positive
        assert np.all(_decision_slope(grid, params, BPSK) > 0)


class TestDecisionInverse:
    def test_round_trip_real(self):
        params = ScalarParams(2.0, 0.8, 0.8)
        grid = np.linspace(-4, 4, 41)
        vals = decision(grid, params, BPSK)
        back = decision_inverse(vals, params, BPSK)
        assert np.max(np.abs(back - grid)) <= 1e-9

    def test_binary_symmetry(self):
        params = ScalarParams(1.5, 1.0, 1.0)
        assert decision_inverse(0.0, params, BPSK) == pytest.approx(0.0, abs=1e-12)

    def test_gaussian_closed_form(self):
        params = ScalarParams(4.0, 1.0, 0.5)
        a = 0.5 * 2.0 / (1.0 + 2.0)
        v = 0.37
        assert abs(decision_inverse(v, params, GAUSS_R) - v / a) <= 1e-12

    def test_out_of_range(self):
        params = ScalarParams(1.0, 1.0, 1.0)
        for v in (1.0, -1.0, 1.3):
            with pytest.raises(DecisionRangeError):
                decision_inverse(v, params, BPSK)

    def test_round_trip_complex(self):
        params = ScalarParams(2.0, 0.8, 0.6)
        for prior in (QPSK, PSK8):
            for z in ([0.4, -0.3], [1.2, 0.9], [-0.05, 0.01]):
                z = np.asarray(z)
                back = decision_inverse(decision(z, params, prior), params, prior)
                assert np.max(np.abs(back - z)) <= 1e-8


class TestMseVariance:
    @pytest.mark.parametrize("prior", [BPSK, QPSK, GAUSS_R, GAUSS_C])
    def test_matched_identity(self, prior):
        # E(snr; x, x) = V(snr; x, x) = mmse(x snr)
        for x in (0.5, 1.0):
            params = ScalarParams(2.0, x, x)
            e = mse(params, prior, prior)
            v = variance(params, prior, prior)
            m = mmse(2.0 * x, prior)
            assert abs(e - v) <= 1e-8
            assert abs(e - m) <= 1e-8

    def test_no_information_limit(self):
        params = ScalarParams(1e-9, 1.0, 1.0)
        assert abs(mse(params, BPSK, BPSK) - 1.0) <= 1e-6

    def test_gaussian_closed_forms(self):
        params = ScalarParams(10.0, 0.7, 0.4)
        want_e = (0.7 + 0.4**2 * 10.0) / (0.7 * (1.0 + 4.0) ** 2)
        assert mse(params, GAUSS_R, GAUSS_R) == pytest.approx(want_e, abs=1e-15)
        assert variance(params, GAUSS_R, GAUSS_R) == pytest.approx(0.2, abs=1e-15)

    def test_variance_eta_independent_for_gaussian_postulate(self):
        p1 = ScalarParams(3.0, 0.2, 0.6)
        p2 = ScalarParams(3.0, 0.9, 0.6)
        assert abs(variance(p1, BPSK, GAUSS_R) - variance(p2, BPSK, GAUSS_R)) <= 1e-12

    def test_variance_vanishes_at_noiseless_postulate(self):
        params = ScalarParams(2.0, 1.0, 1e4)
        assert variance(params, BPSK, BPSK) < 1e-3

    def test_mixed_priors_kind_check(self):
        with pytest.raises(ValueError):
            mse(ScalarParams(1.0, 1.0, 1.0), BPSK, QPSK)


class TestMmse:
    def test_zero_snr(self):
        assert mmse(0.0, BPSK) == 1.0
        assert mutual_info(0.0, BPSK) == 0.0

    @pytest.mark.parametrize("g", [0.5, 2.0, 10.0])
    def test_binary_matches_tanh_integral(self, g):
        assert abs(mmse(g, BPSK) - mmse_binary_oracle(g)) <= 1e-8

    def test_gaussian_closed_form(self):
        for g in (0.3, 1.0, 9.0):
            assert mmse(g, GAUSS_R) == pytest.approx(1.0 / (1.0 + g), abs=1e-15)

    def test_monotone_decreasing(self):
        grid = np.geomspace(0.01, 50.0, 40)
        for prior in (BPSK, QPSK):
            vals = mmse_vec(grid, prior)
            assert np.all(np.diff(vals) < 0)


class TestMutualInfo:
    def test_gaussian_closed_forms(self):
        assert mutual_info(3.0, GAUSS_R) == pytest.approx(0.5 * math.log(4.0), abs=1e-15)
        assert mutual_info(3.0, GAUSS_C) == pytest.approx(math.log(4.0), abs=1e-15)

    @pytest.mark.parametrize("g", [0.5, 1.0, 4.0])
    def test_binary_matches_closed_form(self, g):
        assert abs(mutual_info(g, BPSK) - info_binary_oracle(g)) <= 1e-8

    def test_monotone_and_entropy_bound(self):
        grid = np.geomspace(0.05, 60.0, 30)
        vals = mutual_info_vec(grid, BPSK)
        assert np.all(np.diff(vals) > 0)
        assert vals[-1] <= math.log(2.0) + 1e-12
        vals_q = mutual_info_vec(grid, QPSK)
        assert vals_q[-1] <= math.log(4.0) + 1e-12

    def test_complex_factorization(self):
        for g in (0.4, 2.0, 9.0):
            assert abs(mutual_info(g, QPSK) - 2.0 * mutual_info(g, BPSK)) <= 1e-10


class TestTensorAgainstAxisReduction:
    """The 2-D tensor rule and the exact per-axis reduction must agree."""

    def test_mmse(self):
        rule = QuadratureRule("gauss-hermite-2d-tensor", 48)
        for g in (0.5, 2.0):
            assert abs(mmse(g, QPSK, rule=rule) - mmse(g, BPSK)) <= 1e-10

    def test_mse_variance_cross_entropy(self):
        rule = QuadratureRule("gauss-hermite-2d-tensor", 48)
        params = ScalarParams(2.0, 0.7, 0.5)
        assert abs(mse(params, QPSK, QPSK, rule=rule) - mse(params, QPSK, QPSK)) <= 1e-10
        assert abs(variance(params, QPSK, QPSK, rule=rule)
                   - variance(params, QPSK, QPSK)) <= 1e-10
        assert abs(cross_entropy(params, QPSK, QPSK, rule=rule)
                   - cross_entropy(params, QPSK, QPSK)) <= 1e-10

    def test_gaussian_complex_cross_entropy_closed_form(self):
        params = ScalarParams(2.0, 0.7, 0.5)
        got = cross_entropy(params, GAUSS_C, GAUSS_C)
        out_var = 2.0 + 1.0 / 0.5
        ez2 = 2.0 + 1.0 / 0.7
        want = -math.log(math.pi * out_var) - ez2 / out_var
        assert got == pytest.approx(want, abs=1e-15)


class TestImmDerivative:
    def test_gaussian_exact(self):
        di, hm = imm_derivative_check(2.0, GAUSS_R)
        assert abs(di - 1.0 / (2.0 * 3.0)) <= 1e-6
        assert abs(hm - 1.0 / (2.0 * 3.0)) <= 1e-15

    def test_binary_gamma_one(self):
        di, hm = imm_derivative_check(1.0, BPSK)
        assert abs(di - hm) <= 1e-4

    def test_saturation(self):
        di, hm = imm_derivative_check(60.0, BPSK)
        assert di <= 1e-4 and hm <= 1e-4

    def test_complex_carries_two_dimensions(self):
        di, hm = imm_derivative_check(1.0, QPSK)
        assert abs(di - 2.0 * hm) <= 1e-4
