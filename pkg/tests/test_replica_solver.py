import math

import numpy as np
import pytest

from lscdma.constellation import (DetectorSpec, SnrProfile, db_to_linear,
                                  equal_power_profile, make_standard,
                                  two_group_profile)
from lscdma.replica_solver import (
    SolverError,
    SystemSpec,
    coexistence_threshold,
    decorrelator_eta,
    free_energy,
    general_linear_eta,
    io_joint_capacity_nats,
    lmmse_eta,
    matched_filter_eta,
    residuals,
    solve,
    solve_coupled,
    solve_io,
    tau_solution_exists,
)
from lscdma import replica_solver as rs
from lscdma import scalar_channel as sc

BPSK = make_standard("bpsk")
QPSK = make_standard("qpsk")
GAUSS_R = make_standard("gaussian-real")

PROF_1 = SnrProfile(((1.0, 1.0),))
PROF_10 = SnrProfile(((10.0, 1.0),))
TSE_HANLY_ROOT = (-1.0 + math.sqrt(41.0)) / 20.0


def spec_of(beta, prof, prior, det, kind="real"):
    return SystemSpec(beta, prof, prior, det, kind)


# --- independent oracles ----------------------------------------------------

_Z = np.linspace(-16.0, 16.0, 400001)
_PHI = np.exp(-_Z**2 / 2.0) / math.sqrt(2.0 * math.pi)


def mmse_binary_oracle(g):
    return 1.0 - np.trapezoid(_PHI * np.tanh(g - _Z * math.sqrt(g)), _Z)


def io_eta_binary_oracle(beta, snr):
    f = lambda e: 1.0 / e - 1.0 - beta * snr * mmse_binary_oracle(e * snr)
    lo, hi = 1e-6, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def linear_xi_oracle(beta, prof, sigma2):
    s, w = prof.snrs(), prof.weights()
    f = lambda xi: 1.0 / xi - sigma2 - beta * float(np.sum(w * s / (1.0 + xi * s)))
    lo, hi = 1e-12, 1e12
    for _ in range(220):
        mid = math.sqrt(lo * hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


class TestClosedForms:
    def test_matched_filter(self):
        assert matched_filter_eta(spec_of(1.0, PROF_1, BPSK, DetectorSpec.matched_filter())) == 0.5
        assert matched_filter_eta(spec_of(0.0, PROF_1, BPSK, DetectorSpec.matched_filter())) == 1.0

    def test_matched_filter_two_group(self):
        prof = two_group_profile(2.0, 10.0)
        s = prof.snrs()[0]
        spec = spec_of(1.5, prof, BPSK, DetectorSpec.matched_filter())
        assert matched_filter_eta(spec) == pytest.approx(1.0 / (1.0 + 1.5 * 5.5 * s), abs=1e-15)

    def test_decorrelator_underloaded(self):
        for prof in (PROF_1, PROF_10, two_group_profile(5.0, 10.0)):
            spec = spec_of(0.5, prof, GAUSS_R, DetectorSpec.decorrelator())
            assert decorrelator_eta(spec) == 0.5

    def test_decorrelator_overloaded_equal_power(self):
        spec = spec_of(2.0, PROF_1, GAUSS_R, DetectorSpec.decorrelator())
        assert abs(decorrelator_eta(spec) - 1.0 / 3.0) <= 1e-12

    def test_decorrelator_overloaded_two_group_oracle(self):
        prof = two_group_profile(2.0, 10.0)
        spec = spec_of(2.0, prof, GAUSS_R, DetectorSpec.decorrelator())
        xi = linear_xi_oracle(2.0, prof, 0.0)
        s, w = prof.snrs(), prof.weights()
        eta_oracle = xi - xi / (1.0 + 2.0 * float(np.sum(w * s / (1.0 + xi * s) ** 2)))
        assert abs(decorrelator_eta(spec) - eta_oracle) <= 1e-10

    def test_decorrelator_critical_load(self):
        with pytest.raises(SolverError):
            decorrelator_eta(spec_of(1.0, PROF_1, GAUSS_R, DetectorSpec.decorrelator()))

    def test_lmmse_tse_hanly_root(self):
        spec = spec_of(1.0, PROF_10, GAUSS_R, DetectorSpec.lmmse())
        assert abs(lmmse_eta(spec) - TSE_HANLY_ROOT) <= 1e-12

    def test_lmmse_prior_free(self):
        a = lmmse_eta(spec_of(1.0, PROF_10, GAUSS_R, DetectorSpec.lmmse()))
        b = lmmse_eta(spec_of(1.0, PROF_10, BPSK, DetectorSpec.lmmse()))
        assert a == b

    def test_general_linear_reduces_to_tse_hanly(self):
        spec = spec_of(1.0, PROF_10, GAUSS_R, DetectorSpec.lmmse())
        eta, xi = general_linear_eta(spec)
        assert abs(eta - xi) <= 1e-12
        assert abs(eta - TSE_HANLY_ROOT) <= 1e-10

    def test_general_linear_finite_sigma_solves_equations(self):
        det = DetectorSpec.custom(GAUSS_R, 2.0)
        spec = spec_of(1.5, two_group_profile(6.0, 10.0), BPSK, det)
        eta, xi = general_linear_eta(spec)
        r_eta, r_xi = residuals(eta, xi, spec)
        assert abs(r_eta) <= 1e-10 and abs(r_xi) <= 1e-10


class TestResiduals:
    def test_zero_load(self):
        det = DetectorSpec.custom(GAUSS_R, 2.0)
        spec = spec_of(0.0, PROF_1, BPSK, det)
        r_eta, r_xi = residuals(1.0, 1.0 / 4.0, spec)
        assert abs(r_eta) <= 1e-14 and abs(r_xi) <= 1e-14

    def test_symmetric_diagonal_for_true_posterior(self):
        # E = V on eta = xi when the postulated model is the actual one
        spec = spec_of(0.7, PROF_1, BPSK, DetectorSpec.individually_optimal())
        for x in (0.3, 0.8):
            r_eta, r_xi = residuals(x, x, spec)
            assert abs(r_eta - r_xi) <= 1e-10

    def test_limit_detectors_rejected(self):
        spec = spec_of(1.0, PROF_1, BPSK, DetectorSpec.matched_filter())
        with pytest.raises(SolverError):
            residuals(0.5, 0.5, spec)
        with pytest.raises(SolverError):
            free_energy(0.5, 0.5, spec)


class TestSolveCoupled:
    def test_gaussian_matches_quadratic_root(self):
        sol = solve_coupled(spec_of(1.0, PROF_10, GAUSS_R, DetectorSpec.lmmse()))
        assert abs(sol.eta - TSE_HANLY_ROOT) <= 1e-9
        assert abs(sol.xi - sol.eta) <= 1e-9
        assert sol.residual <= 1e-10

    def test_limits_rejected(self):
        with pytest.raises(SolverError):
            solve_coupled(spec_of(1.0, PROF_1, BPSK, DetectorSpec.matched_filter()))

    def test_agrees_with_io_solver(self):
        snr = db_to_linear(2.0)
        prof = SnrProfile(((snr, 1.0),))
        spec = spec_of(2.0 / 3.0, prof, BPSK, DetectorSpec.individually_optimal())
        a = solve_coupled(spec)
        b = solve_io(spec)
        assert abs(a.eta - b.eta) <= 1e-8
        assert abs(a.xi - b.eta) <= 1e-8

    def test_zero_load(self):
        det = DetectorSpec.custom(GAUSS_R, 2.0)
        sol = solve_coupled(spec_of(0.0, PROF_1, BPSK, det))
        assert sol.eta == 1.0 and sol.xi == 0.25

    def test_solution_invariants(self):
        det = DetectorSpec.custom(BPSK, 1.5)
        spec = spec_of(0.8, PROF_1, BPSK, det)
        sol = solve_coupled(spec)
        assert 0.0 < sol.eta <= 1.0
        r = residuals(sol.eta, sol.xi, spec)
        assert max(abs(v) for v in r) <= 1e-10
        fes = [b.free_energy for b in sol.branches]
        assert sol.free_energy == min(fes)


class TestSolveIo:
    def test_zero_load(self):
        spec = spec_of(0.0, PROF_1, BPSK, DetectorSpec.individually_optimal())
        assert solve_io(spec).eta == 1.0

    def test_gaussian_prior_reduces_to_tse_hanly(self):
        spec = spec_of(1.0, PROF_10, GAUSS_R, DetectorSpec.individually_optimal())
        assert abs(solve_io(spec).eta - TSE_HANLY_ROOT) <= 1e-9

    def test_binary_matches_bisection_oracle(self):
        snr = db_to_linear(2.0)
        spec = spec_of(2.0 / 3.0, SnrProfile(((snr, 1.0),)), BPSK,
                       DetectorSpec.individually_optimal())
        sol = solve_io(spec)
        assert abs(sol.eta - io_eta_binary_oracle(2.0 / 3.0, snr)) <= 1e-8
        assert sol.residual <= 1e-10
        assert len(sol.branches) == 1

    def test_requires_io_preset(self):
        with pytest.raises(SolverError):
            solve_io(spec_of(1.0, PROF_1, GAUSS_R, DetectorSpec.lmmse()))

    def test_branch_inventory_matches_residual_sign_changes(self):
        snr = db_to_linear(12.0)
        spec = spec_of(3.0, SnrProfile(((snr, 1.0),)), BPSK,
                       DetectorSpec.individually_optimal())
        sol = solve_io(spec)
        grid = np.geomspace(1e-4, 1.0, 10_000)
        res = rs._io_residual_vec(grid, spec)
        sign_changes = int(np.sum(np.diff(np.sign(res)) != 0))
        assert sign_changes == len(sol.branches)
        assert len(sol.branches) >= 2

    def test_dominant_branch_minimizes_both_rankings(self):
        snr = db_to_linear(12.0)
        spec = SystemSpec(3.0, SnrProfile(((snr, 1.0),)), QPSK,
                          DetectorSpec.individually_optimal(), "complex")
        sol = solve_io(spec)
        assert len(sol.branches) >= 2
        cjs = [io_joint_capacity_nats(b.eta, spec) for b in sol.branches]
        fes = [b.free_energy for b in sol.branches]
        assert sol.dominant_index == int(np.argmin(cjs)) == int(np.argmin(fes))
        # past the coexistence onset the valid solution is the low branch
        assert sol.eta == min(b.eta for b in sol.branches)
        assert sol.notes == ()

    def test_complex_equals_real(self):
        snr = db_to_linear(2.0)
        prof = SnrProfile(((snr, 1.0),))
        a = solve_io(spec_of(2.0 / 3.0, prof, BPSK, DetectorSpec.individually_optimal()))
        b = solve_io(SystemSpec(2.0 / 3.0, prof, QPSK,
                                DetectorSpec.individually_optimal(), "complex"))
        assert abs(a.eta - b.eta) <= 1e-9


class TestFreeEnergy:
    def test_finite_and_real_at_solution(self):
        spec = spec_of(1.0, PROF_10, GAUSS_R, DetectorSpec.lmmse())
        sol = solve_coupled(spec)
        fe = free_energy(sol.eta, sol.xi, spec)
        assert math.isfinite(fe)

    def test_joint_capacity_consistency_real(self):
        # beta F - ln(2 pi e)/2 must equal the joint capacity expression
        snr = db_to_linear(6.0)
        spec = spec_of(1.0, SnrProfile(((snr, 1.0),)), BPSK,
                       DetectorSpec.individually_optimal())
        sol = solve_io(spec)
        fe = free_energy(sol.eta, sol.eta, spec)
        cj = io_joint_capacity_nats(sol.eta, spec)
        assert abs(spec.beta * fe - 0.5 * math.log(2.0 * math.pi * math.e) - cj) <= 1e-8

    def test_joint_capacity_consistency_complex(self):
        snr = db_to_linear(6.0)
        spec = SystemSpec(1.0, SnrProfile(((snr, 1.0),)), QPSK,
                          DetectorSpec.individually_optimal(), "complex")
        sol = solve_io(spec)
        fe = free_energy(sol.eta, sol.eta, spec)
        cj = io_joint_capacity_nats(sol.eta, spec)
        assert abs(spec.beta * fe - math.log(2.0 * math.pi * math.e) - cj) <= 1e-8


class TestCoexistence:
    def test_threshold_window(self):
        assert 2.08 <= coexistence_threshold() <= 2.09

    def test_tau_solution_existence(self):
        assert not tau_solution_exists(1.0)
        assert tau_solution_exists(3.0)

    def test_prior_validation(self):
        coexistence_threshold(make_standard("qpsk"))
        with pytest.raises(ValueError):
            coexistence_threshold(make_standard("8psk"))


class TestMonotonicity:
    def test_eta_non_increasing_in_load(self):
        betas = np.linspace(0.1, 4.0, 12)
        mf = [matched_filter_eta(spec_of(b, PROF_10, BPSK, DetectorSpec.matched_filter()))
              for b in betas]
        lm = [lmmse_eta(spec_of(b, PROF_10, GAUSS_R, DetectorSpec.lmmse()))
              for b in betas]
        assert np.all(np.diff(mf) < 0)
        assert np.all(np.diff(lm) < 0)


class TestRouting:
    def test_solve_dispatch(self):
        assert solve(spec_of(1.0, PROF_1, BPSK, DetectorSpec.matched_filter())).eta == 0.5
        sol = solve(spec_of(0.5, PROF_1, GAUSS_R, DetectorSpec.decorrelator()))
        assert sol.eta == 0.5 and sol.xi == math.inf
        sol = solve(spec_of(1.0, PROF_10, GAUSS_R, DetectorSpec.lmmse()))
        assert abs(sol.eta - TSE_HANLY_ROOT) <= 1e-10 and math.isfinite(sol.free_energy)

    def test_jointly_optimal_not_routed(self):
        with pytest.raises(SolverError):
            solve(spec_of(1.0, PROF_1, BPSK, DetectorSpec.jointly_optimal()))

    def test_system_spec_validation(self):
        with pytest.raises(ValueError):
            SystemSpec(1.0, PROF_1, QPSK, DetectorSpec.individually_optimal(), "real")
        with pytest.raises(ValueError):
            SystemSpec(1.0, PROF_1, BPSK,
                       DetectorSpec.custom(BPSK, 1.0), "real")
