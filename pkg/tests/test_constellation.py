import math

import numpy as np
import pytest

from lscdma.constellation import (
    Constellation,
    DetectorSpec,
    SnrProfile,
    SIGMA_INFINITE,
    SIGMA_ZERO,
    custom_discrete,
    db_to_linear,
    equal_power_profile,
    make_standard,
    separable_axes,
    two_group_profile,
)

STANDARD = ["bpsk", "qpsk", "8psk", "16qam", "gaussian-real", "gaussian-complex"]


class TestMakeStandard:
    def test_bpsk_points(self):
        c = make_standard("bpsk")
        assert c.points == (1.0, -1.0)
        assert c.probs == (0.5, 0.5)

    def test_qpsk_geometry(self):
        c = make_standard("qpsk")
        pts = c.points_array()
        assert pts.shape == (4, 2)
        a = 1.0 / math.sqrt(2.0)
        assert np.allclose(np.abs(pts), a)
        assert c.probs == (0.25,) * 4
        assert abs(c.probs_array() @ (pts**2).sum(axis=1) - 1.0) < 1e-12
        assert np.max(np.abs(c.probs_array() @ pts)) < 1e-12

    def test_8psk_unit_circle(self):
        c = make_standard("8psk")
        pts = c.points_array()
        assert np.allclose((pts**2).sum(axis=1), 1.0)
        assert abs(sum(c.probs) - 1.0) < 1e-15

    @pytest.mark.parametrize("name", STANDARD)
    def test_invariants(self, name):
        c = make_standard(name)
        if c.is_gaussian:
            assert c.points == () and c.probs == ()
            return
        p = c.probs_array()
        pts = c.points_array()
        assert abs(p.sum() - 1.0) <= 1e-12
        mean = p @ pts
        assert np.max(np.abs(np.atleast_1d(mean))) <= 1e-12
        power = p @ (pts**2) if pts.ndim == 1 else p @ (pts**2).sum(axis=1)
        assert abs(power - 1.0) <= 1e-12

    @pytest.mark.parametrize("name", STANDARD)
    def test_deterministic_idempotent(self, name):
        assert make_standard(name) == make_standard(name)

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            make_standard("64apsk")


class TestConstellationValidation:
    def test_bad_prob_sum(self):
        with pytest.raises(ValueError):
            Constellation("discrete-real", (1.0, -1.0), (0.6, 0.6))

    def test_nonzero_mean(self):
        with pytest.raises(ValueError):
            Constellation("discrete-real", (1.5, -0.5), (0.5, 0.5))

    def test_negative_prob(self):
        with pytest.raises(ValueError):
            Constellation("discrete-real", (1.0, -1.0), (1.5, -0.5))

    def test_gaussian_with_points(self):
        with pytest.raises(ValueError):
            Constellation("gaussian-real", (1.0,), (1.0,))

    def test_custom_renormalizes_with_warning(self):
        with pytest.warns(UserWarning):
            c = custom_discrete("discrete-real", (0.0, 2.0), (0.5, 0.5))
        assert abs(c.probs_array() @ c.points_array()) <= 1e-12
        assert abs(c.probs_array() @ c.points_array() ** 2 - 1.0) <= 1e-12

    def test_custom_no_warning_when_normalized(self):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("error")
            custom_discrete("discrete-real", (1.0, -1.0), (0.5, 0.5))

    def test_json_round_trip(self):
        for name in STANDARD:
            c = make_standard(name)
            assert Constellation.from_json_dict(c.to_json_dict()) == c


class TestSnrProfile:
    def test_two_group_zero_gap(self):
        prof = two_group_profile(0.0, 0.0)
        assert np.allclose(prof.snrs(), 1.0)
        assert abs(prof.mean_snr() - 1.0) <= 1e-12

    def test_two_group_derived(self):
        # atoms (s, 10 s) with mean 10^0.2 gives s = 2 * 10^0.2 / 11
        prof = two_group_profile(2.0, 10.0)
        s = 2.0 * 10.0**0.2 / 11.0
        assert abs(prof.snrs()[0] - s) <= 1e-12
        assert abs(prof.snrs()[1] - 10.0 * s) <= 1e-9
        assert np.allclose(prof.weights(), 0.5)

    @pytest.mark.parametrize("mean_db,gap_db", [(0, 0), (2, 10), (10, 3), (-5, 7)])
    def test_mean_constraint(self, mean_db, gap_db):
        prof = two_group_profile(mean_db, gap_db)
        assert abs(prof.mean_snr() - db_to_linear(mean_db)) <= 1e-12

    def test_negative_gap_rejected(self):
        with pytest.raises(ValueError):
            two_group_profile(0.0, -1.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            SnrProfile(((1.0, 0.5), (2.0, 0.6)))
        with pytest.raises(ValueError):
            SnrProfile(((0.0, 1.0),))

    def test_json_round_trip(self):
        prof = two_group_profile(2.0, 10.0)
        again = SnrProfile.from_json_dict(prof.to_json_dict())
        assert np.allclose(again.snrs(), prof.snrs())
        assert np.allclose(again.weights(), prof.weights())

    def test_db_conversion_is_plain_power(self):
        assert db_to_linear(10.0) == 10.0
        assert db_to_linear(0.0) == 1.0
        assert equal_power_profile(3.0).snrs()[0] == 10.0**0.3


class TestDetectorSpec:
    def test_named_presets(self):
        assert DetectorSpec.matched_filter().sigma == SIGMA_INFINITE
        assert DetectorSpec.lmmse().sigma == 1.0
        assert DetectorSpec.decorrelator().sigma == SIGMA_ZERO
        assert DetectorSpec.individually_optimal().sigma == 1.0
        assert DetectorSpec.jointly_optimal().sigma == SIGMA_ZERO

    def test_contradictory_combinations_rejected(self):
        g = make_standard("gaussian-real")
        with pytest.raises(ValueError):
            DetectorSpec(g, 2.0, "lmmse")  # lmmse demands sigma = 1
        with pytest.raises(ValueError):
            DetectorSpec(make_standard("bpsk"), SIGMA_ZERO, "decorrelator")
        with pytest.raises(ValueError):
            DetectorSpec(g, 1.0, "matched-filter")
        with pytest.raises(ValueError):
            DetectorSpec.custom(g, 1.0)  # that is the lmmse preset
        with pytest.raises(ValueError):
            DetectorSpec.custom(make_standard("bpsk"), 0.0)

    def test_resolved_prior_mismatch(self):
        det = DetectorSpec.individually_optimal(make_standard("bpsk"))
        with pytest.raises(ValueError):
            det.resolved_prior(make_standard("qpsk"))
        assert det.resolved_prior(make_standard("bpsk")) == make_standard("bpsk")

    def test_custom_finite_sigma(self):
        det = DetectorSpec.custom(make_standard("bpsk"), 2.0)
        assert det.sigma == 2.0 and not det.is_limit


class TestSeparableAxes:
    def test_qpsk_and_qam_factor(self):
        for name in ("qpsk", "16qam"):
            sep = separable_axes(make_standard(name))
            assert sep is not None
            (a0, v0), (a1, v1) = sep
            assert abs(v0 + v1 - 1.0) <= 1e-12
            for ax in (a0, a1):
                p = ax.probs_array()
                pts = ax.points_array()
                assert abs(p @ pts) <= 1e-12
                assert abs(p @ pts**2 - 1.0) <= 1e-9

    def test_8psk_does_not_factor(self):
        assert separable_axes(make_standard("8psk")) is None

    def test_real_kinds_do_not_factor(self):
        assert separable_axes(make_standard("bpsk")) is None
        assert separable_axes(make_standard("gaussian-complex")) is None
