import warnings

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from cmcfield.cmc import (
    CmcParams,
    UnstableLinearizationWarning,
    cmc_rhs,
    firing_rate,
    forward_model,
    forward_model_with_sensitivity,
    linearize,
    transfer_spectrum,
)
from cmcfield.errors import ForwardModelError, InvalidParameterError

# 1/(1 + exp(-2/3)) - 1/2 evaluated with mpmath at 30 digits
FIRING_RATE_AT_1 = 0.160756368765817172359703111213


class TestFiringRate:
    def test_zero(self):
        assert firing_rate(0.0, 2 / 3) == 0.0

    def test_saturation(self):
        assert firing_rate(1e6, 2 / 3) == pytest.approx(0.5)
        assert firing_rate(-1e6, 2 / 3) == pytest.approx(-0.5)

    def test_value_at_one(self):
        assert firing_rate(1.0, 2 / 3) == pytest.approx(FIRING_RATE_AT_1, abs=1e-15)

    def test_slope_at_zero(self):
        h = 1e-6
        for rho in (0.3, 2 / 3, 2.0):
            slope = (firing_rate(h, rho) - firing_rate(-h, rho)) / (2 * h)
            assert slope == pytest.approx(rho / 4, rel=1e-9)

    @given(st.floats(-50, 50), st.floats(0.01, 10))
    def test_odd(self, x, rho):
        assert firing_rate(-x, rho) == pytest.approx(-firing_rate(x, rho), abs=1e-15)

    def test_bad_slope(self):
        with pytest.raises(InvalidParameterError):
            firing_rate(0.0, 0.0)


class TestParams:
    def test_rejects_nonpositive_time_constant(self):
        with pytest.raises(InvalidParameterError):
            CmcParams(Te=0.0)

    def test_rejects_nonfinite(self):
        with pytest.raises(InvalidParameterError):
            CmcParams(g3=float("nan"))

    def test_rejects_negative_gain(self):
        with pytest.raises(InvalidParameterError):
            CmcParams(g1=-1.0)

    def test_dict_round_trip(self, params):
        assert CmcParams.from_dict(params.to_dict()) == params


class TestLinearize:
    def test_fixed_point_is_exact(self, params):
        for theta in (0.0, 0.7, -1.3):
            assert np.all(cmc_rhs(np.zeros(8), params, theta, 0.4) == 0.0)

    def test_theta_zero_uses_gains_unchanged(self, params):
        custom = params.with_gains([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0])
        jac = linearize(custom, 0.0).jacobian
        slope = custom.rho / 4
        # g8 drives sp from e; g5 drives i from e; g6 drives i from dp
        assert jac[5, 0] == pytest.approx(8.0 * slope / custom.Tsp**2)
        assert jac[3, 0] == pytest.approx(5.0 * slope / custom.Ti**2)
        assert jac[3, 6] == pytest.approx(6.0 * slope / custom.Ti**2)

    def test_theta_scales_three_gains(self, params):
        base = linearize(params, 0.0).jacobian
        up = linearize(params, 0.5).jacobian
        changed = np.argwhere(base != up)
        assert sorted(map(tuple, changed)) == [(3, 0), (3, 6), (5, 0)]
        for i, j in changed:
            assert up[i, j] == pytest.approx(np.exp(0.5) * base[i, j])

    def test_zero_gains_block_diagonal(self):
        p = CmcParams().with_gains(np.zeros(10))
        jac = linearize(p).jacobian
        expected = scipy.linalg.block_diag(*[np.array([[0.0, 1.0], [-1 / T**2, -2 / T]]) for T in p.time_constants])
        np.testing.assert_array_equal(jac, expected)

    def test_default_is_stable_independent_eigensolver(self, params):
        jac = linearize(params).jacobian
        eig = scipy.linalg.eigvals(jac)
        assert np.max(eig.real) < 0
        # characteristic-polynomial roots as a second, independent route
        roots = np.roots(np.poly(jac))
        assert np.max(roots.real) < 0

    def test_io_vectors(self, params):
        sys = linearize(params)
        assert np.flatnonzero(sys.input_vector).tolist() == [1]
        assert np.flatnonzero(sys.output_vector).tolist() == [4]
        assert np.all(np.isfinite(sys.jacobian))

    def test_nonfinite_theta(self, params):
        with pytest.raises(InvalidParameterError):
            linearize(params, float("inf"))

    def test_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            gains = rng.uniform(0.2, 3.0, 10)
            T = rng.uniform(2e-3, 30e-3, 4)
            p = CmcParams(Te=T[0], Ti=T[1], Tsp=T[2], Tdp=T[3], rho=rng.uniform(0.3, 2.0)).with_gains(gains)
            theta, g7 = rng.normal(0, 0.5), rng.normal(0, 0.3)
            jac = linearize(p, theta, g7).jacobian
            h = 1e-6
            fd = np.empty((8, 8))
            for k in range(8):
                e = np.zeros(8)
                e[k] = h
                fd[:, k] = (cmc_rhs(e, p, theta, g7) - cmc_rhs(-e, p, theta, g7)) / (2 * h)
            nz = np.abs(jac) > 0
            np.testing.assert_allclose(fd[nz], jac[nz], rtol=1e-6)
            assert np.all(np.abs(fd[~nz]) < 1e-6 * np.abs(jac).max())


class TestTransferSpectrum:
    def test_sigma_scaling(self, params, freqs):
        from dataclasses import replace

        s1 = transfer_spectrum(linearize(params), params, freqs).power
        p2 = replace(params, sigma_u=2.0)
        s2 = transfer_spectrum(linearize(p2), p2, freqs).power
        np.testing.assert_allclose(s2, 4.0 * s1, rtol=1e-14)

    def test_nonnegative_finite(self, params, freqs):
        s = transfer_spectrum(linearize(params), params, freqs)
        assert np.all(np.isfinite(s.power)) and np.all(s.power >= 0)
        assert s.warning is None

    def test_matches_direct_resolvent(self, params, freqs):
        sys = linearize(params)
        direct = [abs(sys.output_vector @ np.linalg.solve(2j * np.pi * f * np.eye(8) - sys.jacobian,
                                                          sys.input_vector)) ** 2 for f in freqs]
        np.testing.assert_allclose(transfer_spectrum(sys, params, freqs).power, direct, rtol=1e-12)

    def test_bad_freqs(self, params):
        with pytest.raises(InvalidParameterError):
            transfer_spectrum(linearize(params), params, [])
        with pytest.raises(InvalidParameterError):
            transfer_spectrum(linearize(params), params, [5.0, 2.0])

    def test_unstable_warns(self, params, freqs):
        p = params.with_gains([1, 1, 1, 1, 1, 1, 1, 400, 1, 1])
        sys = linearize(p, 0.0)
        sys = type(sys)(sys.jacobian + 500.0 * np.eye(8), sys.input_vector, sys.output_vector)
        with pytest.warns(UnstableLinearizationWarning):
            s = transfer_spectrum(sys, p, freqs)
        assert s.warning is not None

    def test_singular_frequency_named(self, params):
        from cmcfield.errors import SingularityError
        from cmcfield.cmc import LinearizedSystem

        # pure oscillator at 10 Hz: (i w I - J) singular exactly at f = 10
        w = 2 * np.pi * 10.0
        jac = np.zeros((8, 8))
        jac[0, 1], jac[1, 0] = 1.0, -w**2
        for k in range(2, 8):
            jac[k, k] = -1.0
        sys = LinearizedSystem(jac, np.eye(8)[1], np.eye(8)[0])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnstableLinearizationWarning)
            with pytest.raises(SingularityError) as info:
                transfer_spectrum(sys, params, [5.0, 10.0, 15.0])
        assert info.value.freq_hz == 10.0

    def test_theta_sensitivity_nonzero(self, params, freqs):
        s0 = forward_model(params, [0.0], 0.0, freqs)[0]
        s1 = forward_model(params, [0.2], 0.0, freqs)[0]
        assert np.linalg.norm(s1 - s0) > 0
        assert np.max(s1) != np.max(s0)


class TestForwardModel:
    def test_equal_field_equal_spectra(self, params, freqs):
        out = forward_model(params, [0.3] * 5, 0.1, freqs)
        for row in out[1:]:
            np.testing.assert_array_equal(row, out[0])

    def test_identity_parameterization(self, params, freqs):
        single = transfer_spectrum(linearize(params), params, freqs).power
        out = forward_model(params, np.zeros(4), 0.0, freqs)
        np.testing.assert_allclose(out, np.tile(single, (4, 1)), rtol=1e-13)

    def test_channel_independence(self, params, freqs):
        base = forward_model(params, [0.0, 0.1, -0.2], 0.0, freqs)
        bumped = forward_model(params, [0.0, 0.6, -0.2], 0.0, freqs)
        np.testing.assert_array_equal(base[[0, 2]], bumped[[0, 2]])
        assert not np.allclose(base[1], bumped[1])

    def test_g7_offset(self, params, freqs):
        from dataclasses import replace

        p7 = replace(params, g7=params.g7 * np.exp(0.4))
        np.testing.assert_allclose(forward_model(params, [0.2], 0.4, freqs), forward_model(p7, [0.2], 0.0, freqs),
                                   rtol=1e-12)

    def test_nonfinite_field_tagged(self, params, freqs):
        with pytest.raises(ForwardModelError) as info:
            forward_model(params, [0.0, float("nan")], 0.0, freqs)
        assert info.value.channel == 1

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(-1.5, 1.5), min_size=1, max_size=4), st.floats(-0.5, 0.5))
    def test_sensitivity_matches_finite_differences(self, theta, g7):
        params = CmcParams()
        freqs = np.arange(1.0, 61.0, 7.0)
        _, d_theta, d_g7 = forward_model_with_sensitivity(params, theta, g7, freqs)
        h = 1e-5
        th = np.asarray(theta)
        fd_theta = (np.log(forward_model(params, th + h, g7, freqs))
                    - np.log(forward_model(params, th - h, g7, freqs))) / (2 * h)
        fd_g7 = (np.log(forward_model(params, th, g7 + h, freqs))
                 - np.log(forward_model(params, th, g7 - h, freqs))) / (2 * h)
        np.testing.assert_allclose(d_theta, fd_theta, rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(d_g7, fd_g7, rtol=1e-6, atol=1e-8)


@pytest.mark.slow
def test_spectrum_matches_time_domain_simulation():
    from cmcfield.harness.oracles import compare_spectrum

    cmp = compare_spectrum()
    assert cmp.peak_rel_error <= 0.10
