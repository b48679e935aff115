import numpy as np
import pytest
from dataclasses import replace

from cmcfield.errors import ConfigError, InvalidBeliefError
from cmcfield.vl import (
    GaussianBelief,
    NoiseHyper,
    SpectralModel,
    explained_variance,
    free_energy,
    free_energy_gradient,
    invert_window,
)

from conftest import make_window


class TestGaussianBelief:
    def test_rejects_asymmetric(self):
        with pytest.raises(InvalidBeliefError):
            GaussianBelief(np.zeros(2), np.array([[1.0, 0.1], [0.0, 1.0]]))

    def test_rejects_indefinite(self):
        with pytest.raises(InvalidBeliefError):
            GaussianBelief(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_shape(self):
        with pytest.raises(InvalidBeliefError):
            GaussianBelief(np.zeros(3), np.eye(2))


class TestFreeEnergy:
    def test_prior_penalty_zero_at_center(self, small_setup):
        cfg, prior = small_setup
        y = make_window(cfg, prior.mean)
        hyper = NoiseHyper()
        F = free_energy(y, prior.mean, prior, hyper, cfg)
        # with zero residual and params at the prior mean only constants remain
        k = prior.mean.size
        n = y.power.size
        h = hyper.log_precision
        const = (0.5 * n * h - 0.5 * n * np.log(2 * np.pi) - 0.5 * np.linalg.slogdet(prior.cov)[1]
                 - 0.5 * k * np.log(2 * np.pi) - 0.5 * np.log(2 * np.pi * hyper.prior_var))
        assert F == pytest.approx(const, rel=1e-12)

    def test_monotone_in_residual(self, small_setup):
        cfg, prior = small_setup
        p = prior.mean
        clean = make_window(cfg, p)
        values = []
        for scale in (0.3, 0.2, 0.1, 0.0):
            noisy = replace(clean, power=clean.power * 10.0 ** (scale * np.ones_like(clean.power)))
            values.append(free_energy(noisy, p, prior, NoiseHyper(), cfg))
        assert np.all(np.diff(values) > 0)

    def test_non_spd_prior(self, small_setup):
        cfg, prior = small_setup
        y = make_window(cfg, prior.mean)
        bad = object.__new__(GaussianBelief)
        object.__setattr__(bad, "mean", prior.mean)
        object.__setattr__(bad, "cov", -np.eye(prior.mean.size))
        with pytest.raises(InvalidBeliefError):
            free_energy(y, prior.mean, bad, NoiseHyper(), cfg)

    def test_gradient_matches_finite_differences(self, small_setup):
        cfg, prior = small_setup
        rng = np.random.default_rng(11)
        truth = np.array([0.4, -0.2, 0.1, 0.05])
        y = make_window(cfg, truth, noise_sd=0.02, seed=3)
        hyper = NoiseHyper(log_precision=6.0)
        model = SpectralModel.from_config(cfg)
        for _ in range(10):
            p = rng.normal(0.0, 0.4, prior.mean.size)
            grad = free_energy_gradient(y, p, prior, hyper, model=model)
            h = 1e-5
            fd = np.array([
                (free_energy(y, p + h * e, prior, hyper, model=model)
                 - free_energy(y, p - h * e, prior, hyper, model=model)) / (2 * h)
                for e in np.eye(p.size)
            ])
            assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-4

    def test_fd_jacobian_matches_analytic(self, small_setup):
        cfg, _ = small_setup
        model = SpectralModel.from_config(cfg)
        p = np.array([0.3, -0.1, 0.2, 0.1])
        np.testing.assert_allclose(model.jacobian(p, 1e-3), model.jacobian_analytic(p), rtol=1e-4, atol=1e-6)


def test_explained_variance_hand_rolled():
    rng = np.random.default_rng(0)
    obs = rng.normal(size=(3, 7))
    pred = obs + 0.1 * rng.normal(size=obs.shape)
    ss_res = sum((o - p) ** 2 for o, p in zip(obs.ravel(), pred.ravel()))
    mean = sum(obs.ravel()) / obs.size
    ss_tot = sum((o - mean) ** 2 for o in obs.ravel())
    assert explained_variance(obs, pred) == pytest.approx(1 - ss_res / ss_tot, rel=1e-13)
    assert explained_variance(obs, obs) == 1.0


class TestInvertWindow:
    def test_generator_at_prior_mean(self, small_setup):
        cfg, prior = small_setup
        y = make_window(cfg, prior.mean)
        rep = invert_window(y, prior, NoiseHyper(), cfg)
        assert np.max(np.abs(rep.posterior.mean - prior.mean)) < 1e-2
        assert rep.explained_variance > 0.999
        assert rep.converged

    def test_accepted_free_energy_nondecreasing(self, small_setup):
        cfg, prior = small_setup
        y = make_window(cfg, np.array([0.6, -0.3, 0.2, 0.15]), noise_sd=0.03, seed=5)
        rep = invert_window(y, prior, NoiseHyper(), cfg)
        assert len(rep.objective_trace) > 1
        assert np.all(np.diff(rep.objective_trace) >= 0)
        assert rep.objective_trace[-1] == rep.objective

    def test_recovers_first_coefficient(self, small_setup):
        cfg, prior = small_setup
        truth = np.zeros(prior.mean.size)
        truth[0] = 0.5
        y = make_window(cfg, truth, noise_sd=0.05, seed=9)
        rep = invert_window(y, prior, NoiseHyper(), cfg)
        post = rep.posterior
        assert abs(post.mean[0] - 0.5) < 3 * post.sd[0]
        assert rep.converged

    def test_posterior_spd_and_improves_on_prior(self, small_setup):
        cfg, prior = small_setup
        y = make_window(cfg, np.array([-0.4, 0.2, 0.0, -0.1]), noise_sd=0.05, seed=2)
        rep = invert_window(y, prior, NoiseHyper(), cfg)
        cov = rep.posterior.cov
        np.testing.assert_allclose(cov, cov.T, atol=1e-10)
        assert np.linalg.eigvalsh(cov).min() > 0
        hyper = rep.hyper
        assert free_energy(y, rep.posterior.mean, prior, hyper, cfg) >= free_energy(y, prior.mean, prior, hyper, cfg)
        assert rep.explained_variance <= 1.0

    def test_analytic_jacobian_option_agrees(self, small_setup):
        cfg, prior = small_setup
        y = make_window(cfg, np.array([0.3, 0.1, -0.2, 0.05]), noise_sd=0.02, seed=4)
        fd = invert_window(y, prior, NoiseHyper(), cfg)
        cfg_a = replace(cfg, vl=replace(cfg.vl, jacobian="analytic"))
        an = invert_window(y, prior, NoiseHyper(), cfg_a)
        np.testing.assert_allclose(fd.posterior.mean, an.posterior.mean, atol=1e-3)

    def test_bitwise_reproducible(self, small_setup):
        cfg, prior = small_setup
        y = make_window(cfg, np.array([0.3, 0.1, -0.2, 0.05]), noise_sd=0.02, seed=4)
        a = invert_window(y, prior, NoiseHyper(), cfg)
        b = invert_window(y, prior, NoiseHyper(), cfg)
        assert a.posterior.mean.tobytes() == b.posterior.mean.tobytes()
        assert a.posterior.cov.tobytes() == b.posterior.cov.tobytes()
        assert a.free_energy == b.free_energy and a.objective_trace == b.objective_trace

    def test_layout_mismatch(self, small_setup):
        cfg, prior = small_setup
        y = make_window(cfg, prior.mean)
        moved = replace(y, positions=y.positions + 0.05)
        with pytest.raises(ConfigError):
            invert_window(moved, prior, NoiseHyper(), cfg)

    def test_iteration_cap_flags_nonconverged(self, small_setup):
        cfg, prior = small_setup
        cfg1 = replace(cfg, vl=replace(cfg.vl, max_iter=1))
        y = make_window(cfg, np.array([0.8, -0.5, 0.3, 0.2]), noise_sd=0.05, seed=1)
        rep = invert_window(y, prior, NoiseHyper(), cfg1)
        assert rep.iterations == 1
        assert not rep.converged
