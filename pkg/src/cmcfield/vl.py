"""Variational-Laplace inversion of one spectral window.

The parameter vector is ``[c_1, ..., c_M, g7_log_offset]``: the field
coefficients followed by the log-scaling of the g7 gain. Observations are
per-channel power spectra compared in log10 space with a single shared
noise precision ``exp(log_precision)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np

from .cmc import CmcParams, forward_model, forward_model_with_sensitivity
from .errors import ConfigError, ForwardModelError, InvalidBeliefError, InvalidParameterError, NumericalError
from .field import EigenBasis

if TYPE_CHECKING:
    from .filtering import FilterConfig

_LN10 = math.log(10.0)
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise InvalidBeliefError(f"covariance shape {cov.shape} does not match mean of length {mean.size}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InvalidBeliefError("belief has non-finite entries")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-10:
            raise InvalidBeliefError("covariance is not symmetric")
        if np.linalg.eigvalsh(cov).min() <= 0:
            raise InvalidBeliefError("covariance is not positive definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    def entropy(self) -> float:
        _, logdet = np.linalg.slogdet(self.cov)
        return 0.5 * (self.mean.size * (1.0 + _LOG_2PI) + logdet)


@dataclass(frozen=True)
class NoiseHyper:
    """Log precision of log10-power residuals with its Gaussian hyperprior."""

    log_precision: float = 4.0
    prior_mean: float = 4.0
    prior_var: float = 16.0

    def __post_init__(self):
        for name in ("log_precision", "prior_mean", "prior_var"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidParameterError(f"{name} must be finite")
        if self.prior_var <= 0:
            raise InvalidParameterError("prior_var must be positive")


@dataclass(frozen=True)
class VLSettings:
    lm_init: float = 1e-2
    lm_up: float = 10.0
    lm_down: float = 10.0
    fd_step: float = 1e-3
    tol: float = 1e-3
    n_stable: int = 3
    max_iter: int = 64
    jacobian: str = "fd"  # "fd" or "analytic"
    log_precision_bounds: tuple = (-16.0, 16.0)
    regularization: float = 1e-6

    def __post_init__(self):
        if self.jacobian not in ("fd", "analytic"):
            raise ConfigError(f"jacobian must be 'fd' or 'analytic', got {self.jacobian!r}")
        if self.max_iter < 1 or self.n_stable < 1 or self.fd_step <= 0 or self.tol <= 0:
            raise ConfigError("invalid variational Laplace settings")


@dataclass(frozen=True)
class SpectralWindow:
    """One window of data: time, channel positions (C, ndim), freqs (F,), power (C, F)."""

    t: float
    positions: np.ndarray
    freqs: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        power = np.asarray(self.power, dtype=float)
        freqs = np.asarray(self.freqs, dtype=float)
        positions = np.asarray(self.positions, dtype=float)
        if positions.ndim == 1:
            positions = positions[:, None]
        if power.shape != (positions.shape[0], freqs.size):
            raise ConfigError(f"power shape {power.shape} != (channels, freqs) = {(positions.shape[0], freqs.size)}")
        if np.any(~np.isfinite(power)) or np.any(power <= 0):
            raise ConfigError("observed power must be finite and strictly positive")
        object.__setattr__(self, "power", power)
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "positions", positions)

    @property
    def log_power(self) -> np.ndarray:
        return np.log10(self.power)


@dataclass
class InversionReport:
    t: float
    posterior: GaussianBelief
    hyper: NoiseHyper
    free_energy: float
    objective: float
    iterations: int
    converged: bool
    regularized: bool
    predicted: np.ndarray
    explained_variance: float
    objective_trace: list = field(default_factory=list)


class SpectralModel:
    """Maps ``[c; g7_log_offset]`` to log10 power at every (channel, frequency)."""

    def __init__(self, params: CmcParams, basis: EigenBasis, positions, freqs):
        self.params = params
        self.basis = basis
        self.positions = np.asarray(positions, dtype=float).reshape(-1, basis.domain.ndim)
        self.freqs = np.asarray(freqs, dtype=float)
        self.design = basis.mode_values(self.positions)

    @classmethod
    def from_config(cls, cfg: "FilterConfig") -> "SpectralModel":
        return cls(cfg.params, cfg.basis, cfg.positions, cfg.freqs)

    @property
    def n_params(self) -> int:
        return self.basis.size + 1

    def theta(self, p) -> np.ndarray:
        return self.design @ np.asarray(p)[: self.basis.size]

    def log_spectra(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.log10(forward_model(self.params, self.theta(p), p[-1], self.freqs))

    def jacobian(self, p, step: float = 1e-3) -> np.ndarray:
        """Central finite differences, shape (channels * freqs, n_params)."""
        p = np.asarray(p, dtype=float)
        cols = []
        for k in range(p.size):
            dp = np.zeros_like(p)
            dp[k] = step
            cols.append(((self.log_spectra(p + dp) - self.log_spectra(p - dp)) / (2 * step)).ravel())
        return np.stack(cols, axis=1)

    def jacobian_analytic(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        _, dtheta, dg7 = forward_model_with_sensitivity(self.params, self.theta(p), p[-1], self.freqs)
        # channel c, freq f, mode i: dlog/dtheta[c, f] * phi_i(x_c)
        dc = dtheta[:, :, None] * self.design[:, None, :]
        jac = np.concatenate([dc, dg7[:, :, None]], axis=2) / _LN10
        return jac.reshape(-1, p.size)


def _prior_precision(prior: GaussianBelief):
    try:
        chol = np.linalg.cholesky(prior.cov)
    except np.linalg.LinAlgError as exc:
        raise InvalidBeliefError("prior covariance is not positive definite") from exc
    inv_chol = np.linalg.inv(chol)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return inv_chol.T @ inv_chol, logdet


def _objective(resid_sq, n_y, dev, prec, logdet, h, hyper: NoiseHyper):
    k = dev.size
    return (
        -0.5 * math.exp(h) * resid_sq
        + 0.5 * n_y * h
        - 0.5 * n_y * _LOG_2PI
        - 0.5 * float(dev @ prec @ dev)
        - 0.5 * logdet
        - 0.5 * k * _LOG_2PI
        - 0.5 * (h - hyper.prior_mean) ** 2 / hyper.prior_var
        - 0.5 * math.log(2.0 * math.pi * hyper.prior_var)
    )


def _model_for(cfg, model):
    return model if model is not None else SpectralModel.from_config(cfg)


def free_energy(y: SpectralWindow, params, prior: GaussianBelief, hyper: NoiseHyper, cfg=None, model=None) -> float:
    """Log joint density of data, parameters and noise precision at ``params``.

    Gaussian likelihood of log10-spectra with precision ``exp(log_precision)``,
    Gaussian prior on the parameters and on the log precision. Higher is better.
    """
    model = _model_for(cfg, model)
    params = np.asarray(params, dtype=float)
    prec, logdet = _prior_precision(prior)
    resid = y.log_power - model.log_spectra(params)
    dev = params - prior.mean
    return _objective(float(np.sum(resid**2)), resid.size, dev, prec, logdet, hyper.log_precision, hyper)


def free_energy_gradient(y: SpectralWindow, params, prior: GaussianBelief, hyper: NoiseHyper, cfg=None,
                         model=None) -> np.ndarray:
    """Gradient of :func:`free_energy` from the analytic spectral sensitivities."""
    model = _model_for(cfg, model)
    params = np.asarray(params, dtype=float)
    prec, _ = _prior_precision(prior)
    resid = (y.log_power - model.log_spectra(params)).ravel()
    jac = model.jacobian_analytic(params)
    return math.exp(hyper.log_precision) * jac.T @ resid - prec @ (params - prior.mean)


def explained_variance(observed, predicted) -> float:
    observed = np.asarray(observed, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    ss_res = np.sum((observed - predicted) ** 2)
    ss_tot = np.sum((observed - observed.mean()) ** 2)
    return float(1.0 - ss_res / ss_tot)


def _update_log_precision(h, resid_sq, n_y, hyper: NoiseHyper, bounds):
    """One Newton step on the log precision, halved until it does not decrease the objective."""

    def part(hh):
        return -0.5 * math.exp(hh) * resid_sq + 0.5 * n_y * hh - 0.5 * (hh - hyper.prior_mean) ** 2 / hyper.prior_var

    grad = -0.5 * math.exp(h) * resid_sq + 0.5 * n_y - (h - hyper.prior_mean) / hyper.prior_var
    curv = -0.5 * math.exp(h) * resid_sq - 1.0 / hyper.prior_var
    step = -grad / curv
    base = part(h)
    for _ in range(30):
        h_new = min(max(h + step, bounds[0]), bounds[1])
        if part(h_new) >= base:
            return h_new
        step *= 0.5
    return h


def invert_window(y: SpectralWindow, prior: GaussianBelief, hyper: NoiseHyper, cfg: "FilterConfig",
                  model: SpectralModel | None = None) -> InversionReport:
    """Levenberg-Marquardt damped Gauss-Newton ascent on the free energy, then a Laplace posterior."""
    settings = cfg.vl
    model = _model_for(cfg, model)
    if y.positions.shape != model.positions.shape or not np.allclose(y.positions, model.positions):
        raise ConfigError(f"window t={y.t:g}: channel positions do not match the configured electrode layout")
    if y.freqs.shape != model.freqs.shape or not np.allclose(y.freqs, model.freqs):
        raise ConfigError(f"window t={y.t:g}: frequency grid does not match the configuration")
    if prior.mean.size != model.n_params:
        raise InvalidBeliefError(f"prior has {prior.mean.size} entries, model needs {model.n_params}")
    prec, logdet = _prior_precision(prior)
    obs = y.log_power.ravel()
    n_y = obs.size

    def evaluate(p):
        try:
            g = model.log_spectra(p).ravel()
        except ForwardModelError as exc:
            raise ForwardModelError(exc, t=y.t) from exc
        if not np.all(np.isfinite(g)):
            raise ForwardModelError("non-finite model spectrum", t=y.t)
        return g

    def jac_at(p):
        try:
            if settings.jacobian == "analytic":
                return model.jacobian_analytic(p)
            return model.jacobian(p, settings.fd_step)
        except ForwardModelError as exc:
            raise ForwardModelError(exc, t=y.t) from exc

    def objective(p, g, h):
        r = obs - g
        return _objective(float(r @ r), n_y, p - prior.mean, prec, logdet, h, hyper)

    p = prior.mean.copy()
    h = float(np.clip(hyper.log_precision, *settings.log_precision_bounds))
    g = evaluate(p)
    jac = jac_at(p)
    F = objective(p, g, h)
    trace = [F]
    lam = settings.lm_init
    stable = 0
    converged = False
    iterations = 0
    while iterations < settings.max_iter:
        iterations += 1
        F_start = F
        r = obs - g
        h = _update_log_precision(h, float(r @ r), n_y, hyper, settings.log_precision_bounds)
        F = max(F, objective(p, g, h))
        w = math.exp(h)
        curv = w * jac.T @ jac + prec
        grad = w * jac.T @ r - prec @ (p - prior.mean)
        damped = curv + lam * np.diag(np.diag(curv))
        step = np.linalg.solve(damped, grad)
        p_new = p + step
        g_new = evaluate(p_new)
        F_new = objective(p_new, g_new, h)
        if F_new >= F:
            p, g, F = p_new, g_new, F_new
            jac = jac_at(p)
            lam /= settings.lm_down
            trace.append(F)
            stable = stable + 1 if F - F_start < settings.tol else 0
            if stable >= settings.n_stable:
                converged = True
                break
        else:
            lam *= settings.lm_up
            if F > F_start:
                trace.append(F)

    w = math.exp(h)
    curv = w * jac.T @ jac + prec
    curv = 0.5 * (curv + curv.T)
    regularized = False
    try:
        np.linalg.cholesky(curv)
        cov = np.linalg.inv(curv)
    except np.linalg.LinAlgError:
        regularized = True
        converged = False
        cov = np.linalg.pinv(curv)
    cov = 0.5 * (cov + cov.T)
    if regularized or np.linalg.eigvalsh(cov).min() <= 0:
        regularized = True
        converged = False
        cov = cov + settings.regularization * np.eye(cov.shape[0])
    posterior = GaussianBelief(p, cov)
    _, post_logdet = np.linalg.slogdet(cov)
    laplace_f = F + 0.5 * post_logdet + 0.5 * p.size * _LOG_2PI
    if not np.isfinite(laplace_f):
        raise NumericalError(f"window t={y.t:g}: free energy is not finite")
    predicted = g.reshape(y.power.shape)
    return InversionReport(
        t=float(y.t),
        posterior=posterior,
        hyper=replace(hyper, log_precision=h),
        free_energy=float(laplace_f),
        objective=float(F),
        iterations=iterations,
        converged=converged,
        regularized=regularized,
        predicted=predicted,
        explained_variance=explained_variance(y.log_power, predicted),
        objective_trace=[float(v) for v in trace],
    )
