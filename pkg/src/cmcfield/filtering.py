"""Sequential Bayesian belief updating across spectral windows."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cmc import CmcParams
from .errors import ConfigError, InvalidBeliefError, InvalidParameterError
from .field import EigenBasis
from .vl import GaussianBelief, InversionReport, NoiseHyper, SpectralModel, SpectralWindow, VLSettings, invert_window


@dataclass
class FilterConfig:
    """Everything the filter needs besides the data and the initial belief.

    ``volatility`` holds the per-mode variance added to the field
    coefficients at each prediction step; ``g7_walk_var`` is the matching
    entry for the g7 log-offset. ``process_noise`` is only used by the
    simulator.
    """

    basis: EigenBasis
    positions: np.ndarray
    freqs: np.ndarray
    dt_window: float = 1.0
    volatility: np.ndarray | None = None
    process_noise: np.ndarray | None = None
    g7_walk_var: float = 0.05
    params: CmcParams = field(default_factory=CmcParams)
    hyper: NoiseHyper = field(default_factory=NoiseHyper)
    vl: VLSettings = field(default_factory=VLSettings)
    paper_literal_prediction: bool = False

    def __post_init__(self):
        m = self.basis.size
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, self.basis.domain.ndim)
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.volatility = _per_mode(self.volatility, m, 0.01, "volatility")
        self.process_noise = _per_mode(self.process_noise, m, 0.0, "process_noise")
        if not self.dt_window > 0:
            raise ConfigError(f"dt_window must be positive, got {self.dt_window}")
        if not self.g7_walk_var >= 0:
            raise ConfigError(f"g7_walk_var must be >= 0, got {self.g7_walk_var}")

    @property
    def n_params(self) -> int:
        return self.basis.size + 1

    @property
    def volatility_matrix(self) -> np.ndarray:
        return np.diag(np.append(self.volatility, self.g7_walk_var))


def _per_mode(value, m, default, name):
    arr = np.full(m, default, dtype=float) if value is None else np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(m, float(arr))
    if arr.shape != (m,):
        raise ConfigError(f"{name} needs one entry per mode ({m}), got shape {arr.shape}")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} entries must be finite and >= 0")
    return arr


@dataclass
class TrajectoryEntry:
    t: float
    prior: GaussianBelief
    report: InversionReport


@dataclass
class BeliefTrajectory:
    entries: list

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def times(self) -> np.ndarray:
        return np.array([e.t for e in self.entries])

    @property
    def posterior_means(self) -> np.ndarray:
        return np.array([e.report.posterior.mean for e in self.entries])

    def total_explained_variance(self, observed) -> float:
        """Pooled explained variance over all windows; ``observed`` is a list of log10 power matrices."""
        obs = np.concatenate([np.ravel(o) for o in observed])
        pred = np.concatenate([e.report.predicted.ravel() for e in self.entries])
        ss_res = np.sum((obs - pred) ** 2)
        ss_tot = np.sum((obs - obs.mean()) ** 2)
        return float(1.0 - ss_res / ss_tot)


def decay_factors(cfg: FilterConfig, dt: float) -> np.ndarray:
    """Diagonal of the prediction map: mode decay, then 1 for the g7 coordinate."""
    return np.append(np.exp(-cfg.basis.decay_rates * dt), 1.0)


def predict_prior(post: GaussianBelief, cfg: FilterConfig, dt: float | None = None) -> GaussianBelief:
    """Push a posterior through the field dynamics to the next window's prior.

    Mean: field coefficients decay by ``exp(-lambda dt)``, the g7 offset
    persists. Covariance: ``D Q D + R``, or ``Q + R`` when
    ``cfg.paper_literal_prediction`` is set.
    """
    dt = cfg.dt_window if dt is None else dt
    if not dt >= 0:
        raise InvalidParameterError(f"window spacing must be >= 0, got {dt}")
    if post.mean.size != cfg.n_params:
        raise InvalidBeliefError(f"belief has {post.mean.size} entries, config needs {cfg.n_params}")
    try:
        np.linalg.cholesky(post.cov)
    except np.linalg.LinAlgError as exc:
        raise InvalidBeliefError("posterior covariance is not positive definite") from exc
    d = decay_factors(cfg, dt)
    mean = d * post.mean
    if cfg.paper_literal_prediction:
        cov = post.cov + cfg.volatility_matrix
    else:
        cov = d[:, None] * post.cov * d[None, :] + cfg.volatility_matrix
    return GaussianBelief(mean, cov)


def run_filter(windows, init: GaussianBelief, cfg: FilterConfig, progress=None) -> BeliefTrajectory:
    """Invert each window in turn, using the propagated previous posterior as its prior.

    Windows that fail to converge are flagged in their report and the filter
    continues from their (regularized) posterior.
    """
    windows = list(windows)
    if not windows:
        raise InvalidParameterError("run_filter needs at least one window")
    times = np.array([w.t for w in windows], dtype=float)
    if np.any(np.diff(times) <= 0):
        raise InvalidParameterError("window timestamps must be strictly increasing")
    model = SpectralModel.from_config(cfg)
    entries = []
    prior = init
    for k, window in enumerate(windows):
        if k > 0:
            prior = predict_prior(entries[-1].report.posterior, cfg, dt=window.t - windows[k - 1].t)
        report = invert_window(window, prior, cfg.hyper, cfg, model=model)
        entries.append(TrajectoryEntry(float(window.t), prior, report))
        if progress is not None:
            progress(k, report)
    return BeliefTrajectory(entries)


def field_movie(traj: BeliefTrajectory, basis: EigenBasis, grid) -> np.ndarray:
    """Posterior-mean field of every window evaluated at ``grid`` points, shape (windows, points)."""
    design = basis.mode_values(grid)
    means = traj.posterior_means
    if means.size == 0:
        return np.zeros((0, design.shape[0]))
    return means[:, : basis.size] @ design.T
