"""Glue between datasets on disk and the filter: inversion settings, initial beliefs, metrics."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..cmc import CmcParams
from ..errors import ConfigError
from ..field import DomainSpec, EigenBasis, build_basis
from ..filtering import BeliefTrajectory, FilterConfig, run_filter
from ..vl import GaussianBelief, NoiseHyper, VLSettings
from .simulate import Dataset


@dataclass
class InvertConfig:
    """Inversion settings read from the ``invert --config`` JSON file."""

    prior_coeff_var: float = 1.0
    prior_g7_var: float = 0.25
    volatility: float | list = 0.01
    g7_walk_var: float = 0.02
    n_modes: int | None = None
    alpha: float | None = None
    hyper: dict = field(default_factory=dict)
    vl: dict = field(default_factory=dict)
    cmc: dict | None = None
    paper_literal_prediction: bool = False

    def __post_init__(self):
        if not (self.prior_coeff_var > 0 and self.prior_g7_var > 0):
            raise ConfigError("prior variances must be positive")
        if self.n_modes is not None and self.n_modes < 1:
            raise ConfigError("n_modes must be >= 1")
        if self.alpha is not None and self.alpha < 0:
            raise ConfigError("alpha must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "InvertConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown inversion config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def dataset_basis(ds: Dataset, n_modes=None, alpha=None) -> EigenBasis:
    dom = ds.manifest["domain"]
    domain = DomainSpec(dom["kind"], tuple(dom["lengths"]), dom["alpha"] if alpha is None else alpha)
    return build_basis(domain, ds.manifest["n_modes"] if n_modes is None else n_modes)


def filter_config(ds: Dataset, icfg: InvertConfig) -> FilterConfig:
    basis = dataset_basis(ds, icfg.n_modes, icfg.alpha)
    params = CmcParams.from_dict(ds.manifest.get("cmc", {}) if icfg.cmc is None else icfg.cmc)
    try:
        hyper = NoiseHyper(**icfg.hyper)
        vl = VLSettings(**{k: tuple(v) if isinstance(v, list) else v for k, v in icfg.vl.items()})
    except TypeError as exc:
        raise ConfigError(f"invalid hyper/vl settings: {exc}") from exc
    dt = float(ds.manifest.get("dt_window", np.diff(ds.times).mean() if len(ds.times) > 1 else 1.0))
    return FilterConfig(
        basis=basis,
        positions=ds.positions,
        freqs=ds.freqs,
        dt_window=dt,
        volatility=icfg.volatility,
        g7_walk_var=icfg.g7_walk_var,
        params=params,
        hyper=hyper,
        vl=vl,
        paper_literal_prediction=icfg.paper_literal_prediction,
    )


def initial_belief(cfg: FilterConfig, icfg: InvertConfig) -> GaussianBelief:
    var = np.append(np.full(cfg.basis.size, icfg.prior_coeff_var), icfg.prior_g7_var)
    return GaussianBelief(np.zeros(cfg.n_params), np.diag(var))


def invert_dataset(ds: Dataset, icfg: InvertConfig, progress=None):
    """Returns ``(trajectory, filter_config)``."""
    cfg = filter_config(ds, icfg)
    traj = run_filter(ds.windows(), initial_belief(cfg, icfg), cfg, progress=progress)
    return traj, cfg


def estimated_theta(traj: BeliefTrajectory, basis: EigenBasis, positions) -> np.ndarray:
    """Posterior-mean field at the electrodes, shape (windows, channels)."""
    return traj.posterior_means[:, : basis.size] @ basis.mode_values(positions).T


def pooled_explained_variance(observed, predicted) -> float:
    obs = np.concatenate([np.ravel(o) for o in observed])
    pred = np.concatenate([np.ravel(p) for p in predicted])
    return float(1.0 - np.sum((obs - pred) ** 2) / np.sum((obs - obs.mean()) ** 2))


def field_correlation(truth, estimate) -> float:
    """Pearson correlation over all (window, channel) pairs."""
    return float(np.corrcoef(np.ravel(truth), np.ravel(estimate))[0, 1])


def hotspot_agreement(truth, estimate, grid_index) -> np.ndarray:
    """Per window: do the truth and estimate argmax channels lie within one grid cell (Chebyshev)?"""
    idx = np.asarray(grid_index)
    a = idx[np.argmax(truth, axis=1)]
    b = idx[np.argmax(estimate, axis=1)]
    return np.max(np.abs(a - b), axis=1) <= 1


def grid_index_from_manifest(manifest: dict) -> np.ndarray:
    rows, cols = manifest["layout"]["rows"], manifest["layout"]["cols"]
    return np.array([(i, j) for i in range(rows) for j in range(cols)])
