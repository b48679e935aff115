"""Synthetic windowed spectra from a known excitability-field trajectory."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..cmc import CmcParams, forward_model
from ..errors import ConfigError
from ..field import BoundaryDrive, DomainSpec, build_basis, evaluate_field, project_initial, solve_heat_timedep

SCENARIOS = ("bump", "boundary")


@dataclass
class SimConfig:
    """Simulation settings; defaults give the desk-scale 4 x 5 grid scene."""

    rows: int = 4
    cols: int = 5
    spacing: float = 1.0
    margin: float = 0.2
    n_modes: int = 4
    alpha: float = 0.1
    n_windows: int = 20
    dt_window: float = 1.0
    f_min: float = 1.0
    f_max: float = 60.0
    f_step: float = 1.0
    n_average: int = 16
    obs_noise_sd: float = 0.1
    process_noise_var: float = 1e-4
    g7_sd: float = 0.1
    scenario: str = "bump"
    amp_start: float = 0.3
    amp_peak: float = 1.2
    amp_end: float = 0.3
    peak_fraction: float = 0.75
    bump_width: float = 1.0
    bump_start: tuple = (0.2, 0.25)
    bump_end: tuple = (0.8, 0.75)
    seed: int = 0
    cmc: dict = field(default_factory=dict)

    def __post_init__(self):
        errors = []
        if self.rows < 1 or self.cols < 2:
            errors.append("electrode layout needs rows >= 1 and cols >= 2")
        if not self.spacing > 0:
            errors.append("spacing must be positive")
        if not self.margin > 0:
            errors.append("margin must be positive so electrodes sit strictly inside the domain")
        if self.n_modes < 1:
            errors.append("n_modes must be >= 1")
        if self.alpha < 0:
            errors.append("alpha must be >= 0")
        if self.n_windows < 1:
            errors.append("n_windows must be >= 1")
        if not self.dt_window > 0:
            errors.append("dt_window must be positive")
        if not (0 < self.f_min < self.f_max and self.f_step > 0):
            errors.append("frequency grid needs 0 < f_min < f_max and f_step > 0")
        if self.n_average < 1:
            errors.append("n_average must be >= 1")
        for name in ("obs_noise_sd", "process_noise_var", "g7_sd"):
            if getattr(self, name) < 0:
                errors.append(f"{name} must be >= 0")
        if self.scenario not in SCENARIOS:
            errors.append(f"scenario must be one of {SCENARIOS}")
        if self.scenario == "boundary" and self.rows != 1:
            errors.append("the boundary-driven scenario is one-dimensional (rows = 1)")
        if not 0 < self.peak_fraction <= 1:
            errors.append("peak_fraction must be in (0, 1]")
        if self.seed is None or int(self.seed) != self.seed or self.seed < 0:
            errors.append("seed is mandatory and must be a nonnegative integer")
        try:
            CmcParams.from_dict(self.cmc)
        except ConfigError as exc:
            errors.append(str(exc))
        if errors:
            raise ConfigError("invalid simulation config: " + "; ".join(errors))
        self.bump_start = tuple(float(v) for v in self.bump_start)
        self.bump_end = tuple(float(v) for v in self.bump_end)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bump_start"] = list(self.bump_start)
        d["bump_end"] = list(self.bump_end)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown simulation config keys: {sorted(unknown)}")
        return cls(**d)

    @property
    def freqs(self) -> np.ndarray:
        n = int(round((self.f_max - self.f_min) / self.f_step)) + 1
        return self.f_min + self.f_step * np.arange(n)

    @property
    def times(self) -> np.ndarray:
        return self.dt_window * np.arange(self.n_windows)

    @property
    def cmc_params(self) -> CmcParams:
        return CmcParams.from_dict(self.cmc)


@dataclass
class Layout:
    rows: int
    cols: int
    spacing: float
    positions: np.ndarray  # (C, ndim), row-major over (row, col)
    domain: DomainSpec

    @property
    def channel_ids(self) -> list:
        if self.rows == 1:
            return [f"c{j}" for j in range(self.cols)]
        return [f"r{i}c{j}" for i in range(self.rows) for j in range(self.cols)]

    @property
    def grid_index(self) -> np.ndarray:
        """(row, col) of every channel."""
        return np.array([(i, j) for i in range(self.rows) for j in range(self.cols)])


def electrode_layout(rows, cols, spacing, margin, alpha) -> Layout:
    """Regular grid inside a Dirichlet domain padded by ``margin`` times the array extent per side."""
    width = (cols - 1) * spacing
    if rows == 1:
        pad = margin * width
        x = pad + spacing * np.arange(cols)
        return Layout(rows, cols, spacing, x[:, None], DomainSpec.interval(width + 2 * pad, alpha))
    height = (rows - 1) * spacing
    pad_x, pad_y = margin * width, margin * height
    pos = np.array([(pad_x + j * spacing, pad_y + i * spacing) for i in range(rows) for j in range(cols)])
    return Layout(rows, cols, spacing, pos, DomainSpec.rectangle(width + 2 * pad_x, height + 2 * pad_y, alpha))


def layout_for(cfg: SimConfig) -> Layout:
    return electrode_layout(cfg.rows, cfg.cols, cfg.spacing, cfg.margin, cfg.alpha)


def amplitude_profile(cfg: SimConfig) -> np.ndarray:
    """Piecewise-linear rise to ``amp_peak`` at ``peak_fraction`` of the run, then collapse."""
    s = np.linspace(0.0, 1.0, cfg.n_windows) if cfg.n_windows > 1 else np.zeros(1)
    return np.interp(s, [0.0, cfg.peak_fraction, 1.0], [cfg.amp_start, cfg.amp_peak, cfg.amp_end])


def bump_centers(cfg: SimConfig, layout: Layout) -> np.ndarray:
    """Bump centre per window; ``bump_start``/``bump_end`` are fractions of the electrode array extent."""
    lo = layout.positions.min(axis=0)
    hi = layout.positions.max(axis=0)
    ndim = layout.positions.shape[1]
    start = lo + np.asarray(cfg.bump_start[:ndim]) * (hi - lo)
    end = lo + np.asarray(cfg.bump_end[:ndim]) * (hi - lo)
    s = np.linspace(0.0, 1.0, cfg.n_windows)[:, None] if cfg.n_windows > 1 else np.zeros((1, 1))
    return start + s * (end - start)


@dataclass
class Dataset:
    manifest: dict
    freqs: np.ndarray
    positions: np.ndarray
    channel_ids: list
    times: np.ndarray
    power: np.ndarray  # (windows, channels, freqs)
    truth_theta: np.ndarray | None = None  # (windows, channels)
    truth_coeffs: np.ndarray | None = None  # (windows, modes)
    truth_g7: np.ndarray | None = None  # (windows,)

    @property
    def has_truth(self) -> bool:
        return self.truth_theta is not None

    def windows(self):
        from ..vl import SpectralWindow

        return [SpectralWindow(t, self.positions, self.freqs, p) for t, p in zip(self.times, self.power)]


def _bump_coefficients(cfg, layout, basis, rng):
    amp = amplitude_profile(cfg)
    centers = bump_centers(cfg, layout)
    targets = []
    for a, c in zip(amp, centers):
        def bump(*xs, a=a, c=c):
            r2 = sum((x - ci) ** 2 for x, ci in zip(xs, c))
            return a * np.exp(-0.5 * r2 / cfg.bump_width**2)

        targets.append(project_initial(bump, basis).c)
    targets = np.array(targets)
    decay = np.exp(-basis.decay_rates * cfg.dt_window)
    q_sd = np.sqrt(cfg.process_noise_var)
    coeffs = np.empty_like(targets)
    for k in range(cfg.n_windows):
        noise = q_sd * rng.standard_normal(basis.size)
        if k == 0:
            coeffs[k] = targets[0] + noise
        else:
            # decayed state plus the drive that carries the mean onto the next target
            drive = targets[k] - targets[k - 1] * decay
            coeffs[k] = coeffs[k - 1] * decay + drive + noise
    return coeffs


def _boundary_theta(cfg, layout):
    """1D field driven from the left boundary by the amplitude profile, zero initial state."""
    times = cfg.times
    amp = amplitude_profile(cfg)

    def phi0(t):
        return float(np.interp(t, times, amp)) if cfg.n_windows > 1 else float(amp[0]) * min(t, 1.0)

    drive = BoundaryDrive(phi0, lambda t: 0.0, lambda x: np.zeros_like(x))
    basis = build_basis(layout.domain, 64)
    x_elec = layout.positions[:, 0]
    theta = []
    for t in times:
        x, u = solve_heat_timedep(layout.domain, drive, basis, float(t), n_points=513)
        theta.append(np.interp(x_elec, x, u))
    return np.array(theta)


def simulate(cfg: SimConfig) -> Dataset:
    from .io import DATASET_FORMAT, DATASET_VERSION

    rng = np.random.default_rng(int(cfg.seed))
    layout = layout_for(cfg)
    basis = build_basis(layout.domain, cfg.n_modes)
    params = cfg.cmc_params
    freqs = cfg.freqs
    coeffs = None
    if cfg.scenario == "bump":
        coeffs = _bump_coefficients(cfg, layout, basis, rng)
        theta = np.array([evaluate_field(c, basis, layout.positions) for c in coeffs])
    else:
        theta = _boundary_theta(cfg, layout)
    g7 = cfg.g7_sd * rng.standard_normal(cfg.n_windows)
    noise_sd = cfg.obs_noise_sd / np.sqrt(cfg.n_average)
    power = np.empty((cfg.n_windows, layout.positions.shape[0], freqs.size))
    for k in range(cfg.n_windows):
        clean = forward_model(params, theta[k], g7[k], freqs)
        power[k] = clean * 10.0 ** (noise_sd * rng.standard_normal(clean.shape))
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "layout": {
            "rows": layout.rows,
            "cols": layout.cols,
            "spacing": layout.spacing,
            "channel_ids": layout.channel_ids,
            "positions": layout.positions.tolist(),
        },
        "domain": {"kind": layout.domain.kind, "lengths": list(layout.domain.lengths), "alpha": layout.domain.alpha},
        "n_modes": cfg.n_modes,
        "dt_window": cfg.dt_window,
        "freqs": freqs.tolist(),
        "times": cfg.times.tolist(),
        "cmc": params.to_dict(),
        "config": cfg.to_dict(),
        "has_truth": True,
    }
    return Dataset(
        manifest=manifest,
        freqs=freqs,
        positions=layout.positions,
        channel_ids=layout.channel_ids,
        times=cfg.times,
        power=power,
        truth_theta=theta,
        truth_coeffs=coeffs,
        truth_g7=g7,
    )
