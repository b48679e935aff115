"""Canonical microcircuit (CMC) neural mass, its linearization and steady-state spectrum.

Four populations (granular excitatory ``e``, inhibitory ``i``, superficial
pyramidal ``sp`` and deep pyramidal ``dp``) each obey a damped second-order
equation::

    x'' + 2 x' / T + x / T**2 = (1 / T**2) * sum(+/- gain * s(x_source))

The coupling sum is scaled by ``1 / T**2`` of the receiving population so the
gains are dimensionless. The excitability field ``theta_sp`` multiplies the
gains g5, g6 and g8 through ``exp(theta_sp)``; ``g7`` is scaled by
``exp(g7_log_offset)``.
"""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .errors import ForwardModelError, InvalidParameterError, SingularityError

N_STATES = 8
POPULATIONS = ("e", "i", "sp", "dp")
_E, _I, _SP, _DP = range(4)

# (receiving population, source population, gain index 0-based, sign, field-scaled)
COUPLINGS = (
    (_E, _E, 0, -1.0, False),
    (_E, _SP, 1, -1.0, False),
    (_E, _I, 2, -1.0, False),
    (_I, _I, 3, -1.0, False),
    (_I, _E, 4, +1.0, True),
    (_I, _DP, 5, +1.0, True),
    (_SP, _SP, 6, -1.0, False),
    (_SP, _E, 7, +1.0, True),
    (_DP, _I, 8, -1.0, False),
    (_DP, _DP, 9, -1.0, False),
)
G7 = 6


class UnstableLinearizationWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class CmcParams:
    """Gains, time constants (s), sigmoid slope and input noise SD of one column."""

    g1: float = 1.0
    g2: float = 1.0
    g3: float = 1.0
    g4: float = 1.0
    g5: float = 1.0
    g6: float = 1.0
    g7: float = 1.0
    g8: float = 1.0
    g9: float = 1.0
    g10: float = 1.0
    Te: float = 4e-3
    Ti: float = 16e-3
    Tsp: float = 2e-3
    Tdp: float = 28e-3
    rho: float = 2.0 / 3.0
    sigma_u: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v):
                raise InvalidParameterError(f"{f.name} must be finite, got {v}")
            if v < 0 or (v == 0 and not f.name.startswith("g")):
                raise InvalidParameterError(f"{f.name} must be positive, got {v}")

    @property
    def gains(self) -> np.ndarray:
        return np.array([getattr(self, f"g{k}") for k in range(1, 11)], dtype=float)

    @property
    def time_constants(self) -> np.ndarray:
        return np.array([self.Te, self.Ti, self.Tsp, self.Tdp], dtype=float)

    def with_gains(self, gains) -> "CmcParams":
        return replace(self, **{f"g{k + 1}": float(g) for k, g in enumerate(gains)})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CmcParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidParameterError(f"unknown CMC parameters: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class LinearizedSystem:
    jacobian: np.ndarray
    input_vector: np.ndarray
    output_vector: np.ndarray

    @property
    def is_stable(self) -> bool:
        return bool(np.all(np.linalg.eigvals(self.jacobian).real < 0))


@dataclass(frozen=True)
class PowerSpectrum:
    freqs_hz: np.ndarray
    power: np.ndarray
    warning: str | None = None


def firing_rate(x, rho):
    """Centered logistic ``1 / (1 + exp(-rho x)) - 1/2``; odd, with slope rho/4 at 0."""
    if not rho > 0:
        raise InvalidParameterError(f"sigmoid slope must be positive, got {rho}")
    # tanh form is the same function and avoids overflow for large |x|
    return 0.5 * np.tanh(0.5 * rho * np.asarray(x, dtype=float))


def cmc_rhs(state, params: CmcParams, theta_sp=0.0, g7_log_offset=0.0, drive=0.0):
    """Right-hand side of the nonlinear first-order system (state order e, i, sp, dp pairs)."""
    state = np.asarray(state, dtype=float)
    T = params.time_constants
    g = params.gains
    mult = _gain_multipliers(theta_sp, g7_log_offset)
    pos = state[0::2]
    vel = state[1::2]
    rate = firing_rate(pos, params.rho)
    coupling = np.zeros(4)
    for recv, src, k, sign, _ in COUPLINGS:
        coupling[recv] += sign * mult[k] * g[k] * rate[src]
    acc = (coupling - pos) / T**2 - 2.0 * vel / T
    acc[_E] += drive / T[_E] ** 2
    out = np.empty(N_STATES)
    out[0::2] = vel
    out[1::2] = acc
    return out


def _gain_multipliers(theta_sp, g7_log_offset):
    mult = np.ones(10)
    for _, _, k, _, scaled in COUPLINGS:
        if scaled:
            mult[k] = np.exp(theta_sp)
    mult[G7] = np.exp(g7_log_offset)
    return mult


def _check_finite(name, value):
    if not np.all(np.isfinite(value)):
        raise InvalidParameterError(f"{name} must be finite, got {value}")


def _base_matrices(params: CmcParams):
    """Uncoupled part of the Jacobian plus the per-gain coupling matrices."""
    T = params.time_constants
    slope = params.rho / 4.0
    base = np.zeros((N_STATES, N_STATES))
    for p in range(4):
        base[2 * p, 2 * p + 1] = 1.0
        base[2 * p + 1, 2 * p] = -1.0 / T[p] ** 2
        base[2 * p + 1, 2 * p + 1] = -2.0 / T[p]
    unit = np.zeros((10, N_STATES, N_STATES))
    for recv, src, k, sign, _ in COUPLINGS:
        unit[k, 2 * recv + 1, 2 * src] = sign * slope / T[recv] ** 2
    return base, unit


def _io_vectors(params: CmcParams):
    b = np.zeros(N_STATES)
    b[1] = 1.0 / params.Te**2
    c = np.zeros(N_STATES)
    c[4] = 1.0
    return b, c


def linearize(params: CmcParams, theta_sp: float = 0.0, g7_log_offset: float = 0.0) -> LinearizedSystem:
    """Jacobian at the exact fixed point x* = 0, drive on x_e velocity, readout x_sp."""
    _check_finite("theta_sp", theta_sp)
    _check_finite("g7_log_offset", g7_log_offset)
    base, unit = _base_matrices(params)
    gains = params.gains * _gain_multipliers(theta_sp, g7_log_offset)
    jac = base + np.tensordot(gains, unit, axes=1)
    if not np.all(np.isfinite(jac)):
        raise InvalidParameterError("Jacobian has non-finite entries")
    b, c = _io_vectors(params)
    return LinearizedSystem(jac, b, c)


def _stack_jacobians(params, theta_sp, g7_log_offset):
    """Jacobians for many columns at once, shape (C, 8, 8)."""
    theta_sp = np.atleast_1d(np.asarray(theta_sp, dtype=float))
    base, unit = _base_matrices(params)
    g = params.gains
    scaled = np.array([s for *_, s in COUPLINGS])
    idx = np.array([k for _, _, k, _, _ in COUPLINGS])
    field_part = np.tensordot(g[idx[scaled]], unit[idx[scaled]], axes=1)
    fixed = [k for k in idx[~scaled] if k != G7]
    fixed_part = np.tensordot(g[fixed], unit[fixed], axes=1)
    g7_part = g[G7] * unit[G7]
    jac = (
        base + fixed_part
        + np.exp(theta_sp)[:, None, None] * field_part
        + np.exp(g7_log_offset) * g7_part
    )
    return jac, field_part, g7_part


def _validate_freqs(freqs):
    freqs = np.asarray(freqs, dtype=float)
    if freqs.ndim != 1 or freqs.size == 0:
        raise InvalidParameterError("freqs must be a nonempty vector")
    if np.any(freqs <= 0) or np.any(np.diff(freqs) <= 0):
        raise InvalidParameterError("freqs must be positive and strictly increasing")
    return freqs


def _resolvent_solve(jac, vec, freqs, transpose=False):
    """Solve (i w I - J) x = vec for every (column, frequency); jac has shape (C, 8, 8)."""
    w = 2j * np.pi * freqs
    eye = np.eye(N_STATES)
    mats = w[None, :, None, None] * eye - jac[:, None, :, :]
    if transpose:
        mats = np.swapaxes(mats, -1, -2)
    rhs = np.broadcast_to(vec, mats.shape[:-1])[..., None].astype(complex)
    try:
        sol = np.linalg.solve(mats, rhs)[..., 0]
        if np.all(np.isfinite(sol)):
            return sol
    except np.linalg.LinAlgError:
        pass
    cond = np.linalg.cond(mats).reshape(-1, freqs.size)
    bad = np.argwhere(~np.isfinite(cond) | (cond > 1e15))
    raise SingularityError(freqs[bad[0, 1]] if bad.size else freqs[0])


def transfer_spectrum(sys: LinearizedSystem, params: CmcParams, freqs) -> PowerSpectrum:
    """``sigma_u**2 * |c^T (i 2 pi f I - J)^-1 b|**2`` on the given frequencies."""
    freqs = _validate_freqs(freqs)
    note = None
    if not sys.is_stable:
        note = "linearization is unstable; its steady-state spectrum is not interpretable"
        warnings.warn(note, UnstableLinearizationWarning, stacklevel=2)
    x = _resolvent_solve(sys.jacobian[None], sys.input_vector, freqs)[0]
    h = x @ sys.output_vector
    power = params.sigma_u**2 * np.abs(h) ** 2
    return PowerSpectrum(freqs, power, note)


def forward_model(params: CmcParams, field_values, g7_log_offset, freqs) -> np.ndarray:
    """Per-channel power spectra, shape (channels, freqs).

    Each channel is an independent column linearized at its local
    ``theta_sp``; ``g7`` is shared and scaled by ``exp(g7_log_offset)``.
    """
    return _forward(params, field_values, g7_log_offset, freqs, sensitivities=False)


def forward_model_with_sensitivity(params: CmcParams, field_values, g7_log_offset, freqs):
    """Power spectra plus analytic derivatives of ``ln power``.

    Returns ``(power, dlog_dtheta, dlog_dg7)``, all of shape (channels, freqs).
    ``dlog_dtheta[c]`` is the derivative with respect to channel c's own
    ``theta_sp`` (channels do not interact).
    """
    return _forward(params, field_values, g7_log_offset, freqs, sensitivities=True)


def _forward(params, field_values, g7_log_offset, freqs, sensitivities):
    freqs = _validate_freqs(freqs)
    theta = np.atleast_1d(np.asarray(field_values, dtype=float))
    for ch, v in enumerate(theta):
        if not np.isfinite(v):
            raise ForwardModelError(f"non-finite theta_sp {v}", channel=ch)
    if not np.isfinite(g7_log_offset):
        raise InvalidParameterError(f"g7_log_offset must be finite, got {g7_log_offset}")
    jac, field_part, g7_part = _stack_jacobians(params, theta, g7_log_offset)
    b, c = _io_vectors(params)
    try:
        x = _resolvent_solve(jac, b, freqs)
    except SingularityError:
        for ch in range(theta.size):
            try:
                _resolvent_solve(jac[ch : ch + 1], b, freqs)
            except SingularityError as exc:
                raise ForwardModelError(exc, channel=ch) from exc
        raise
    h = x @ c
    power = params.sigma_u**2 * np.abs(h) ** 2
    if not sensitivities:
        return power
    # d h / d p = c^T R (dJ/dp) R b with R = (i w I - J)^-1; z = R^T c
    z = _resolvent_solve(jac, c, freqs, transpose=True)
    dj_theta = np.exp(theta)[:, None, None] * field_part
    dh_theta = np.einsum("cfi,cij,cfj->cf", z, dj_theta, x)
    dh_g7 = np.exp(g7_log_offset) * np.einsum("cfi,ij,cfj->cf", z, g7_part, x)
    dlog_theta = 2.0 * np.real(dh_theta / h)
    dlog_g7 = 2.0 * np.real(dh_g7 / h)
    return power, dlog_theta, dlog_g7
