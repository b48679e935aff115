"""Truncated sine-eigenfunction representation of the slow excitability field.

The field obeys ``theta_t = alpha**2 * laplacian(theta)`` with Dirichlet
boundaries on an interval ``[0, L]`` or a rectangle ``[0, Lx] x [0, Ly]``.
Mode ``i`` has wavenumbers ``k = n pi / L`` per axis and decays at rate
``alpha**2 * sum(k**2)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from .errors import InvalidParameterError, NumericalError, OutOfDomainError, UnsupportedDomainError

_QUAD_PANELS = 512


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    lengths: tuple
    alpha: float = 1.0

    def __post_init__(self):
        expected = {"interval": 1, "rectangle": 2}
        if self.kind not in expected:
            raise InvalidParameterError(f"unknown domain kind {self.kind!r}")
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        if len(lengths) != expected[self.kind]:
            raise InvalidParameterError(f"{self.kind} needs {expected[self.kind]} length(s), got {lengths}")
        if any(not (v > 0 and np.isfinite(v)) for v in lengths):
            raise InvalidParameterError(f"domain lengths must be positive, got {lengths}")
        if not (self.alpha >= 0 and np.isfinite(self.alpha)):
            raise InvalidParameterError(f"alpha must be >= 0, got {self.alpha}")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def ndim(self) -> int:
        return len(self.lengths)

    @classmethod
    def interval(cls, length: float, alpha: float = 1.0) -> "DomainSpec":
        return cls("interval", (length,), alpha)

    @classmethod
    def rectangle(cls, lx: float, ly: float, alpha: float = 1.0) -> "DomainSpec":
        return cls("rectangle", (lx, ly), alpha)

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.ndim)
        L = np.asarray(self.lengths)
        return np.all((pts >= -tol) & (pts <= L + tol), axis=1)


@dataclass(frozen=True)
class EigenBasis:
    """Dirichlet sine modes sorted by decay rate (ties by lexicographic index)."""

    domain: DomainSpec
    indices: np.ndarray  # (M, ndim) integer mode numbers
    wavenumbers: np.ndarray  # (M, ndim)
    decay_rates: np.ndarray  # (M,)

    @property
    def size(self) -> int:
        return len(self.decay_rates)

    def mode_values(self, points) -> np.ndarray:
        """Design matrix ``phi[p, i] = phi_i(points[p])`` of shape (P, M)."""
        pts = _as_points(points, self.domain)
        out = np.ones((pts.shape[0], self.size))
        for axis in range(self.domain.ndim):
            out *= np.sin(pts[:, axis, None] * self.wavenumbers[None, :, axis])
        return out

    def permuted(self, order) -> "EigenBasis":
        order = np.asarray(order)
        return EigenBasis(self.domain, self.indices[order], self.wavenumbers[order], self.decay_rates[order])


@dataclass(frozen=True)
class FieldCoeffs:
    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 1 or not np.all(np.isfinite(c)):
            raise InvalidParameterError("field coefficients must be a finite vector")
        object.__setattr__(self, "c", c)


@dataclass(frozen=True)
class BoundaryDrive:
    """Time-dependent Dirichlet values at x = 0 and x = L and the initial condition."""

    phi0: Callable
    phi1: Callable
    f0: Callable


def _as_points(points, domain: DomainSpec) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, domain.ndim)
    inside = domain.contains(pts)
    if not np.all(inside):
        raise OutOfDomainError(pts[np.argmin(inside)])
    return pts


def build_basis(domain: DomainSpec, n_modes: int) -> EigenBasis:
    if int(n_modes) != n_modes or n_modes < 1:
        raise InvalidParameterError(f"n_modes must be a positive integer, got {n_modes}")
    n_modes = int(n_modes)
    idx = np.array(list(itertools.product(range(1, n_modes + 1), repeat=domain.ndim)), dtype=int)
    k = idx * np.pi / np.asarray(domain.lengths)
    decay = domain.alpha**2 * np.sum(k**2, axis=1)
    # lexsort: last key is primary
    order = np.lexsort(tuple(idx[:, a] for a in reversed(range(domain.ndim))) + (decay,))
    return EigenBasis(domain, idx[order], k[order], decay[order])


def evaluate_field(coeffs, basis: EigenBasis, points) -> np.ndarray:
    c = coeffs.c if isinstance(coeffs, FieldCoeffs) else np.asarray(coeffs, dtype=float)
    if c.shape[-1] != basis.size:
        raise InvalidParameterError(f"expected {basis.size} coefficients, got {c.shape[-1]}")
    return basis.mode_values(points) @ c


def propagate_coeffs(coeffs, basis: EigenBasis, dt: float) -> FieldCoeffs:
    if not dt >= 0:
        raise InvalidParameterError(f"dt must be >= 0, got {dt}")
    c = coeffs.c if isinstance(coeffs, FieldCoeffs) else np.asarray(coeffs, dtype=float)
    return FieldCoeffs(c * np.exp(-basis.decay_rates * dt))


def _grid(length: float, panels: int) -> np.ndarray:
    return np.linspace(0.0, length, panels + 1)


def project_initial(f0: Callable, basis: EigenBasis, panels: int = _QUAD_PANELS) -> FieldCoeffs:
    """Sine-series coefficients of ``f0`` by composite Simpson quadrature.

    ``f0`` is called with one array per axis (broadcast meshgrid for rectangles).
    """
    if panels < _QUAD_PANELS or panels % 2:
        raise InvalidParameterError(f"need an even panel count >= {_QUAD_PANELS}")
    dom = basis.domain
    axes = [_grid(L, panels) for L in dom.lengths]
    mesh = np.meshgrid(*axes, indexing="ij")
    vals = np.broadcast_to(np.asarray(f0(*mesh), dtype=float), mesh[0].shape)
    if not np.all(np.isfinite(vals)):
        raise NumericalError("initial condition is not finite on the quadrature grid")
    norm = np.prod([2.0 / L for L in dom.lengths])
    out = np.empty(basis.size)
    for i in range(basis.size):
        integrand = vals.copy()
        for a, x in enumerate(axes):
            shape = [1] * dom.ndim
            shape[a] = -1
            integrand = integrand * np.sin(basis.wavenumbers[i, a] * x).reshape(shape)
        for a in reversed(range(dom.ndim)):
            integrand = simpson(integrand, x=axes[a], axis=a)
        out[i] = norm * integrand
    return FieldCoeffs(out)


def solve_heat_timedep(
    domain: DomainSpec,
    drive: BoundaryDrive,
    basis: EigenBasis,
    t: float,
    n_points: int = 129,
    n_steps: int = 1000,
):
    """Series solution of the 1D heat equation with time-dependent Dirichlet values.

    Splits ``u = w + v`` with the linear interpolant ``w`` of the boundary
    values; ``v`` has zero boundaries, initial value ``f0 - w(x, 0)`` and
    source ``-dw/dt``. Returns ``(x, u)`` on ``n_points`` uniform nodes.
    """
    if domain.kind != "interval":
        raise UnsupportedDomainError("time-dependent boundary solver supports interval domains only")
    if not t >= 0:
        raise InvalidParameterError(f"t must be >= 0, got {t}")
    if n_points < 128 or n_steps < 1000:
        raise InvalidParameterError("need n_points >= 128 and n_steps >= 1000")
    (L,) = domain.lengths
    x = np.linspace(0.0, L, n_points)
    lam = basis.wavenumbers[:, 0]
    rate = domain.alpha**2 * lam**2
    phi0, phi1 = drive.phi0, drive.phi1

    def w(xx, tt):
        a = phi0(tt)
        return a + (xx / L) * (phi1(tt) - a)

    c = project_initial(lambda xx: drive.f0(xx) - w(xx, 0.0), basis).c
    v = c * np.exp(-rate * t)
    if t > 0:
        tau = np.linspace(0.0, t, n_steps + 1)
        h = 1e-4 * t
        dphi0 = (np.array([phi0(s + h) for s in tau]) - np.array([phi0(s - h) for s in tau])) / (2 * h)
        dphi1 = (np.array([phi1(s + h) for s in tau]) - np.array([phi1(s - h) for s in tau])) / (2 * h)
        # -(2/L) * integral of dw/dt * sin(lam x) over [0, L], in closed form
        n = basis.indices[:, 0]
        sign = (-1.0) ** n
        src = -(2.0 / L) * (
            dphi0[:, None] * (1.0 - sign)[None, :] / lam + (dphi1 - dphi0)[:, None] * (-sign)[None, :] / lam
        )
        v = v + _decayed_integral(src, tau, rate)
    u = w(x, t) + np.sin(x[:, None] * lam[None, :]) @ v
    if not np.all(np.isfinite(u)):
        raise NumericalError("series solution is not finite")
    return x, u


def _decayed_integral(src: np.ndarray, tau: np.ndarray, rate: np.ndarray) -> np.ndarray:
    """``integral_0^t src(s) exp(-rate (t - s)) ds`` per mode.

    Composite trapezoid in which the exponential kernel is integrated exactly
    against the piecewise-linear interpolant of ``src``; reduces to the plain
    trapezoid rule as ``rate * dt -> 0`` and stays accurate for stiff modes.
    """
    t = tau[-1]
    dt = np.diff(tau)
    out = np.zeros(src.shape[1])
    for m, r in enumerate(rate):
        z = r * dt
        # weights for src at left/right node of each step after decaying to t
        decay_right = np.exp(-r * (t - tau[1:]))
        small = z < 1e-3
        zs = np.where(small, 1.0, z)
        phi = np.where(small, 1.0 - z / 2 + z**2 / 6, -np.expm1(-zs) / zs)
        psi = np.where(small, 0.5 - z / 3 + z**2 / 8, (phi - np.exp(-zs)) / zs)
        w_left = dt * psi * decay_right
        w_right = dt * (phi - psi) * decay_right
        out[m] = np.sum(w_left * src[:-1, m] + w_right * src[1:, m])
    return out
