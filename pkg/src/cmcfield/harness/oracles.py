"""Independent numerical verifiers: Crank-Nicolson heat solver and a time-domain spectrum estimate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal
from scipy.sparse import diags, identity
from scipy.sparse.linalg import splu

from ..cmc import CmcParams, linearize, transfer_spectrum
from ..errors import InvalidParameterError, OracleFailure, UnsupportedDomainError
from ..field import BoundaryDrive, DomainSpec, build_basis, solve_heat_timedep


def fd_heat_oracle(domain: DomainSpec, drive: BoundaryDrive, dx: float, dt: float, t, ):
    """Crank-Nicolson solution of ``u_t = alpha**2 u_xx`` with time-dependent Dirichlet values.

    ``t`` may be a scalar or an increasing sequence of output times. Returns
    ``(x, u)`` where ``u`` has one row per requested time.
    """
    if domain.kind != "interval":
        raise UnsupportedDomainError("finite-difference oracle supports interval domains only")
    if not (dx > 0 and dt > 0):
        raise InvalidParameterError("dx and dt must be positive")
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise InvalidParameterError("output times must be nonnegative and nondecreasing")
    (L,) = domain.lengths
    nx = int(round(L / dx))
    x = np.linspace(0.0, L, nx + 1)
    h = x[1] - x[0]
    n_int = nx - 1
    r = domain.alpha**2 * dt / h**2
    lap = diags([np.ones(n_int - 1), -2 * np.ones(n_int), np.ones(n_int - 1)], [-1, 0, 1], format="csc")
    eye = identity(n_int, format="csc")
    lhs = splu((eye - 0.5 * r * lap).tocsc())
    rhs_op = (eye + 0.5 * r * lap).tocsr()

    u = np.asarray(drive.f0(x), dtype=float) * np.ones_like(x)
    u[0], u[-1] = drive.phi0(0.0), drive.phi1(0.0)
    out = []
    now = 0.0
    for target in times:
        n_steps = int(round((target - now) / dt))
        for k in range(n_steps):
            t_old = now + k * dt
            t_new = t_old + dt
            b = rhs_op @ u[1:-1]
            left = drive.phi0(t_old) + drive.phi0(t_new)
            right = drive.phi1(t_old) + drive.phi1(t_new)
            b[0] += 0.5 * r * left
            b[-1] += 0.5 * r * right
            u[1:-1] = lhs.solve(b)
            u[0], u[-1] = drive.phi0(t_new), drive.phi1(t_new)
        now += n_steps * dt
        if not np.all(np.isfinite(u)):
            raise OracleFailure(f"Crank-Nicolson solution diverged by t = {now:g}")
        out.append(u.copy())
    return x, np.array(out)


def relative_l2(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


@dataclass
class HeatComparison:
    times: np.ndarray
    rel_l2: np.ndarray
    x: np.ndarray
    series: np.ndarray
    oracle: np.ndarray

    @property
    def worst(self) -> float:
        return float(np.max(self.rel_l2))


def boundary_driven_case():
    """phi0 = sin t, phi1 = 0, f0 = 0 on the unit interval with alpha = 1."""
    return (
        DomainSpec.interval(1.0, 1.0),
        BoundaryDrive(np.sin, lambda s: 0.0, lambda xx: np.zeros_like(xx)),
    )


def compare_heat(domain, drive, times=(0.5, 1.0, 1.5, 2.0), n_modes=64, dx=1 / 512, dt=1e-4,
                 n_points=129) -> HeatComparison:
    """Series solution vs Crank-Nicolson at each time, relative L2 on the series grid."""
    basis = build_basis(domain, n_modes)
    xo, uo = fd_heat_oracle(domain, drive, dx, dt, times)
    rel, series, oracle = [], [], []
    for k, tt in enumerate(times):
        xs, us = solve_heat_timedep(domain, drive, basis, tt, n_points=n_points)
        uo_on_xs = np.interp(xs, xo, uo[k])
        rel.append(relative_l2(us, uo_on_xs))
        series.append(us)
        oracle.append(uo_on_xs)
    return HeatComparison(np.asarray(times, dtype=float), np.array(rel), xs, np.array(series), np.array(oracle))


@dataclass
class SpectrumComparison:
    freqs: np.ndarray
    analytic: np.ndarray
    simulated: np.ndarray
    peak_freq: float
    peak_rel_error: float


def simulate_linear_em(params: CmcParams, theta_sp=0.0, g7_log_offset=0.0, dt=1e-4,
                       duration=200.0, n_realizations=8, seed=0):
    """Euler-Maruyama realizations of the linearized column driven by white noise.

    ``x[n+1] = (I + dt J) x[n] + b sigma_u sqrt(dt) xi[n]``; the readout is
    the superficial pyramidal position. Returns an array of shape (n_realizations, n_samples).
    """
    sys = linearize(params, theta_sp, g7_log_offset)
    n = int(round(duration / dt))
    a_d = np.eye(len(sys.jacobian)) + dt * sys.jacobian
    b_d = (sys.input_vector * params.sigma_u * np.sqrt(dt))[:, None]
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((n, n_realizations))
    state = np.zeros((len(a_d), n_realizations))
    y = np.empty((n_realizations, n))
    c = sys.output_vector
    for k in range(n):
        y[:, k] = c @ state
        state = a_d @ state + b_d * noise[k]
    if not np.all(np.isfinite(y)):
        raise OracleFailure("time-domain simulation diverged")
    return y


def compare_spectrum(params: CmcParams | None = None, freqs=None, dt=1e-4, duration=200.0,
                     n_realizations=8, segment_s=2.0, seed=0, discard_s=1.0) -> SpectrumComparison:
    """Analytic spectrum vs Welch periodogram of the stochastic simulation.

    The analytic ``S(f)`` is a two-sided density in Hz, so the one-sided
    Welch estimate is halved before comparison.
    """
    params = params or CmcParams()
    freqs = np.arange(1.0, 61.0) if freqs is None else np.asarray(freqs, dtype=float)
    y = simulate_linear_em(params, dt=dt, duration=duration + discard_s, n_realizations=n_realizations, seed=seed)
    y = y[:, int(round(discard_s / dt)):]
    fs = 1.0 / dt
    f_w, p_w = signal.welch(y, fs=fs, nperseg=int(round(segment_s * fs)), axis=-1)
    p_w = 0.5 * p_w.mean(axis=0)
    simulated = np.interp(freqs, f_w, p_w)
    analytic = transfer_spectrum(linearize(params), params, freqs).power
    k = int(np.argmax(analytic))
    err = abs(simulated[k] - analytic[k]) / analytic[k]
    return SpectrumComparison(freqs, analytic, simulated, float(freqs[k]), float(err))
