import numpy as np
import pytest

from cmcfield.cmc import CmcParams
from cmcfield.field import DomainSpec, build_basis
from cmcfield.filtering import FilterConfig
from cmcfield.harness.pipeline import InvertConfig, invert_dataset
from cmcfield.harness.simulate import SimConfig, layout_for, simulate
from cmcfield.vl import GaussianBelief, NoiseHyper, SpectralWindow


@pytest.fixture
def params():
    return CmcParams()


@pytest.fixture
def freqs():
    return np.arange(1.0, 61.0)


@pytest.fixture
def small_setup():
    """Interval domain, 4 electrodes, 3 modes, coarse frequency grid: fast single-window inversions."""
    domain = DomainSpec.interval(1.0, 0.2)
    basis = build_basis(domain, 3)
    positions = np.array([[0.2], [0.4], [0.6], [0.8]])
    freqs = np.arange(2.0, 61.0, 4.0)
    cfg = FilterConfig(basis=basis, positions=positions, freqs=freqs, dt_window=1.0, volatility=0.01,
                       g7_walk_var=0.01)
    prior = GaussianBelief(np.zeros(cfg.n_params), np.diag([0.5] * basis.size + [0.1]))
    return cfg, prior


def make_window(cfg, p, t=0.0, noise_sd=0.0, seed=0):
    from cmcfield.vl import SpectralModel

    model = SpectralModel.from_config(cfg)
    logp = model.log_spectra(p)
    if noise_sd:
        logp = logp + noise_sd * np.random.default_rng(seed).standard_normal(logp.shape)
    return SpectralWindow(t, cfg.positions, cfg.freqs, 10.0**logp)


@pytest.fixture(scope="session")
def default_scene():
    cfg = SimConfig()
    return cfg, simulate(cfg)


@pytest.fixture(scope="session")
def default_run(default_scene):
    """The full default-scene inversion, shared by every test that needs it."""
    import time

    cfg, ds = default_scene
    icfg = InvertConfig()
    start = time.perf_counter()
    traj, fcfg = invert_dataset(ds, icfg)
    elapsed = time.perf_counter() - start
    return {"sim": cfg, "dataset": ds, "icfg": icfg, "traj": traj, "fcfg": fcfg, "elapsed": elapsed,
            "layout": layout_for(cfg)}


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per criterion; lines are echoed live and again in the terminal summary."""

    def record(number, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
