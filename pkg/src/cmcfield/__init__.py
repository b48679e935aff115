"""Sequential Bayesian estimation of a slowly diffusing excitability field from windowed spectra."""
from .cmc import CmcParams, firing_rate, forward_model, linearize, transfer_spectrum
from .field import (
    BoundaryDrive,
    DomainSpec,
    EigenBasis,
    FieldCoeffs,
    build_basis,
    evaluate_field,
    project_initial,
    propagate_coeffs,
    solve_heat_timedep,
)
from .filtering import BeliefTrajectory, FilterConfig, field_movie, predict_prior, run_filter
from .vl import GaussianBelief, InversionReport, NoiseHyper, SpectralWindow, VLSettings, free_energy, invert_window

__version__ = "0.1.0"
