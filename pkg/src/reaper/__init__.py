"""Robust subspace recovery with the REAPER and S-REAPER convex programs."""

from .errors import ConvergenceError, InvalidInputError, InvariantError, ReaperError
from .geometry import (
    ProjectorRelaxation,
    Spectrum,
    Subspace,
    dominant_subspace,
    euclidean_median,
    pca_fit,
    principal_angles,
    spherical_pca_fit,
    spherize,
    spherize_dataset,
    subspace_angle,
)
from .haystack import HaystackParams, sample_haystack, sample_syringe, validate_in_out
from .pipeline import FitResult, PipelineConfig, fit
from .recovery import (
    InOutDataset,
    RecoveryReport,
    check_deterministic,
    haystack_guarantee,
    permeance,
    spherical_permeance,
    spherical_structure_stat,
    structure_stat,
)
from .solver import (
    IrlsConfig,
    IrlsTrace,
    cap_to_strong_feasible,
    irls_solve,
    reaper_objective,
    regularized_objective,
    s_reaper_solve,
    solve_weighted_ls,
    waterfill,
    weighted_covariance,
)

__version__ = "0.1.0"
