"""Coarse-grained and effective dynamics for finite continuous-time Markov chains.

Builds lumped dynamics from a generator and a coarse-graining map, evaluates
relative-entropy error certificates between them, and runs epsilon sweeps
over a two-level slow-fast family.
"""
from .chain import (
    Generator,
    ProbabilityVector,
    StateSpace,
    check_detailed_balance,
    is_irreducible,
    spectral_gap,
    stationary_measure,
    validate_generator,
)
from .coarse import (
    CoarseGrainingMap,
    Disintegration,
    cg_generator,
    disintegrate,
    effective_generator,
    push_forward,
    restrict,
)
from .dynamics import (
    TimeGrid,
    Trajectory,
    asymptotic_tv_rate,
    fit_short_time_lower_bound,
    solve_cg_ode,
    solve_coarse_grained,
    solve_constant,
    tv_decay_rate,
)
from .functionals import (
    LsiEstimate,
    ckp_gap,
    entropy_dissipation_residual,
    estimate_lsi_constant,
    fisher_information,
    relative_entropy,
    total_variation,
)
from .kernels import BACKEND
from .multiscale import (
    AveragedModel,
    MultiscaleSpec,
    averaged_model,
    birth_death_ring,
    build_l_eps,
    conditional_stationary_gap,
    effective_generator_eps,
    scenario,
)
from .bounds import (
    BoundReport,
    compute_g,
    entropy_identity_residual,
    eps_bound_report,
    g_l2_norm,
    general_bound_report,
    long_time_envelope,
)
from .study import ConvergenceReport, StudyConfig, emit, fit_rate, run_study

__version__ = "0.1.0"
