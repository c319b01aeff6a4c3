"""Stochastic nonlinear Schroedinger equation with multiplicative Levy jump noise:
spectral solver, compound-Poisson sampling, and conservation/dispersion checks."""

from .grid import (
    ComplexField,
    FourierMultiplier,
    GridSpec,
    InvalidFieldError,
    free_propagate,
    gaussian_field,
    gradient_field,
    load_field,
    lp_norm,
    save_field,
    sobolev_norm,
)
from .noise import (
    AmplitudeMeasure,
    AtomicMeasure,
    CompoundPoissonPath,
    MarkFunction,
    NoiseCoefficients,
    TruncationSpec,
    check_hypotheses,
    compensator_fields,
    filter_path,
    gaussian_bump,
    levy_constants,
    make_coefficients,
    restrict,
    sample_path,
    total_rate,
)
from .dynamics import (
    BoundaryMassError,
    PathRecord,
    SolverConfig,
    apply_jump,
    between_jump_evolve,
    mild_residual,
    nonlinear_phase_step,
    potential_step,
    solve_path,
    solve_truncated,
)
from .observables import ObservableSeries, hamiltonian, mass, virial
from .analysis import DecayReport, dispersive_decay_check, is_admissible
from .montecarlo import (
    ConvergenceReport,
    EnsembleConfig,
    EnsembleSummary,
    dt_study,
    run_ensemble,
    truncation_study,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
