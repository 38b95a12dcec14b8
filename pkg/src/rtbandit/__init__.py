"""Preference learning from choices and response times in linear bandits."""
from .design import DesignKind, DesignWeights, compute_design, design_objective
from .diffusion import (
    DiffusionParams,
    Moments,
    QueryOutcome,
    fpt_cdf,
    fpt_density,
    moments,
    sample_decision_time,
    sample_outcome,
    sample_outcomes,
    simulate_paths,
)
from .estimation import (
    DegenerateDesignError,
    QueryDataset,
    Scale,
    SolverError,
    UtilityEstimate,
    estimate_ch_logit,
    estimate_ch_mle,
    estimate_chdt,
    estimate_chdt_logit,
)
from .gse import (
    BudgetExhaustedError,
    DiffusionFeedback,
    EstimatorKind,
    GseConfig,
    PhaseError,
    RunResult,
    SignFeedback,
    eliminate,
    run_gse,
)
from .harness import aggregate_error, run_sweep
from .instances import BanditInstance, build_queries, gen_sphere_instance, load_instance, save_instance
from .theory import concentration_bound, weight_asym, weight_nonasym

__version__ = "0.1.0"
