"""Adaptive, noise-robust zero level-set estimation on dyadic box meshes.

The engine refines a uniform grid only where a cell-local multilinear fit of
noisy point evaluations cannot rule out the zero level set, with exact work
accounting and fully reproducible keyed randomness.
"""

__version__ = "0.1.0"

from .approx import (DecisionVariable, LocalApproximant, cell_abs_min,
                     decision_variable, eval_local, fit_local)
from .bench import (DROP_WAVE, STYBLINSKI_TANG, Problem, SweepResult,
                    convergence_sweep, drop_wave, level_for_tolerance,
                    styblinski_tang)
from .estimator import LevelSetEstimator
from .extract import (LevelSetGeometry, export_geometry, extract_levelset,
                      read_segments_csv)
from .grid import (AdaptiveMesh, Cell, Domain, cell_vertices, refine_cell,
                   uniform_tessellation, validate_partition)
from .metrics import (ErrorEstimate, expected_error, fit_loglog_slope,
                      generate_cell_points, sign_mismatch_error)
from .oracles import (CostSchedule, DeterministicOracle, EvaluationOracle,
                      GaussianNoiseOracle, MonteCarloOracle,
                      averaged_mc_variance, cost_per_eval)
from .refine import (RunConfig, RunResult, WorkLedger, base_level,
                     refinement_threshold, resume, run_adaptive)

__all__ = [
    "__version__",
    "AdaptiveMesh", "Cell", "Domain", "cell_vertices", "refine_cell",
    "uniform_tessellation", "validate_partition",
    "CostSchedule", "DeterministicOracle", "EvaluationOracle",
    "GaussianNoiseOracle", "MonteCarloOracle", "averaged_mc_variance",
    "cost_per_eval",
    "DecisionVariable", "LocalApproximant", "cell_abs_min",
    "decision_variable", "eval_local", "fit_local",
    "RunConfig", "RunResult", "WorkLedger", "base_level",
    "refinement_threshold", "resume", "run_adaptive",
    "ErrorEstimate", "expected_error", "fit_loglog_slope",
    "generate_cell_points", "sign_mismatch_error",
    "LevelSetGeometry", "export_geometry", "extract_levelset",
    "read_segments_csv",
    "DROP_WAVE", "STYBLINSKI_TANG", "Problem", "SweepResult",
    "convergence_sweep", "drop_wave", "level_for_tolerance", "styblinski_tang",
    "LevelSetEstimator",
]
