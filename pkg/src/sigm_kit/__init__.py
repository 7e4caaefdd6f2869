"""Stochastic intermediate gradient method with inexact oracles, restarts and bound checks."""

from .geometry import (CompositeTerm, FeasibleSet, NormSpec, ProxSetup, UnsupportedGeometry, bregman,
                       dual_norm, norm, project, solve_bregman_prox, solve_linear_prox)
from .oracle import (NoiseSpec, OracleAnswer, OracleMeta, StochasticOracle, certify_oracle,
                     hoelder_oracle, lasso_problem, minibatch, quadratic_oracle, with_noise)
from .restart import (RestartProblem, SigmaParams, StageReport, complexity_calculators, sigma2_run,
                      sigma2_stage_sizes, sigma_run, sigma_stage_sizes)
from .rng import RngStream
from .schedule import (C1, C2, C3, C4, Schedule, ScheduleParams, default_ab, deviation_threshold,
                       mean_gap_bound, validate)
from .sigm import GapEvaluator, SigmProblem, SigmState, init, run, step

__version__ = "0.1.0"
