"""Sequential best-arm identification with asymptotic anytime-valid
confidence sequences, SNR-maximizing test weights, and a learned contextual
sampling policy, plus a reproducible Monte-Carlo experiment harness."""

from ._backend import backend_name
from .confseq import BaiResult, RunConfig, boundary, lower_bound, run_bai, select_rho
from .env import BanditInstance, Observation, OutcomeFamily, true_arm_mean
from .harness import (PRESETS, ExperimentConfig, ExperimentSummary,
                      compare_variants, run_experiment)
from .policy import (PolicyConfig, PolicyMode, kl_complexity_bound,
                     kl_complexity_policy, learn_theta, policy_from_theta,
                     snr_complexity_bound, two_armed_limits)
from .snr import SnrProblem, grid_oracle_snr, kl_projection_value, solve_snr

__version__ = "0.1.0"

__all__ = [
    "backend_name",
    "BaiResult",
    "RunConfig",
    "boundary",
    "lower_bound",
    "run_bai",
    "select_rho",
    "BanditInstance",
    "Observation",
    "OutcomeFamily",
    "true_arm_mean",
    "PRESETS",
    "ExperimentConfig",
    "ExperimentSummary",
    "compare_variants",
    "run_experiment",
    "PolicyConfig",
    "PolicyMode",
    "kl_complexity_bound",
    "kl_complexity_policy",
    "learn_theta",
    "policy_from_theta",
    "snr_complexity_bound",
    "two_armed_limits",
    "SnrProblem",
    "grid_oracle_snr",
    "kl_projection_value",
    "solve_snr",
    "__version__",
]
