"""Online low-rank plus sparse decomposition with recursive subspace tracking."""
from .harness import RunConfig, percentage_error, run_monte_carlo, run_single
from .kernels import BACKEND
from .l1solver import L1Problem, solve_bp_eq, solve_bpdn
from .model import ScenarioConfig, SupportEvent, generate_sequence, paper_scenario
from .subspace import SubspaceEstimate, SubspaceParams
from .tracker import TrackerParams, TrackerState, init_state, step

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "L1Problem",
    "RunConfig",
    "ScenarioConfig",
    "SubspaceEstimate",
    "SubspaceParams",
    "SupportEvent",
    "TrackerParams",
    "TrackerState",
    "generate_sequence",
    "init_state",
    "paper_scenario",
    "percentage_error",
    "run_monte_carlo",
    "run_single",
    "solve_bp_eq",
    "solve_bpdn",
    "step",
]
