"""Simulator for a density-based proof-of-stake consensus protocol."""

from .analysis import (
    UtilityParams,
    empirical_ne_validation,
    honest_utility,
    malicious_utilities,
    nash_boundary_check,
    slashing_utility,
)
from .chain import Block, BlockHeader, ChainState, RejectReason, validate_block, validate_header
from .election import adjust_threshold, epoch_randomness, is_slot_leader
from .scenario import ScenarioConfig, ScenarioError, load_scenario
from .selection import SelectionParams, chain_trust, gap_penalty, select_chain
from .sim import RunMetrics, mev_fork_revenue, run_simulation
from .staking import IncentiveParams, StakeLedger, effective_weight

__version__ = "0.1.0"

__all__ = [
    "Block",
    "BlockHeader",
    "ChainState",
    "IncentiveParams",
    "RejectReason",
    "RunMetrics",
    "ScenarioConfig",
    "ScenarioError",
    "SelectionParams",
    "StakeLedger",
    "UtilityParams",
    "adjust_threshold",
    "chain_trust",
    "effective_weight",
    "empirical_ne_validation",
    "epoch_randomness",
    "gap_penalty",
    "honest_utility",
    "is_slot_leader",
    "load_scenario",
    "malicious_utilities",
    "mev_fork_revenue",
    "nash_boundary_check",
    "run_simulation",
    "select_chain",
    "slashing_utility",
    "validate_block",
    "validate_header",
]
