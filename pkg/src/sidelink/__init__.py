"""Broadcast sidelink scheduling simulator and gap-tail analysis."""

__version__ = "0.1.0"

from .campaign import CellSpec, emit_tables, preset_cells, run_campaign
from .channel import BlerTable, ChannelConfig, LinkPowers, PathlossTable
from .congestion import CongestionState, generation_interval_ms
from .engine import Simulation, run_simulation
from .mac import (CandidateList, Grant, GrantOrigin, SchedulerState,
                  SensingHistory, grant_to_subframe, select_candidates,
                  sps_transmit_tick)
from .metrics import (CcdfCurve, MetricStore, nearest_rank_percentile,
                      relative_improvement)
from .scenario import (InvalidConfigError, ScenarioConfig, SpsConfig, World,
                       build_world, derive_rng)
from .tailmodel import (TailModelParams, compare_tail, fit_log_slope,
                        tail_no_slippage, tail_with_slippage)

__all__ = [
    "BlerTable", "CandidateList", "CcdfCurve", "CellSpec", "ChannelConfig",
    "CongestionState", "Grant", "GrantOrigin", "InvalidConfigError",
    "LinkPowers", "MetricStore", "PathlossTable", "ScenarioConfig",
    "SchedulerState", "SensingHistory", "Simulation", "SpsConfig",
    "TailModelParams", "World", "build_world", "compare_tail", "derive_rng",
    "emit_tables", "fit_log_slope", "generation_interval_ms",
    "grant_to_subframe", "nearest_rank_percentile", "preset_cells",
    "relative_improvement", "run_campaign", "run_simulation",
    "select_candidates", "sps_transmit_tick", "tail_no_slippage",
    "tail_with_slippage",
]
