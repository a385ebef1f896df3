"""Secrecy-rate maximization for fluid-antenna NOMA downlinks.

Alternating optimization of the two NOMA beamformers (successive convex
approximation) and the antenna positions (majorization-minimization), with
fixed/random-position and OMA baselines and a Monte Carlo benchmark CLI.
"""

__version__ = "0.1.0"

from .geometry import (AntennaLayout, ChannelRealization, PlacementRegion, PathLoss, SystemParams,
                       default_params, sample_realization)
from .rates import BeamformingPair, SolutionCandidate, check_feasibility, secrecy_rate
from .ao import AoOptions, AoResult, initialize, optimize
from .baselines import BaselineKind, grid_oracle, run_fpa, run_oma, run_rpa

__all__ = [
    "AntennaLayout", "ChannelRealization", "PlacementRegion", "PathLoss", "SystemParams",
    "default_params", "sample_realization", "BeamformingPair", "SolutionCandidate",
    "check_feasibility", "secrecy_rate", "AoOptions", "AoResult", "initialize", "optimize",
    "BaselineKind", "grid_oracle", "run_fpa", "run_oma", "run_rpa",
]
