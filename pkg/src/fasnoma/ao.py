"""Alternating optimization of beams and antenna positions."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .beamforming import SolverStats, initial_beams, run_sca
from .geometry import AntennaLayout, ChannelRealization, SystemParams, grid_layout
from .positions import sweep
from .rates import BeamformingPair, SolutionCandidate, check_feasibility, secrecy_rate

MONOTONE_TOL = 1e-12


@dataclass
class AoOptions:
    sca_tol: float = 1e-4
    sca_max_iters: int = 50
    sweep_tol: float = 1e-3
    max_sweeps: int = 20
    outer_tol: float = 1e-4
    max_outer: int = 30
    order: str = "beams_first"  # or "positions_first"
    sweep_order: str = "fixed"  # or "random"
    optimize_positions: bool = True
    solver_tol: float = 1e-8
    initial_layout: Optional[AntennaLayout] = None
    # warm start; used together with ``initial_layout``
    initial_beams: Optional[BeamformingPair] = None


@dataclass
class TraceEntry:
    outer: int
    stage: str
    tau: float
    secrecy_rate: float


@dataclass
class AoResult:
    candidate: Optional[SolutionCandidate]
    secrecy_rate: float
    trace: List[TraceEntry]
    status: str  # converged | max_iter | init_failed
    wall_time: float
    stats: SolverStats = field(default_factory=SolverStats)
    sca_traces: List[List[float]] = field(default_factory=list)
    outer_iterations: int = 0
    stalled: bool = False
    label: str = "FAS-NOMA"
    flags: dict = field(default_factory=dict)
    message: str = ""

    @property
    def rate_trace(self) -> List[float]:
        return [e.secrecy_rate for e in self.trace]


def initialize(realization: ChannelRealization, params: SystemParams,
               layout: Optional[AntennaLayout] = None) -> Optional[SolutionCandidate]:
    """Grid layout plus matched-filter beams; ``None`` when the rate constraints cannot be met."""
    if layout is None:
        layout = grid_layout(params.region, params.num_antennas, params.min_spacing)
    beams = initial_beams(layout, realization, params)
    if beams is None:
        return None
    return SolutionCandidate(layout, beams)


def _failed(label, t0) -> AoResult:
    return AoResult(None, math.nan, [], "init_failed", time.perf_counter() - t0, label=label,
                    message="no power split meets both rate thresholds at the starting layout")


def optimize(realization: ChannelRealization, params: SystemParams,
             options: Optional[AoOptions] = None, label: str = "FAS-NOMA") -> AoResult:
    """Alternate the beamforming and position updates until the secrecy rate stops improving.

    With ``options.optimize_positions`` false only the beamforming update runs
    (fixed-layout baselines).
    """
    opts = options or AoOptions()
    t0 = time.perf_counter()
    if opts.initial_beams is not None:
        if opts.initial_layout is None:
            raise ValueError("initial_beams needs initial_layout")
        start = SolutionCandidate(opts.initial_layout, opts.initial_beams)
    else:
        start = initialize(realization, params, opts.initial_layout)
    if start is None:
        return _failed(label, t0)
    layout, beams = start.layout, start.beams
    stats = SolverStats()
    tau0 = _tau(layout, beams, realization, params)
    trace = [TraceEntry(0, "init", tau0, math.log2(tau0))]
    sca_traces = []
    stalled = False
    status = "max_iter"

    stages = ["beams", "positions"] if opts.order == "beams_first" else ["positions", "beams"]
    if not opts.optimize_positions:
        stages = ["beams"]

    outer = 0
    for outer in range(1, opts.max_outer + 1):
        rate_start = trace[-1].secrecy_rate
        for stage in stages:
            if stage == "beams":
                bf = run_sca(beams, layout, realization, params, tol=opts.sca_tol,
                             max_outer=opts.sca_max_iters, solver_tol=opts.solver_tol)
                stats.merge(bf.stats)
                sca_traces.append(bf.trace)
                new_layout, new_beams, tau = layout, bf.beams, bf.objective
            else:
                ps = sweep(layout, beams, realization, params, tol=opts.sweep_tol,
                           max_sweeps=opts.max_sweeps, order=opts.sweep_order,
                           rng=np.random.default_rng(outer), solver_tol=opts.solver_tol)
                stats.merge(ps.stats)
                new_layout, new_beams, tau = ps.layout, beams, ps.objective
            rate = math.log2(tau)
            if rate < trace[-1].secrecy_rate - MONOTONE_TOL:
                stalled = True
                trace.append(TraceEntry(outer, stage + ":rolled_back", trace[-1].tau, trace[-1].secrecy_rate))
                continue
            layout, beams = new_layout, new_beams
            trace.append(TraceEntry(outer, stage, tau, rate))
        if trace[-1].secrecy_rate - rate_start < opts.outer_tol:
            status = "converged"
            break

    candidate = SolutionCandidate(layout, beams)
    report = check_feasibility(candidate, realization, params, tol=1e-6)
    return AoResult(candidate, secrecy_rate(candidate, realization, params), trace, status,
                    time.perf_counter() - t0, stats, sca_traces, outer, stalled, label,
                    dict(report.flags))


def _tau(layout: AntennaLayout, beams: BeamformingPair, realization: ChannelRealization,
         params: SystemParams) -> float:
    return 2.0 ** secrecy_rate(SolutionCandidate(layout, beams), realization, params)
