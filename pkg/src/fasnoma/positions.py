"""Antenna-by-antenna position refinement with the beams held fixed.

Each update solves a 4-variable convex problem in ``(x_m, y_m, tau, eps)``, with
coordinates expressed in wavelengths.  A move is kept only if the exact secrecy
ratio does not decrease and the exact constraints still hold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import qcqp
from .beamforming import FEASIBILITY_TOL, SolverStats, channel_scale
from .geometry import AntennaLayout, ChannelRealization, SystemParams
from .rates import BeamformingPair
from .surrogates import (QuadFormCache, SlackState, build_quadform_cache, distance_linearize,
                         layout_form_bound, psi_quadratic_scaled)
from .linalg import max_eigenvalue

SPACING_TOL = 1e-9
# relative slack steps tried for a strictly interior start (lower tau, raise eps)
INTERIOR_STEPS = (1e-3, 1e-5)


@dataclass
class PositionIterate:
    layout: AntennaLayout
    slack: SlackState
    sweep: int
    objective: float
    trace: List[float] = field(default_factory=list)
    moves: int = 0
    rejected: int = 0
    status: str = "converged"
    stats: SolverStats = field(default_factory=SolverStats)


class _Scaled:
    """Normalized realization and beams shared by every antenna update of a sweep."""

    def __init__(self, beams: BeamformingPair, realization: ChannelRealization, params: SystemParams):
        self.params = params
        self.realization = realization.scaled(channel_scale(params))
        self.beams = beams.scaled(1.0 / math.sqrt(params.max_power))
        self.lam_max = {}
        for k in ("c", "e"):
            a = self.realization.path_gains(k)
            self.lam_max[k] = max(max_eigenvalue(np.outer(a, a.conj())), 0.0)

    def cache(self, layout: AntennaLayout) -> QuadFormCache:
        return build_quadform_cache(self.beams, layout, self.realization, self.params.wavelength, self.lam_max)


def _exact(cache: QuadFormCache, thresholds):
    d_c1 = cache.form_value(cache.xi[1], "c")
    d_e1 = cache.form_value(cache.xi[1], "e")
    ratio = (1.0 + d_c1) / (1.0 + d_e1)
    margins = [cache.form_value(cache.mu(L), k) - L for k, L in zip(("c", "e"), thresholds)]
    return ratio, 1.0 + d_e1, margins


def _position_problem(cache: QuadFormCache, m: int, tau_l: float, eps_l: float, params: SystemParams,
                      thresholds, rate_constraints: bool = True):
    """Variables ``(x_m / lambda, y_m / lambda, tau / tau_l, eps / eps_l)``.

    Quadratic rows are divided by their value at the expansion point.
    """
    lam = params.wavelength
    layout = cache.layout
    point = layout.positions[m]
    cons = []
    Ppsi, qpsi, rpsi = psi_quadratic_scaled(tau_l, eps_l)

    # ratio: psi(tau, eps) <= 1 + lower bound of d_c1
    tb, k = layout_form_bound(cache, cache.xi[1], "c", m, point, "lower")
    Pb, qb, rb = tb.quadratic(lam)
    s = tau_l * eps_l
    P = np.zeros((4, 4))
    P[:2, :2] = -Pb / s
    P[2:, 2:] = Ppsi
    cons.append(qcqp.QuadraticConstraint(P, np.concatenate([-qb / s, qpsi]), rpsi - (rb + k + 1.0) / s,
                                         "ratio"))

    if rate_constraints:
        for user, L in zip(("c", "e"), thresholds):
            tb, k = layout_form_bound(cache, cache.mu(L), user, m, point, "lower")
            Pb, qb, rb = tb.quadratic(lam)
            P = np.zeros((4, 4))
            P[:2, :2] = -Pb / L
            cons.append(qcqp.QuadraticConstraint(P, np.concatenate([-qb / L, [0.0, 0.0]]), 1.0 - (rb + k) / L,
                                                 "rate_" + user))

    # leakage: 1 + upper bound of d_e1 <= eps
    tb, k = layout_form_bound(cache, cache.xi[1], "e", m, point, "upper")
    Pb, qb, rb = tb.quadratic(lam)
    P = np.zeros((4, 4))
    P[:2, :2] = Pb / eps_l
    cons.append(qcqp.QuadraticConstraint(P, np.concatenate([qb / eps_l, [0.0, -1.0]]), (rb + k + 1.0) / eps_l,
                                         "leakage"))

    rows, rhs, names = [], [], []
    for n in range(layout.num_antennas):
        if n == m:
            continue
        cut = distance_linearize(point, layout.positions[n])
        rows.append(np.concatenate([-cut.normal, [0.0, 0.0]]))
        rhs.append(-params.min_spacing / lam - cut.normal @ layout.positions[n] / lam)
        names.append(f"spacing[{n}]")

    region = params.region
    lower = np.array([region.x_lo / lam, region.y_lo / lam, 0.0, 0.0])
    upper = np.array([region.x_hi / lam, region.y_hi / lam, np.inf, np.inf])
    problem = qcqp.QcqpProblem(np.array([0.0, 0.0, 1.0, 0.0]), cons,
                               A_ub=np.array(rows).reshape(-1, 4) if rows else None,
                               b_ub=np.array(rhs) if rhs else None, ub_names=names,
                               lower=lower, upper=upper)
    hint = np.array([point[0] / lam, point[1] / lam, 1.0, 1.0])
    return problem, hint


def interior_start(problem: qcqp.QcqpProblem, hint: np.ndarray) -> np.ndarray:
    """Hint with the slacks moved inside when that makes every row strict; skips phase 1.

    Fails (returns ``hint``) when a rate row is active at the current position.
    """
    for d in INTERIOR_STEPS:
        x = hint + np.array([0.0, 0.0, -2.0 * d, d])
        if problem.inequality_values(x).max() < -qcqp.INTERIOR_MARGIN:
            return x
    return hint


def build_position_subproblem(m: int, layout: AntennaLayout, beams: BeamformingPair,
                              realization: ChannelRealization, params: SystemParams,
                              rate_constraints: bool = True):
    """Convex restriction for antenna ``m`` over ``(x_m / lambda, y_m / lambda, tau, eps)``.

    Returns ``(QcqpProblem, hint, cache)``; the hint is the current position with
    exact slacks.
    """
    scaled = _Scaled(beams, realization, params)
    cache = scaled.cache(layout)
    thresholds = (params.sinr_threshold("c"), params.sinr_threshold("e"))
    ratio, eps, _ = _exact(cache, thresholds)
    problem, hint = _position_problem(cache, m, ratio, eps, params, thresholds, rate_constraints)
    return problem, hint, cache


def sweep(layout: AntennaLayout, beams: BeamformingPair, realization: ChannelRealization,
          params: SystemParams, tol: float = 1e-3, max_sweeps: int = 20, order: str = "fixed",
          rng: Optional[np.random.Generator] = None, rate_constraints: bool = True,
          solver_tol: float = 1e-8) -> PositionIterate:
    """Update antennas one at a time until no antenna moves more than ``tol * lambda`` in a sweep."""
    if not layout.is_feasible(params.region, params.min_spacing, tol=SPACING_TOL):
        raise ValueError("starting layout violates the region or spacing constraints")
    scaled = _Scaled(beams, realization, params)
    thresholds = (params.sinr_threshold("c"), params.sinr_threshold("e"))
    M = layout.num_antennas
    cache = scaled.cache(layout)
    ratio, eps, _ = _exact(cache, thresholds)
    it = PositionIterate(layout, SlackState(ratio, eps), 0, ratio, [ratio])
    if order == "random" and rng is None:
        rng = np.random.default_rng(0)
    it.status = "max_iter"
    for sweep_idx in range(1, max_sweeps + 1):
        it.sweep = sweep_idx
        indices = rng.permutation(M) if order == "random" else range(M)
        max_disp = 0.0
        for m in indices:
            problem, hint = _position_problem(cache, m, ratio, eps, params, thresholds, rate_constraints)
            sol = qcqp.solve(problem, tol=solver_tol, x0=interior_start(problem, hint))
            it.stats.record(sol)
            if sol.status == "infeasible" or sol.phase1_slack is not None and sol.phase1_slack >= 0:
                it.rejected += 1
                continue
            new_pos = sol.x[:2] * params.wavelength
            trial = it.layout.moved(m, new_pos)
            trial_cache = scaled.cache(trial)
            new_ratio, new_eps, margins = _exact(trial_cache, thresholds)
            feasible = (trial.is_feasible(params.region, params.min_spacing, tol=SPACING_TOL)
                        and (not rate_constraints or min(margins) >= -FEASIBILITY_TOL))
            if not feasible or new_ratio < ratio:
                it.rejected += 1
                continue
            max_disp = max(max_disp, float(np.hypot(*(new_pos - it.layout.positions[m]))))
            it.layout, cache, ratio, eps = trial, trial_cache, new_ratio, new_eps
            it.moves += 1
            it.trace.append(ratio)
        if max_disp < tol * params.wavelength:
            it.status = "converged"
            break
    it.slack = SlackState(ratio, eps)
    it.objective = ratio
    return it
