"""Secure NOMA beamforming for a fixed antenna layout by successive convex approximation.

All work happens in normalized units: channels are scaled by ``sqrt(P_max / noise)``
so that the noise power and the power budget are both 1, and beams by
``1 / sqrt(P_max)``.  Rates are invariant under this scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import qcqp
from .geometry import AntennaLayout, ChannelRealization, SystemParams, synthesize_channel
from .linalg import lift_hermitian_form, lift_linear
from .rates import BeamformingPair
from .surrogates import SlackState, psi_quadratic_scaled, quadform_linearize

# acceptance slack on the normalized (noise = 1) threshold-form rate constraints
FEASIBILITY_TOL = 1e-9


def channel_scale(params: SystemParams) -> float:
    return math.sqrt(params.max_power / params.noise_power)


def normalized_channels(layout: AntennaLayout, realization: ChannelRealization, params: SystemParams):
    s = channel_scale(params)
    return (s * synthesize_channel(layout, realization, "c", params.wavelength),
            s * synthesize_channel(layout, realization, "e", params.wavelength))


def _ratio(w1, hc, he) -> float:
    return (1.0 + abs(np.vdot(hc, w1)) ** 2) / (1.0 + abs(np.vdot(he, w1)) ** 2)


def _sinr_margins(w1, w2, channels, thresholds):
    out = []
    for h, L in zip(channels, thresholds):
        out.append(abs(np.vdot(h, w2)) ** 2 - L * (abs(np.vdot(h, w1)) ** 2 + 1.0))
    return out


@dataclass
class SolverStats:
    solves: int = 0
    logged: int = 0

    def record(self, sol: qcqp.QcqpSolution, kkt_tol: float = 1e-6):
        self.solves += 1
        if not (sol.optimal and sol.kkt.max() <= kkt_tol):
            self.logged += 1

    def merge(self, other: "SolverStats"):
        self.solves += other.solves
        self.logged += other.logged


@dataclass
class BeamformingIterate:
    beams: BeamformingPair
    slack: SlackState
    iteration: int
    objective: float
    trace: List[float] = field(default_factory=list)
    status: str = "converged"
    stats: SolverStats = field(default_factory=SolverStats)


def initial_beams(layout: AntennaLayout, realization: ChannelRealization, params: SystemParams,
                  margin: float = 1e-2, halvings: int = 20) -> Optional[BeamformingPair]:
    """Matched-filter start satisfying both ``s2`` rate constraints with margin.

    ``w1`` is the CU channel projected off the CEU channel; ``w2`` is the
    two-user common direction in span{h_c, h_e} that leaves the most power for
    ``w1``.  CU shares 1/2, 1/4, ... are tried and the feasible one with the
    largest secrecy ratio is kept.  Returns ``None`` when no split works.
    """
    hc, he = normalized_channels(layout, realization, params)
    L = (params.sinr_threshold("c"), params.sinr_threshold("e"))
    M = len(hc)
    nc, ne = np.linalg.norm(hc), np.linalg.norm(he)

    u1 = hc.copy()
    if ne > 0:
        u1 = hc - np.vdot(he, hc) / ne**2 * he
        if np.linalg.norm(u1) <= 1e-6 * max(nc, 1e-300):
            u1 = hc.copy()
    if np.linalg.norm(u1) == 0:
        u1 = np.ones(M, dtype=complex)
    u1 = u1 / np.linalg.norm(u1)

    cands = []
    if nc > 0 and ne > 0:
        c_hat, e_hat = hc / nc, he / ne
        phase = np.exp(1j * np.angle(np.vdot(c_hat, e_hat)))
        for th in np.linspace(0.0, 0.5 * math.pi, 33):
            u = math.cos(th) * e_hat + math.sin(th) * phase * c_hat
            if np.linalg.norm(u) > 1e-12:
                cands.append(u / np.linalg.norm(u))
    elif nc > 0:
        cands.append(hc / nc)
    elif ne > 0:
        cands.append(he / ne)
    else:
        return None

    def p1_limit(u2):
        lim = math.inf
        for h, Lk in zip((hc, he), L):
            a = abs(np.vdot(h, u2)) ** 2
            b = abs(np.vdot(h, u1)) ** 2
            lim = min(lim, (a - Lk) / (a + Lk * b) if a + Lk * b > 0 else -math.inf)
        return lim

    u2 = max(cands, key=p1_limit)
    best, best_ratio = None, -math.inf
    p1 = 0.5
    for _ in range(halvings + 1):
        w1 = math.sqrt(p1) * u1
        w2 = math.sqrt(1.0 - p1) * u2
        margins = _sinr_margins(w1, w2, (hc, he), L)
        if all(mg >= margin * Lk for mg, Lk in zip(margins, L)):
            # when u1 is orthogonal to h_e the first feasible share is best;
            # otherwise (M = 1) a smaller share can give a larger ratio
            ratio = _ratio(w1, hc, he)
            if ratio > best_ratio:
                best, best_ratio = BeamformingPair(w1, w2), ratio
        p1 *= 0.5
    return None if best is None else best.scaled(math.sqrt(params.max_power))


def _subproblem(w1l, w2l, tau_l, eps_l, hc, he, thresholds):
    """Convex restriction around ``(w1l, w2l, tau_l, eps_l)``.

    Variables are ``[Re w1, Im w1, Re w2, Im w2, tau / tau_l, eps / eps_l]``; each
    constraint is divided by its value at the expansion point so that all rows
    are O(1) whatever the channel strength.
    """
    M = len(hc)
    n = 4 * M + 2
    i1 = slice(0, 2 * M)
    i2 = slice(2 * M, 4 * M)
    it, ie = 4 * M, 4 * M + 1
    ts = slice(4 * M, 4 * M + 2)
    cons = []

    # leakage: 1 + |h_e^H w1|^2 <= eps
    P = np.zeros((n, n))
    P[i1, i1] = lift_hermitian_form(np.outer(he, he.conj())) / eps_l
    q = np.zeros(n)
    q[ie] = -1.0
    cons.append(qcqp.QuadraticConstraint(P, q, 1.0 / eps_l, "leakage"))

    # ratio: psi(tau, eps) <= 1 + tangent of |h_c^H w1|^2
    Ppsi, qpsi, rpsi = psi_quadratic_scaled(tau_l, eps_l)
    fc = quadform_linearize(w1l, hc)
    s = tau_l * eps_l
    P = np.zeros((n, n))
    P[ts, ts] = Ppsi
    q = np.zeros(n)
    q[ts] = qpsi
    q[i1] = -lift_linear(fc.g) / s
    cons.append(qcqp.QuadraticConstraint(P, q, rpsi - (1.0 + fc.const) / s, "ratio"))

    # rates: L (|h^H w1|^2 + 1) <= tangent of |h^H w2|^2
    for name, h, L in (("rate_c", hc, thresholds[0]), ("rate_e", he, thresholds[1])):
        fk = quadform_linearize(w2l, h)
        s = L * (abs(np.vdot(h, w1l)) ** 2 + 1.0)
        P = np.zeros((n, n))
        P[i1, i1] = L * lift_hermitian_form(np.outer(h, h.conj())) / s
        q = np.zeros(n)
        q[i2] = -lift_linear(fk.g) / s
        cons.append(qcqp.QuadraticConstraint(P, q, (L - fk.const) / s, name))

    P = np.zeros((n, n))
    P[: 4 * M, : 4 * M] = np.eye(4 * M)
    cons.append(qcqp.QuadraticConstraint(P, np.zeros(n), -1.0, "power"))

    c = np.zeros(n)
    c[it] = 1.0
    lower = np.full(n, -np.inf)
    lower[it] = lower[ie] = 0.0
    problem = qcqp.QcqpProblem(c, cons, lower=lower)
    hint = np.concatenate([w1l.real, w1l.imag, w2l.real, w2l.imag, [1.0, 1.0]])
    return problem, hint


def _unpack(x, M):
    """Beams and the relative slacks ``(tau / tau_l, eps / eps_l)``."""
    w1 = x[:M] + 1j * x[M:2 * M]
    w2 = x[2 * M:3 * M] + 1j * x[3 * M:4 * M]
    return w1, w2, x[4 * M], x[4 * M + 1]


def build_subproblem(iterate: BeamformingIterate, layout: AntennaLayout, realization: ChannelRealization,
                     params: SystemParams):
    """Subproblem around ``iterate`` in normalized units; returns ``(QcqpProblem, hint)``.

    The hint is the expansion point itself (feasible, with the ratio and
    leakage constraints active).
    """
    hc, he = normalized_channels(layout, realization, params)
    if len(hc) != len(iterate.beams.w1):
        raise ValueError(f"beams have {len(iterate.beams.w1)} entries, layout {len(hc)} antennas")
    s = 1.0 / math.sqrt(params.max_power)
    return _subproblem(iterate.beams.w1 * s, iterate.beams.w2 * s, iterate.slack.tau, iterate.slack.eps,
                       hc, he, (params.sinr_threshold("c"), params.sinr_threshold("e")))


def tight_slack(beams: BeamformingPair, layout: AntennaLayout, realization: ChannelRealization,
                params: SystemParams) -> SlackState:
    """``eps = 1 + |h_e^H w1|^2`` and ``tau`` the exact ratio (normalized units)."""
    hc, he = normalized_channels(layout, realization, params)
    w1 = beams.w1 / math.sqrt(params.max_power)
    eps = 1.0 + abs(np.vdot(he, w1)) ** 2
    return SlackState(_ratio(w1, hc, he), eps)


def run_sca(beams: BeamformingPair, layout: AntennaLayout, realization: ChannelRealization,
            params: SystemParams, tol: float = 1e-4, max_outer: int = 50,
            solver_tol: float = 1e-8) -> BeamformingIterate:
    """Iterate the convex restriction until the relative gain in ``tau`` drops below ``tol``.

    Each accepted iterate is re-expanded at its exact slacks, so the recorded
    ``tau`` trace is the true secrecy ratio and never decreases.
    """
    hc, he = normalized_channels(layout, realization, params)
    L = (params.sinr_threshold("c"), params.sinr_threshold("e"))
    M = len(hc)
    scale = math.sqrt(params.max_power)
    w1, w2 = beams.w1 / scale, beams.w2 / scale
    tau = _ratio(w1, hc, he)
    eps = 1.0 + abs(np.vdot(he, w1)) ** 2
    stats = SolverStats()
    trace = [tau]
    status = "max_iter"
    it = 0
    for it in range(1, max_outer + 1):
        problem, hint = _subproblem(w1, w2, tau, eps, hc, he, L)
        sol = qcqp.solve(problem, tol=solver_tol, x0=hint)
        stats.record(sol)
        if sol.status == "infeasible" or (sol.phase1_slack is not None and sol.phase1_slack >= 0):
            status = "infeasible" if it == 1 else "stalled"
            it -= 1
            break
        n1, n2, _, _ = _unpack(sol.x, M)
        tau_new = _ratio(n1, hc, he)
        ok = (tau_new >= tau
              and min(_sinr_margins(n1, n2, (hc, he), L)) >= -FEASIBILITY_TOL
              and np.vdot(n1, n1).real + np.vdot(n2, n2).real <= 1.0 + FEASIBILITY_TOL)
        if not ok:
            status = "stalled"
            it -= 1
            break
        gain = (tau_new - tau) / tau
        w1, w2, tau = n1, n2, tau_new
        eps = 1.0 + abs(np.vdot(he, w1)) ** 2
        trace.append(tau)
        if gain < tol:
            status = "converged"
            break
    return BeamformingIterate(BeamformingPair(w1 * scale, w2 * scale), SlackState(tau, eps), it, tau,
                              trace, status, stats)
