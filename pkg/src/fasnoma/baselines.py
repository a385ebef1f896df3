"""Reference schemes: fixed and random antenna positions, an OMA construction, and a grid oracle."""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .ao import AoOptions, AoResult, TraceEntry, optimize
from .beamforming import SolverStats, channel_scale, normalized_channels
from .geometry import (AntennaLayout, ChannelRealization, SystemParams, grid_layout, linear_layout,
                       random_layout)
from .positions import sweep
from .rates import BeamformingPair, SolutionCandidate, check_feasibility, secrecy_rate


class BaselineKind(str, enum.Enum):
    FAS_NOMA = "FAS-NOMA"
    FPA = "FPA"
    RPA = "RPA"
    OMA_FAS = "OMA-FAS"
    GRID_ORACLE = "GridOracle"


OMA_LABEL = "OMA (constructed)"


def _beams_only(options: Optional[AoOptions], layout: AntennaLayout) -> AoOptions:
    return replace(options or AoOptions(), optimize_positions=False, initial_layout=layout)


def run_fpa(realization: ChannelRealization, params: SystemParams,
            options: Optional[AoOptions] = None) -> AoResult:
    """Uniform linear array at spacing ``D`` from the region corner; beams optimized."""
    layout = linear_layout(params.region, params.num_antennas, params.min_spacing)
    return optimize(realization, params, _beams_only(options, layout), label=BaselineKind.FPA.value)


def run_rpa(realization: ChannelRealization, params: SystemParams, rng: np.random.Generator,
            num_draws: int = 1, options: Optional[AoOptions] = None) -> AoResult:
    """Random feasible layouts (rejection sampled); best of ``num_draws`` after beam optimization."""
    if num_draws < 1:
        raise ValueError("num_draws must be >= 1")
    best = None
    for _ in range(num_draws):
        layout = random_layout(params.region, params.num_antennas, params.min_spacing, rng)
        res = optimize(realization, params, _beams_only(options, layout), label=BaselineKind.RPA.value)
        if best is None or _better(res, best):
            best = res
    return best


def _better(a: AoResult, b: AoResult) -> bool:
    if math.isnan(b.secrecy_rate):
        return not math.isnan(a.secrecy_rate)
    return not math.isnan(a.secrecy_rate) and a.secrecy_rate > b.secrecy_rate


def secrecy_beam(hc, he) -> tuple:
    """Unit-power beam maximizing ``(1 + |hc^H w|^2) / (1 + |he^H w|^2)`` (normalized units).

    This is the principal generalized eigenvector of ``(I + hc hc^H, I + he he^H)``.
    Returns ``(w, ratio)``.
    """
    M = len(hc)
    A = np.eye(M) + np.outer(hc, hc.conj())
    B = np.eye(M) + np.outer(he, he.conj())
    # B = I + he he^H, so B^{-1/2} has a closed form
    ne2 = float(np.vdot(he, he).real)
    if ne2 > 0:
        u = he / math.sqrt(ne2)
        B_isqrt = np.eye(M) + (1.0 / math.sqrt(1.0 + ne2) - 1.0) * np.outer(u, u.conj())
    else:
        B_isqrt = np.eye(M)
    C = B_isqrt @ A @ B_isqrt
    evals, evecs = np.linalg.eigh(0.5 * (C + C.conj().T))
    w = B_isqrt @ evecs[:, -1]
    w = w / np.linalg.norm(w)
    ratio = (1.0 + abs(np.vdot(hc, w)) ** 2) / (1.0 + abs(np.vdot(he, w)) ** 2)
    return w, float(ratio)


def run_oma(realization: ChannelRealization, params: SystemParams,
            options: Optional[AoOptions] = None) -> AoResult:
    """Two equal time slots; the reported secrecy rate is half the slot-1 secrecy rate.

    Slot 1 serves only the CU with full power: the beam is the generalized
    eigenvector solution and the layout is refined by position sweeps without
    rate constraints, alternating until the gain drops below ``outer_tol``.
    Slot 2 serves the CEU at rate ``2 r``; its feasibility under MRT at the final
    layout is reported in ``flags['slot2']``.
    """
    opts = options or AoOptions()
    t0 = time.perf_counter()
    layout = opts.initial_layout or grid_layout(params.region, params.num_antennas, params.min_spacing)
    scale = math.sqrt(params.max_power)
    stats = SolverStats()
    trace = []
    status = "max_iter"
    w = None
    outer = 0
    for outer in range(1, opts.max_outer + 1):
        hc, he = normalized_channels(layout, realization, params)
        w_new, ratio = secrecy_beam(hc, he)
        if w is None or ratio >= trace[-1].tau:
            w = w_new
        else:
            ratio = trace[-1].tau
        rate_start = trace[-1].secrecy_rate if trace else -math.inf
        trace.append(TraceEntry(outer, "beams", ratio, 0.5 * math.log2(ratio)))
        if not opts.optimize_positions:
            status = "converged"
            break
        beams = BeamformingPair(w * scale, np.zeros_like(w))
        ps = sweep(layout, beams, realization, params, tol=opts.sweep_tol, max_sweeps=opts.max_sweeps,
                   order=opts.sweep_order, rng=np.random.default_rng(outer), rate_constraints=False,
                   solver_tol=opts.solver_tol)
        stats.merge(ps.stats)
        if ps.objective >= ratio:
            layout = ps.layout
            trace.append(TraceEntry(outer, "positions", ps.objective, 0.5 * math.log2(ps.objective)))
        if trace[-1].secrecy_rate - rate_start < opts.outer_tol:
            status = "converged"
            break

    beams = BeamformingPair(w * scale, np.zeros_like(w))
    candidate = SolutionCandidate(layout, beams)
    report = check_feasibility(candidate, realization, params, tol=1e-6)
    flags = {k: report.flags[k] for k in ("power", "region", "spacing")}
    flags["slot2"] = oma_slot2_feasible(layout, realization, params)
    rs = 0.5 * secrecy_rate(candidate, realization, params)
    return AoResult(candidate, rs, trace, status, time.perf_counter() - t0, stats, [], outer, False,
                    OMA_LABEL, flags)


def oma_slot2_feasible(layout: AntennaLayout, realization: ChannelRealization, params: SystemParams) -> bool:
    """``log2(1 + P |h_e|^2 / noise) >= 2 r`` with an MRT beam toward the CEU."""
    _, he = normalized_channels(layout, realization, params)
    return math.log2(1.0 + float(np.vdot(he, he).real)) >= 2.0 * params.threshold("e")


@dataclass
class OracleResult:
    layout: AntennaLayout
    objective: float  # true secrecy ratio
    secrecy_rate: float
    evaluated: int


def _lattice(params: SystemParams, step: float) -> np.ndarray:
    reg = params.region
    nx = int(math.floor(reg.width / step + 1e-9)) + 1
    ny = int(math.floor(reg.height / step + 1e-9)) + 1
    xs = reg.x_lo + step * np.arange(nx)
    ys = reg.y_lo + step * np.arange(ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


def _entries(pts, realization: ChannelRealization, user: str, wavelength: float) -> np.ndarray:
    """Per-antenna channel entry ``g(t)^H a`` at every point."""
    dirs = realization.angles.directions(user)
    g = np.exp(2j * math.pi * (pts @ dirs.T) / wavelength)
    return g.conj() @ realization.path_gains(user)


def grid_oracle(realization: ChannelRealization, params: SystemParams, beams: BeamformingPair,
                grid_step: Optional[float] = None, chunk: int = 512) -> OracleResult:
    """Exhaustive lattice search over antenna positions with the beams fixed (``M <= 2``).

    Candidates must satisfy the spacing and both rate constraints; the objective
    is the true secrecy ratio.  Cost grows as ``(points)^M``.
    """
    M = params.num_antennas
    if M > 2:
        raise ValueError(f"grid oracle supports M <= 2, got {M}")
    if len(beams.w1) != M:
        raise ValueError("beam length does not match the antenna count")
    step = params.wavelength / 50 if grid_step is None else grid_step
    pts = _lattice(params, step)
    s = channel_scale(params)
    w1 = beams.w1 / math.sqrt(params.max_power)
    w2 = beams.w2 / math.sqrt(params.max_power)
    ent = {k: s * _entries(pts, realization, k, params.wavelength) for k in ("c", "e")}
    L = {k: params.sinr_threshold(k) for k in ("c", "e")}
    tol = 1e-9

    if M == 1:
        g1 = {k: np.abs(ent[k] * w1[0]) ** 2 for k in ent}
        g2 = {k: np.abs(ent[k] * w2[0]) ** 2 for k in ent}
        ok = np.ones(len(pts), dtype=bool)
        for k in ent:
            ok &= g2[k] - L[k] * (g1[k] + 1.0) >= -tol
        ratio = np.where(ok, (1.0 + g1["c"]) / (1.0 + g1["e"]), -np.inf)
        i = int(np.argmax(ratio))
        best = (float(ratio[i]), AntennaLayout(pts[i:i + 1]))
    else:
        best = (-math.inf, None)
        D = params.min_spacing
        for a in range(0, len(pts), chunk):
            sl = slice(a, a + chunk)
            ok = np.hypot(pts[sl, 0:1] - pts[None, :, 0], pts[sl, 1:2] - pts[None, :, 1]) >= D - tol
            g1, g2 = {}, {}
            for k in ent:
                # h^H w with h_m = entry(t_m): sum_m conj(h_m) w_m
                g1[k] = np.abs(np.conj(ent[k][sl, None]) * w1[0] + np.conj(ent[k][None, :]) * w1[1]) ** 2
                g2[k] = np.abs(np.conj(ent[k][sl, None]) * w2[0] + np.conj(ent[k][None, :]) * w2[1]) ** 2
                ok &= g2[k] - L[k] * (g1[k] + 1.0) >= -tol
            ratio = np.where(ok, (1.0 + g1["c"]) / (1.0 + g1["e"]), -np.inf)
            idx = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
            if ratio[idx] > best[0]:
                best = (float(ratio[idx]), AntennaLayout(np.array([pts[a + idx[0]], pts[idx[1]]])))
    objective, layout = best
    if layout is None or not math.isfinite(objective):
        raise ValueError("no lattice point satisfies the constraints")
    return OracleResult(layout, objective, math.log2(objective), len(pts) ** M)
