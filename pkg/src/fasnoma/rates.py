"""NOMA rates, secrecy rate and constraint audit for a candidate (layout, beams) pair.

The CEU signal ``s2`` is decoded first at both users treating ``s1`` as noise;
after SIC, ``s1`` is decoded interference-free.  The secrecy rate of ``s1`` is the
CU rate minus the CEU (eavesdropper) rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import AntennaLayout, ChannelRealization, SystemParams, synthesize_channel


@dataclass(frozen=True)
class BeamformingPair:
    w1: np.ndarray
    w2: np.ndarray

    def __post_init__(self):
        w1 = np.array(self.w1, dtype=complex).ravel()
        w2 = np.array(self.w2, dtype=complex).ravel()
        if w1.shape != w2.shape:
            raise ValueError("w1 and w2 must have the same length")
        w1.setflags(write=False)
        w2.setflags(write=False)
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "w2", w2)

    @property
    def power(self) -> float:
        return float(np.vdot(self.w1, self.w1).real + np.vdot(self.w2, self.w2).real)

    def scaled(self, factor: float) -> "BeamformingPair":
        return BeamformingPair(self.w1 * factor, self.w2 * factor)


@dataclass(frozen=True)
class SolutionCandidate:
    layout: AntennaLayout
    beams: BeamformingPair


@dataclass
class RateReport:
    R_c1: float
    R_e1: float
    R_c2: float
    R_e2: float
    R_s: float
    # constraint value minus bound; >= 0 means satisfied
    margins: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return all(self.flags.values())


def _gains(candidate: SolutionCandidate, realization: ChannelRealization, params: SystemParams, user: str):
    h = synthesize_channel(candidate.layout, realization, user, params.wavelength)
    g1 = abs(np.vdot(h, candidate.beams.w1)) ** 2
    g2 = abs(np.vdot(h, candidate.beams.w2)) ** 2
    return g1, g2


def rate_s2(candidate: SolutionCandidate, realization: ChannelRealization, params: SystemParams,
            user: str) -> float:
    g1, g2 = _gains(candidate, realization, params, user)
    return math.log2(1.0 + g2 / (params.noise_power + g1))


def rate_s1(candidate: SolutionCandidate, realization: ChannelRealization, params: SystemParams,
            user: str) -> float:
    g1, _ = _gains(candidate, realization, params, user)
    return math.log2(1.0 + g1 / params.noise_power)


def secrecy_rate(candidate: SolutionCandidate, realization: ChannelRealization,
                 params: SystemParams) -> float:
    """``R_c1 - R_e1``; negative values are returned unclamped."""
    return rate_s1(candidate, realization, params, "c") - rate_s1(candidate, realization, params, "e")


def secrecy_ratio(candidate: SolutionCandidate, realization: ChannelRealization,
                  params: SystemParams) -> float:
    """``(noise + |h_c^H w1|^2) / (noise + |h_e^H w1|^2)``; its log2 is the secrecy rate."""
    gc, _ = _gains(candidate, realization, params, "c")
    ge, _ = _gains(candidate, realization, params, "e")
    return (params.noise_power + gc) / (params.noise_power + ge)


def check_feasibility(candidate: SolutionCandidate, realization: ChannelRealization,
                      params: SystemParams, tol: float = 0.0) -> RateReport:
    """Evaluate rates and every constraint family of the secrecy-rate problem.

    Margins: ``rate_k`` in bps/Hz, ``sinr_k`` (threshold form, normalized by the
    noise power), ``power`` in watts, ``region`` and ``spacing`` in meters.
    """
    noise = params.noise_power
    rates = {}
    margins = {}
    for k in ("c", "e"):
        g1, g2 = _gains(candidate, realization, params, k)
        rates[k + "1"] = math.log2(1.0 + g1 / noise)
        rates[k + "2"] = math.log2(1.0 + g2 / (noise + g1))
        margins["rate_" + k] = rates[k + "2"] - params.threshold(k)
        margins["sinr_" + k] = (g2 - params.sinr_threshold(k) * (g1 + noise)) / noise
    margins["power"] = params.max_power - candidate.beams.power
    margins["region"] = params.region.margin(candidate.layout.positions)
    spacing = candidate.layout.min_pairwise_distance()
    margins["spacing"] = (spacing - params.min_spacing) if math.isfinite(spacing) else math.inf
    flags = {
        "rate_c": margins["rate_c"] >= -tol,
        "rate_e": margins["rate_e"] >= -tol,
        "power": margins["power"] >= -tol * params.max_power,
        "region": margins["region"] >= -tol,
        "spacing": margins["spacing"] >= -tol,
    }
    return RateReport(rates["c1"], rates["e1"], rates["c2"], rates["e2"],
                      rates["c1"] - rates["e1"], margins, flags)
