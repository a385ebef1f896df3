"""Tangent upper/lower bounds used by the beamforming and antenna-position updates.

Quadratic forms in the layout are written ``F(t) = sum_ij Xi_ij g(t_i)^H V g(t_j)``
with ``Xi`` Hermitian (``Xi_ij = conj(w_i) w_j`` for a beam ``w``).  Holding all
antennas but ``m`` fixed, ``F`` is bounded by ``2 Re{row . g(t_m)} + const``: the
cross terms are exact and the diagonal term ``Xi_mm g^H V g`` is either
linearized (convex side) or replaced by the eigenvalue majorizer ``Phi = lambda_max I``
(concave side).  The remaining trigonometric sum is then bounded by a quadratic
in ``t_m`` with curvature ``16 pi^2 / lambda^2 * sum_p |row_p|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .geometry import AntennaLayout, ChannelRealization, response_matrix
from .linalg import max_eigenvalue
from .rates import BeamformingPair


@dataclass(frozen=True)
class SlackState:
    tau: float
    eps: float

    def __post_init__(self):
        if self.tau < 0 or self.eps < 0:
            raise ValueError(f"slacks must be nonnegative, got {self}")


def psi_bilinear_upper(tau, eps, tau_l, eps_l):
    """Convex upper bound of ``tau * eps``, tangent at ``(tau_l, eps_l)``."""
    a = tau_l - eps_l
    return 0.25 * (tau + eps) ** 2 - 0.25 * a**2 - 0.5 * a * (tau - tau_l - eps + eps_l)


def psi_quadratic(tau_l: float, eps_l: float):
    """``psi`` as ``(P, q, r)`` over the variables ``(tau, eps)``."""
    a = tau_l - eps_l
    P = 0.25 * np.ones((2, 2))
    q = np.array([-0.5 * a, 0.5 * a])
    return P, q, 0.25 * a * a


def psi_quadratic_scaled(tau_l: float, eps_l: float):
    """``psi / (tau_l eps_l)`` over the relative slacks ``(tau / tau_l, eps / eps_l)``.

    Both slacks equal 1 at the expansion point, where the value is 1.
    """
    P, q, r = psi_quadratic(tau_l, eps_l)
    d = np.array([tau_l, eps_l])
    s = tau_l * eps_l
    return P * np.outer(d, d) / s, q * d / s, r / s


@dataclass(frozen=True)
class AffineForm:
    """``w -> 2 Re{g^H w} + const``."""

    g: np.ndarray
    const: float

    def __call__(self, w) -> float:
        return 2.0 * float(np.real(np.vdot(self.g, w))) + self.const


def quadform_linearize(w_ref, h) -> AffineForm:
    """Tangent minorizer of ``|h^H w|^2`` at ``w_ref``."""
    h = np.asarray(h, dtype=complex)
    w_ref = np.asarray(w_ref, dtype=complex)
    inner = np.vdot(h, w_ref)
    return AffineForm(h * inner, -float(abs(inner) ** 2))


class TrigForm:
    """``T(t) = 2 Re{row . g(t)} = sum_p 2 |row_p| cos(2 pi u_p . t / lambda + arg row_p)``."""

    def __init__(self, row, directions, wavelength: float):
        self.row = np.asarray(row, dtype=complex)
        self.directions = np.asarray(directions, dtype=float)
        self.wavelength = wavelength
        self._k = 2.0 * math.pi / wavelength

    def phases(self, t) -> np.ndarray:
        return self._k * (self.directions @ np.asarray(t, dtype=float)) + np.angle(self.row)

    def value(self, t) -> float:
        return float(2.0 * np.abs(self.row) @ np.cos(self.phases(t)))

    def values(self, pts) -> np.ndarray:
        """Vectorized ``value`` over an ``(N, 2)`` array of points."""
        ph = self._k * (np.asarray(pts, dtype=float) @ self.directions.T) + np.angle(self.row)
        return 2.0 * np.cos(ph) @ np.abs(self.row)

    def gradient(self, t) -> np.ndarray:
        s = np.abs(self.row) * np.sin(self.phases(t))
        return -2.0 * self._k * (s @ self.directions)

    @property
    def curvature(self) -> float:
        return 16.0 * math.pi**2 / self.wavelength**2 * float(np.abs(self.row).sum())


@dataclass(frozen=True)
class TaylorBound:
    """Quadratic minorizer (``-curvature/2``) or majorizer (``+curvature/2``) of ``form`` at ``point``."""

    kind: str
    point: np.ndarray
    value: float
    gradient: np.ndarray
    curvature: float
    form: TrigForm

    @classmethod
    def expand(cls, form: TrigForm, point, kind: str) -> "TaylorBound":
        if kind not in ("minorizer", "majorizer"):
            raise ValueError(kind)
        point = np.asarray(point, dtype=float)
        return cls(kind, point, form.value(point), form.gradient(point), form.curvature, form)

    @property
    def sign(self) -> float:
        return -1.0 if self.kind == "minorizer" else 1.0

    def __call__(self, t) -> float:
        d = np.asarray(t, dtype=float) - self.point
        return self.value + self.gradient @ d + self.sign * 0.5 * self.curvature * (d @ d)

    def evaluate_many(self, pts) -> np.ndarray:
        d = np.asarray(pts, dtype=float) - self.point
        return self.value + d @ self.gradient + self.sign * 0.5 * self.curvature * np.sum(d * d, axis=1)

    def exact(self, t) -> float:
        return self.form.value(t)

    def quadratic(self, scale: float = 1.0):
        """``(P, q, r)`` of the bound in coordinates ``s = t / scale`` (2 variables)."""
        p0 = self.point / scale
        g = self.gradient * scale
        c = self.curvature * scale**2
        sgn = self.sign
        P = sgn * 0.5 * c * np.eye(2)
        q = g - sgn * c * p0
        r = self.value - g @ p0 + sgn * 0.5 * c * (p0 @ p0)
        return P, q, r


def beam_coupling(w) -> np.ndarray:
    """``Xi_ij = conj(w_i) w_j``."""
    w = np.asarray(w, dtype=complex)
    return np.outer(w.conj(), w)


class QuadFormCache:
    """Per-layout quantities for the position update: ``V_k``, ``lambda_max``, ``G_k``, couplings."""

    def __init__(self, beams: BeamformingPair, layout: AntennaLayout, realization: ChannelRealization,
                 wavelength: float, lam_max: Optional[Dict[str, float]] = None):
        self.beams = beams
        self.layout = layout
        self.wavelength = wavelength
        self.directions = {k: realization.angles.directions(k) for k in ("c", "e")}
        self.V = {}
        self.G = {}
        self.H = {}
        self.GV = {}
        for k in ("c", "e"):
            a = realization.path_gains(k)
            self.V[k] = np.outer(a, a.conj())
            self.G[k] = response_matrix(layout, realization.angles, k, wavelength)
            self.GV[k] = self.G[k].conj().T @ self.V[k]
            self.H[k] = self.GV[k] @ self.G[k]
        if lam_max is None:
            lam_max = {k: max(max_eigenvalue(self.V[k]), 0.0) for k in ("c", "e")}
        self.lam_max = dict(lam_max)
        self.xi = {1: beam_coupling(beams.w1), 2: beam_coupling(beams.w2)}

    @property
    def num_paths(self) -> int:
        return self.G["c"].shape[0]

    @property
    def lam_max_e(self) -> float:
        return self.lam_max["e"]

    def mu(self, sinr_threshold: float) -> np.ndarray:
        """Coupling of ``d_{k,2} - L_r d_{k,1}``."""
        return self.xi[2] - sinr_threshold * self.xi[1]

    def form_value(self, Xi, user: str) -> float:
        """``sum_ij Xi_ij g_i^H V g_j`` at the cached layout."""
        return float(np.real(np.sum(Xi * self.H[user])))

    def response(self, user: str, point) -> np.ndarray:
        return np.exp(2j * math.pi * (self.directions[user] @ np.asarray(point, dtype=float)) / self.wavelength)

    def form_value_moved(self, Xi, user: str, m: int, point) -> float:
        """Exact form with antenna ``m`` moved to ``point``, others at the cached layout."""
        G = self.G[user].copy()
        G[:, m] = self.response(user, point)
        return float(np.real(np.sum(Xi * (G.conj().T @ self.V[user] @ G))))

    def forms_moved_many(self, Xi, user: str, m: int, pts) -> np.ndarray:
        """``form_value_moved`` over an ``(N, 2)`` array of points."""
        pts = np.asarray(pts, dtype=float)
        G = self.G[user]
        V = self.V[user]
        rest = [i for i in range(G.shape[1]) if i != m]
        W0 = float(np.real(np.sum(Xi[np.ix_(rest, rest)] * self.H[user][np.ix_(rest, rest)])))
        g = np.exp(2j * math.pi * (pts @ self.directions[user].T) / self.wavelength)  # N x Lt
        row = Xi[rest, m] @ (G[:, rest].conj().T @ V)
        cross = 2.0 * np.real(g @ row)
        diag = Xi[m, m].real * np.real(np.einsum("np,pq,nq->n", g.conj(), V, g))
        return W0 + cross + diag

    def coupling_bound(self, Xi, user: str, m: int, point, sense: str):
        """``(row, const)`` with ``F(t_m) >= 2Re{row g(t_m)} + const`` (``sense='lower'``) or ``<=`` (``'upper'``).

        Tight at ``t_m = point``.
        """
        V = self.V[user]
        H = self.H[user]
        xmm = float(np.real(Xi[m, m]))
        # sum over i, j != m, using the Hermitian symmetry of Xi and H
        W0 = float(np.real(np.sum(Xi * H)) - 2.0 * np.real(Xi[m] @ H[m]) + xmm * np.real(H[m, m]))
        row = Xi[:, m] @ self.GV[user] - Xi[m, m] * self.GV[user][m]
        g_l = self.response(user, point)
        gV = g_l.conj() @ V
        gVg = float(np.real(gV @ g_l))
        tangent = (xmm >= 0.0) == (sense == "lower")
        if sense not in ("lower", "upper"):
            raise ValueError(sense)
        if tangent:
            # g^H V g >= 2Re{g_l^H V g} - g_l^H V g_l, scaled by xmm
            row = row + xmm * gV
            const = W0 - xmm * gVg
        else:
            # g^H V g <= g_l^H (Phi - V) g_l + L_t lam - 2Re{g_l^H (Phi - V) g}
            lam = self.lam_max[user]
            row = row - xmm * (lam * g_l.conj() - gV)
            const = W0 + xmm * (2.0 * self.num_paths * lam - gVg)
        return row, const

    def trig_form(self, row, user: str) -> TrigForm:
        return TrigForm(row, self.directions[user], self.wavelength)


def build_quadform_cache(beams: BeamformingPair, layout: AntennaLayout, realization: ChannelRealization,
                         wavelength: float, lam_max=None) -> QuadFormCache:
    return QuadFormCache(beams, layout, realization, wavelength, lam_max)


def layout_form_bound(cache: QuadFormCache, Xi, user: str, m: int, point, sense: str):
    """Quadratic bound of ``F(t_m)``: returns ``(TaylorBound, const)``; bound value is ``tb(t) + const``."""
    row, const = cache.coupling_bound(Xi, user, m, point, sense)
    kind = "minorizer" if sense == "lower" else "majorizer"
    return TaylorBound.expand(cache.trig_form(row, user), point, kind), const


def coupling_row_Q(cache: QuadFormCache, m: int, point, user: str, q: int):
    """``Q_{k,q} = xi_m^q G_k(t^(l))^H V_k`` and ``W_{k,q}^m`` for beam ``q``."""
    return cache.coupling_bound(cache.xi[q], user, m, point, "lower")


def position_minorizer(cache: QuadFormCache, m: int, point, user: str, q: int) -> TaylorBound:
    """Quadratic minorizer of ``b_{k,q}(t_m) = 2 Re{Q_{k,q} g_k(t_m)}`` at ``point``."""
    row, _ = coupling_row_Q(cache, m, point, user, q)
    return TaylorBound.expand(cache.trig_form(row, user), point, "minorizer")


def eigen_majorizer_value(V, lam_max: float, g_l, g) -> float:
    """Upper bound of ``g^H V g`` tangent at ``g_l`` using ``Phi = lam_max I`` (unit-modulus ``g``)."""
    g_l = np.asarray(g_l, dtype=complex)
    g = np.asarray(g, dtype=complex)
    D = lam_max * np.eye(len(g_l)) - V
    return float(np.real(np.vdot(g_l, D @ g_l) + lam_max * np.vdot(g, g) - 2.0 * np.vdot(g_l, D @ g)))


def eigen_majorizer(cache: QuadFormCache, point_l, point, user: str = "e") -> float:
    return eigen_majorizer_value(cache.V[user], cache.lam_max[user],
                                 cache.response(user, point_l), cache.response(user, point))


def position_majorizer_ceu(cache: QuadFormCache, m: int, point):
    """Majorizer of ``c_{e,1}(t_m) = 2 Re{D_{e,1} g_e(t_m)}``; returns ``(TaylorBound, const)``.

    ``const`` is ``2 L_t lambda_max xi_mm + W_{e,1}^m`` so that
    ``d_{e,1}(t_m) <= bound(t_m) + const``.
    """
    return layout_form_bound(cache, cache.xi[1], "e", m, point, "upper")


@dataclass(frozen=True)
class DistanceCut:
    """Affine lower bound ``normal . (t - anchor)`` of ``||t - anchor||``."""

    normal: np.ndarray
    anchor: np.ndarray

    def __call__(self, t) -> float:
        return float(self.normal @ (np.asarray(t, dtype=float) - self.anchor))


def distance_linearize(point_l, anchor) -> DistanceCut:
    point_l = np.asarray(point_l, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    d = point_l - anchor
    norm = math.hypot(d[0], d[1])
    if norm == 0.0:
        raise ValueError("expansion point coincides with the neighbouring antenna")
    return DistanceCut(d / norm, anchor)
