"""Small dense convex QCQP solver (primal-dual interior point).

Problems have the form::

    maximize    c @ x
    subject to  x @ P_i @ x + q_i @ x + r_i <= 0     (P_i symmetric PSD)
                A_ub @ x <= b_ub
                A_eq @ x == b_eq
                lower <= x <= upper

A strictly feasible start is found by a phase-1 problem (minimize the common
slack ``s`` of ``f_i(x) <= s``); the primal-dual Newton iteration then follows the
central path with backtracking on the residual norm.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.linalg import lapack

MAX_DIM = 256
PSD_TOL = 1e-9
INFEASIBLE_SLACK = 1e-6
# starts closer to the boundary than this go through phase 1
INTERIOR_MARGIN = 1e-9
# a step may consume at most this share of any inequality's slack
BOUNDARY_KEEP = 0.01


@dataclass
class QuadraticConstraint:
    """``x @ P @ x + q @ x + r <= 0``."""

    P: np.ndarray
    q: np.ndarray
    r: float
    name: str = ""


class QcqpProblem:
    def __init__(self, objective, quadratic: Sequence[QuadraticConstraint] = (),
                 A_ub=None, b_ub=None, A_eq=None, b_eq=None, lower=None, upper=None,
                 ub_names: Optional[Sequence[str]] = None, max_dim: int = MAX_DIM,
                 psd_tol: float = PSD_TOL):
        c = np.asarray(objective, dtype=float).ravel()
        n = c.shape[0]
        if n < 1 or n > max_dim:
            raise ValueError(f"dimension {n} outside [1, {max_dim}]")
        self.n = n
        self.objective = c

        quadratic = list(quadratic)
        self.quad_names = [qc.name or f"quad{i}" for i, qc in enumerate(quadratic)]
        self.P = np.zeros((len(quadratic), n, n))
        self.q = np.zeros((len(quadratic), n))
        self.r = np.zeros(len(quadratic))
        for i, qc in enumerate(quadratic):
            P = np.asarray(qc.P, dtype=float)
            if P.shape != (n, n):
                raise ValueError(f"constraint {self.quad_names[i]!r}: P has shape {P.shape}, expected {(n, n)}")
            self.P[i] = P
            self.q[i] = np.asarray(qc.q, dtype=float).ravel()
            self.r[i] = float(qc.r)
        if quadratic:
            scale = np.maximum(np.abs(self.P).max(axis=(1, 2)), 1.0)
            asym = np.abs(self.P - self.P.transpose(0, 2, 1)).max(axis=(1, 2))
            for i in np.flatnonzero(asym > 1e-12 * scale):
                raise ValueError(f"constraint {self.quad_names[i]!r}: P is not symmetric")
            self.P = 0.5 * (self.P + self.P.transpose(0, 2, 1))
            floors = np.linalg.eigvalsh(self.P)[:, 0]
            for i in np.flatnonzero(floors < -psd_tol * scale):
                raise ValueError(f"constraint {self.quad_names[i]!r}: P is not PSD (min eig {floors[i]:.3e})")

        self.A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
        self.b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
        if self.A_ub.shape != (self.b_ub.shape[0], n):
            raise ValueError("A_ub / b_ub dimension mismatch")
        self.ub_names = list(ub_names) if ub_names is not None else [f"lin{i}" for i in range(len(self.b_ub))]
        self.A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
        self.b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
        if self.A_eq.shape != (self.b_eq.shape[0], n):
            raise ValueError("A_eq / b_eq dimension mismatch")
        self.lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float).ravel()
        self.upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float).ravel()
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

        # every inequality as rows of (P, q, r); bounds become linear rows
        lo = np.flatnonzero(np.isfinite(self.lower))
        hi = np.flatnonzero(np.isfinite(self.upper))
        eye = np.eye(n)
        self._Al = np.vstack([self.A_ub, -eye[lo], eye[hi]])
        self._bl = np.concatenate([self.b_ub, -self.lower[lo], self.upper[hi]])
        self.inequality_names = (self.quad_names + self.ub_names
                                 + [f"lower[{i}]" for i in lo] + [f"upper[{i}]" for i in hi])

    @property
    def num_inequalities(self) -> int:
        return self.P.shape[0] + self._Al.shape[0]

    def inequality_values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        fq = np.einsum("i,kij,j->k", x, self.P, x) + self.q @ x + self.r
        return np.concatenate([fq, self._Al @ x - self._bl])

    def inequality_jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.vstack([2.0 * (self.P @ x) + self.q, self._Al])

    def constraint_values(self, x) -> dict:
        return dict(zip(self.inequality_names, self.inequality_values(x)))

    def lagrangian_hessian(self, lam_quad) -> np.ndarray:
        return 2.0 * np.tensordot(lam_quad, self.P, axes=1)

    def to_dict(self) -> dict:
        """Plain structure for the debug dump; matrices are row-major nested lists, +-inf as null."""
        def vec(v):
            return [None if not math.isfinite(a) else float(a) for a in v]
        return {
            "format": "fasnoma-qcqp/1",
            "n": self.n,
            "objective_sense": "maximize",
            "objective": vec(self.objective),
            "quadratic": [
                {"name": nm, "P": self.P[i].tolist(), "q": vec(self.q[i]), "r": float(self.r[i])}
                for i, nm in enumerate(self.quad_names)
            ],
            "A_ub": self.A_ub.tolist(), "b_ub": vec(self.b_ub), "ub_names": list(self.ub_names),
            "A_eq": self.A_eq.tolist(), "b_eq": vec(self.b_eq),
            "lower": vec(self.lower), "upper": vec(self.upper),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QcqpProblem":
        def arr(v, fill):
            return np.array([fill if a is None else a for a in v], dtype=float)
        n = d["n"]
        return cls(
            np.array(d["objective"], dtype=float),
            [QuadraticConstraint(np.array(c["P"]), np.array(c["q"]), c["r"], c["name"]) for c in d["quadratic"]],
            A_ub=np.array(d["A_ub"], dtype=float).reshape(-1, n), b_ub=np.array(d["b_ub"], dtype=float),
            A_eq=np.array(d["A_eq"], dtype=float).reshape(-1, n), b_eq=np.array(d["b_eq"], dtype=float),
            lower=arr(d["lower"], -np.inf), upper=arr(d["upper"], np.inf), ub_names=d.get("ub_names"),
        )


def dump_problem(problem: QcqpProblem, path) -> None:
    with open(path, "w") as fh:
        json.dump(problem.to_dict(), fh, indent=1)


def load_problem(path) -> QcqpProblem:
    with open(path) as fh:
        return QcqpProblem.from_dict(json.load(fh))


@dataclass
class KKTReport:
    stationarity: float
    primal: float
    dual: float
    complementarity: float

    def max(self) -> float:
        return max(self.stationarity, self.primal, self.dual, self.complementarity)


@dataclass
class QcqpSolution:
    status: str  # "optimal" | "infeasible" | "max_iter"
    x: np.ndarray
    lam: np.ndarray
    nu: np.ndarray
    kkt: KKTReport
    objective: float
    dual_bound: float
    iterations: int
    phase1_slack: Optional[float] = None
    history: List[tuple] = field(default_factory=list)
    # residuals tracked inside the Newton loop (``kkt`` is recomputed by ``certify``)
    reported: Optional[KKTReport] = None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def certify(problem: QcqpProblem, solution: QcqpSolution) -> KKTReport:
    """KKT residuals recomputed from the problem data (infinity norms)."""
    x, lam, nu = solution.x, solution.lam, solution.nu
    f = problem.inequality_values(x)
    Df = problem.inequality_jacobian(x)
    grad = -problem.objective + Df.T @ lam + problem.A_eq.T @ nu
    eq = problem.A_eq @ x - problem.b_eq
    return KKTReport(
        stationarity=float(np.max(np.abs(grad), initial=0.0)),
        primal=float(max(np.max(f, initial=0.0), np.max(np.abs(eq), initial=0.0), 0.0)),
        dual=float(max(np.max(-lam, initial=0.0), 0.0)),
        complementarity=float(np.max(np.abs(lam * f), initial=0.0)),
    )


def dual_bound(problem: QcqpProblem, lam, nu) -> float:
    """Upper bound on the maximum from the Lagrange dual function (``inf`` when unbounded)."""
    kq = problem.P.shape[0]
    lq, ll = lam[:kq], lam[kq:]
    Q = np.tensordot(lq, problem.P, axes=1)
    lin = -problem.objective + lq @ problem.q + ll @ problem._Al + problem.A_eq.T @ nu
    const = lq @ problem.r - ll @ problem._bl - nu @ problem.b_eq
    if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(lin))):
        return math.inf
    try:
        evals, evecs = np.linalg.eigh(0.5 * (Q + Q.T))
    except np.linalg.LinAlgError:
        return math.inf
    coef = evecs.T @ lin
    cutoff = 1e-12 * max(1.0, float(np.abs(evals).max(initial=0.0)))
    null = evals <= cutoff
    if np.any(np.abs(coef[null]) > 1e-9 * (1.0 + np.linalg.norm(lin))):
        return math.inf
    rng = ~null
    g = const - 0.25 * float(np.sum(coef[rng] ** 2 / evals[rng]))
    return -g


class _Barrier:
    """Inequality data of either the original or the phase-1 problem, packed for the Newton loop."""

    def __init__(self, P, q, r, Al, bl, Aeq, beq, c):
        self.P, self.q, self.r, self.Al, self.bl = P, q, r, Al, bl
        self.Aeq, self.beq, self.c = Aeq, beq, c
        self.kq = P.shape[0]
        self.m = self.kq + Al.shape[0]
        self._Df = np.empty((self.m, P.shape[1]))
        self._Df[self.kq:] = Al
        self._Pflat = P.reshape(self.kq, -1)

    def values(self, x):
        f = np.empty(self.m)
        f[: self.kq] = (self.P @ x) @ x + self.q @ x + self.r
        f[self.kq:] = self.Al @ x - self.bl
        return f

    def jacobian(self, x):
        Df = self._Df.copy()
        Df[: self.kq] = 2.0 * (self.P @ x) + self.q
        return Df


def _newton_path(b: _Barrier, x, tol, max_iters, stop=None, problem=None, history=None):
    """Interior-point path with one restart.

    The barrier parameter first follows the surrogate duality gap alone.  That
    can stall against a curved boundary before the multipliers have grown, so an
    unconverged run restarts from ``x`` with residual-aware centering on the
    remaining iteration budget.
    """
    first = max_iters // 2
    out = _newton_run(b, x, tol, first, "gap", stop, problem, history)
    if out[4]:
        return out
    if history is not None:
        history.clear()
    rest = _newton_run(b, x, tol, max_iters - first, "residual", stop, problem, history)
    return rest[:3] + (first + rest[3],) + rest[4:]


def _newton_run(b: _Barrier, x, tol, max_iters, centering, stop=None, problem=None, history=None):
    """Primal-dual interior-point iterations from a strictly feasible ``x``.

    Returns ``(x, lam, nu, iterations, converged, residuals)`` where ``residuals``
    is the solver's own KKT report at the returned iterate.
    """
    mu, alpha, beta = 10.0, 0.01, 0.5
    n = x.shape[0]
    p = b.Aeq.shape[0]
    kq = b.kq
    f = b.values(x)
    lam = np.minimum(1.0 / -f, 1e8)
    nu = np.zeros(p)
    Df = b.jacobian(x)
    r_pri = b.Aeq @ x - b.beq
    r_dual = Df.T @ lam - b.c
    if p:
        r_dual += b.Aeq.T @ nu

    for it in range(max_iters):
        eta = -f @ lam
        if history is not None and problem is not None:
            history.append((float(problem.objective @ x), dual_bound(problem, lam, nu)))
        if stop is not None and stop(x, f):
            return x, lam, nu, it, True, _internal(f, lam, r_dual, r_pri)
        if eta <= tol and r_dual @ r_dual <= tol * tol and r_pri @ r_pri <= tol * tol:
            return x, lam, nu, it, True, _internal(f, lam, r_dual, r_pri)
        # centre on the larger of the surrogate gap and the dual residual, so the
        # barrier does not shrink while stationarity is still far off
        if centering == "gap":
            inv_t = eta / (mu * b.m)
        else:
            # also centre on the dual residual, so the barrier does not shrink
            # while stationarity is still far off
            inv_t = max(eta, math.sqrt(r_dual @ r_dual)) / (mu * b.m)
        r_cent = -lam * f - inv_t
        d = lam / -f
        H = Df.T @ (Df * d[:, None])
        if kq:
            H += (2.0 * lam[:kq] @ b._Pflat).reshape(n, n)
        rhs = -(r_dual + Df.T @ (r_cent / f))
        if p:
            K = np.block([[H, b.Aeq.T], [b.Aeq, np.zeros((p, p))]])
            rhs = np.concatenate([rhs, -r_pri])
        else:
            K = H
        _, _, step, info = lapack.dgesv(K, rhs)
        if info != 0:
            step = np.linalg.lstsq(K, rhs, rcond=None)[0]
        dx, dnu = step[:n], step[n:]
        dlam = (r_cent - lam * (Df @ dx)) / f

        neg = dlam < 0
        s = min(1.0, float((-lam[neg] / dlam[neg]).min())) if neg.any() else 1.0
        s *= 0.99
        res0 = math.sqrt(r_dual @ r_dual + r_cent @ r_cent + r_pri @ r_pri)
        for _ in range(60):
            x_new = x + s * dx
            f_new = b.values(x_new)
            # keep a fraction of every constraint's slack, like the 0.99 rule on lam
            if np.all(f_new <= BOUNDARY_KEEP * f):
                lam_new = lam + s * dlam
                Df_new = b.jacobian(x_new)
                rd = Df_new.T @ lam_new - b.c
                rp = r_pri
                if p:
                    nu_new = nu + s * dnu
                    rd += b.Aeq.T @ nu_new
                    rp = b.Aeq @ x_new - b.beq
                else:
                    nu_new = nu
                rc = -lam_new * f_new - inv_t
                if math.sqrt(rd @ rd + rc @ rc + rp @ rp) <= (1.0 - alpha * s) * res0:
                    break
            s *= beta
        else:
            return x, lam, nu, it, False, _internal(f, lam, r_dual, r_pri)
        x, lam, nu, f, Df, r_dual, r_pri = x_new, lam_new, nu_new, f_new, Df_new, rd, rp
    return x, lam, nu, max_iters, False, _internal(f, lam, r_dual, r_pri)


def _internal(f, lam, r_dual, r_pri) -> "KKTReport":
    return KKTReport(
        stationarity=float(np.abs(r_dual).max(initial=0.0)),
        primal=float(max(f.max(initial=0.0), np.abs(r_pri).max(initial=0.0), 0.0)),
        dual=float(max((-lam).max(initial=0.0), 0.0)),
        complementarity=float(np.abs(lam * f).max(initial=0.0)),
    )


def _phase1(problem: QcqpProblem, x0, tol, max_iters):
    """Find a strictly feasible point.  Returns ``(x, slack)``; ``slack < 0`` means success."""
    n = problem.n
    f0 = problem.inequality_values(x0)
    s0 = float(f0.max()) + max(1.0, abs(float(f0.max())))
    kq = problem.P.shape[0]
    P = np.zeros((kq, n + 1, n + 1))
    P[:, :n, :n] = problem.P
    q = np.hstack([problem.q, -np.ones((kq, 1))])
    Al = np.hstack([problem._Al, -np.ones((problem._Al.shape[0], 1))])
    Aeq = np.hstack([problem.A_eq, np.zeros((problem.A_eq.shape[0], 1))])
    c = np.zeros(n + 1)
    c[-1] = -1.0
    b = _Barrier(P, q, problem.r, Al, problem._bl, Aeq, problem.b_eq, c)
    target = -1e-3 * max(1.0, abs(s0))

    def stop(z, f):
        return z[-1] <= target and np.all(problem.inequality_values(z[:n]) < 0)

    z, *_ = _newton_path(b, np.append(np.asarray(x0, dtype=float), s0), tol, max_iters, stop=stop)
    x = z[:n]
    return x, float(problem.inequality_values(x).max())


def solve(problem: QcqpProblem, tol: float = 1e-8, max_iters: int = 200, x0=None,
          record_history: bool = False) -> QcqpSolution:
    """Solve ``problem``; ``x0`` is an optional initial-point hint (need not be feasible)."""
    n = problem.n
    if x0 is None:
        x0 = np.zeros(n)
        finite = np.isfinite(problem.lower) & np.isfinite(problem.upper)
        x0[finite] = 0.5 * (problem.lower[finite] + problem.upper[finite])
        only_lo = np.isfinite(problem.lower) & ~finite
        x0[only_lo] = problem.lower[only_lo] + 1.0
        only_hi = np.isfinite(problem.upper) & ~finite
        x0[only_hi] = problem.upper[only_hi] - 1.0
    x = np.array(x0, dtype=float)
    m = problem.num_inequalities
    empty_lam = np.zeros(m)
    empty_nu = np.zeros(problem.A_eq.shape[0])

    slack = None
    if m and not problem.inequality_values(x).max() < -INTERIOR_MARGIN:
        x, slack = _phase1(problem, x, tol, max_iters)
        if slack >= 0.0:
            status = "infeasible" if slack > INFEASIBLE_SLACK else "max_iter"
            sol = QcqpSolution(status, x, empty_lam, empty_nu, KKTReport(math.inf, slack, 0.0, 0.0),
                               float(problem.objective @ x), math.inf, 0, slack)
            return sol

    history = [] if record_history else None
    b = _Barrier(problem.P, problem.q, problem.r, problem._Al, problem._bl,
                 problem.A_eq, problem.b_eq, problem.objective)
    if m == 0 and problem.A_eq.shape[0] == 0:
        # unconstrained linear objective: bounded only if c == 0
        status = "optimal" if not np.any(problem.objective) else "max_iter"
        sol = QcqpSolution(status, x, empty_lam, empty_nu, KKTReport(0, 0, 0, 0), float(problem.objective @ x),
                           math.inf, 0, slack)
        sol.kkt = certify(problem, sol)
        return sol
    x, lam, nu, iters, converged, reported = _newton_path(b, x, tol, max_iters, problem=problem,
                                                          history=history)
    sol = QcqpSolution("max_iter", x, lam, nu, KKTReport(0, 0, 0, 0), float(problem.objective @ x),
                       dual_bound(problem, lam, nu), iters, slack, history or [], reported)
    sol.kkt = certify(problem, sol)
    if converged and sol.kkt.max() <= tol:
        sol.status = "optimal"
    return sol


