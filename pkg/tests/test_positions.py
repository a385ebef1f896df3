import copy
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fasnoma import qcqp
from fasnoma.beamforming import initial_beams
from fasnoma.geometry import AntennaLayout, default_params, grid_layout, random_layout, sample_realization
from fasnoma.positions import build_position_subproblem, interior_start, sweep
from fasnoma.rates import SolutionCandidate, check_feasibility, secrecy_ratio


def _setup(seed, M=4, Lt=4):
    p = default_params(10.0, M, num_paths=Lt)
    r = sample_realization(p, np.random.SeedSequence(21, spawn_key=(seed,)))
    layout = grid_layout(p.region, M, p.min_spacing)
    return p, r, layout, initial_beams(layout, r, p)


def test_subproblem_hint_is_feasible_and_tight():
    p, r, layout, b = _setup(0)
    for m in range(4):
        problem, hint, cache = build_position_subproblem(m, layout, b, r, p)
        vals = problem.constraint_values(hint)
        assert abs(vals["ratio"]) <= 1e-9
        assert abs(vals["leakage"]) <= 1e-9
        assert max(vals.values()) <= 1e-9
        sol = qcqp.solve(problem, x0=hint)
        assert sol.optimal and sol.kkt.max() <= 1e-6
        assert sol.objective >= 1.0 - 1e-9


def test_interior_start_skips_phase1_with_same_optimum():
    for seed in range(3):
        p, r, layout, b = _setup(seed)
        for m in range(4):
            problem, hint, _ = build_position_subproblem(m, layout, b, r, p)
            x0 = interior_start(problem, hint)
            np.testing.assert_array_equal(x0[:2], hint[:2])
            assert problem.inequality_values(x0).max() < -qcqp.INTERIOR_MARGIN
            a, c = qcqp.solve(problem, x0=hint), qcqp.solve(problem, x0=x0)
            assert c.phase1_slack is None and c.optimal
            assert c.objective == pytest.approx(a.objective, abs=1e-7)


def test_interior_start_falls_back_when_a_rate_row_is_active():
    p, r, layout, b = _setup(0)
    problem, hint, _ = build_position_subproblem(0, layout, b, r, p)
    # tighten the CU rate row so that it is active at the hint
    tight = copy.deepcopy(problem)
    tight.r[tight.quad_names.index("rate_c")] -= problem.constraint_values(hint)["rate_c"]
    assert tight.constraint_values(hint)["rate_c"] == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_array_equal(interior_start(tight, hint), hint)


def test_subproblem_feasible_set_is_inside_true_set():
    # any point feasible for the restriction is feasible for the true per-antenna problem
    p, r, layout, b = _setup(1)
    m = 2
    problem, hint, cache = build_position_subproblem(m, layout, b, r, p)
    rng = np.random.default_rng(0)
    base = secrecy_ratio(SolutionCandidate(layout, b), r, p)
    checked = 0
    x_opt = qcqp.solve(problem, x0=hint).x
    for _ in range(400):
        # points of the convex feasible set: segment hint -> optimum, jittered
        x = hint + rng.uniform() * (x_opt - hint) + rng.normal(scale=1e-4, size=4)
        if max(problem.inequality_values(x)) > 0:
            continue
        checked += 1
        cand = SolutionCandidate(layout.moved(m, x[:2] * p.wavelength), b)
        rep = check_feasibility(cand, r, p, tol=1e-9)
        assert rep.feasible
        # tau is a certified lower bound on the true ratio
        assert x[2] * base <= secrecy_ratio(cand, r, p) * (1 + 1e-9)
    assert checked > 50


def test_sweep_trace_monotone_and_feasible():
    for s in range(6):
        p, r, layout, b = _setup(s)
        if b is None:
            continue
        it = sweep(layout, b, r, p)
        assert np.all(np.diff(it.trace) >= -1e-9 * np.abs(it.trace[:-1]))
        assert it.stats.logged == 0
        rep = check_feasibility(SolutionCandidate(it.layout, b), r, p, tol=1e-6)
        assert rep.feasible
        assert it.objective == pytest.approx(secrecy_ratio(SolutionCandidate(it.layout, b), r, p), rel=1e-9)


def test_sweep_random_order_is_seeded():
    p, r, layout, b = _setup(2)
    a = sweep(layout, b, r, p, order="random", rng=np.random.default_rng(5), max_sweeps=3)
    c = sweep(layout, b, r, p, order="random", rng=np.random.default_rng(5), max_sweeps=3)
    assert np.array_equal(a.layout.positions, c.layout.positions)


def test_sweep_rejects_infeasible_start():
    p, r, layout, b = _setup(3)
    bad = AntennaLayout(np.zeros((4, 2)))
    with pytest.raises(ValueError):
        sweep(bad, b, r, p)


def test_single_path_sweep_gains_nothing():
    p, r, layout, b = _setup(4, M=4, Lt=1)
    start = secrecy_ratio(SolutionCandidate(layout, b), r, p)
    it = sweep(layout, b, r, p, max_sweeps=3)
    assert math.log2(it.objective) - math.log2(start) < 1e-6


def test_sweep_without_rate_constraints_reaches_at_least_constrained_ratio():
    p, r, layout, b = _setup(5)
    con = sweep(layout, b, r, p, max_sweeps=5)
    free = sweep(layout, b, r, p, max_sweeps=5, rate_constraints=False)
    assert free.objective >= con.objective * (1 - 1e-3) or free.trace[0] == con.trace[0]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1, 2, 4]), st.sampled_from([1, 2, 4]))
def test_sweep_never_decreases_ratio(seed, M, Lt):
    p = default_params(10.0, M, num_paths=Lt)
    r = sample_realization(p, seed)
    layout = random_layout(p.region, M, p.min_spacing, np.random.default_rng(seed))
    b = initial_beams(layout, r, p)
    if b is None:
        return
    it = sweep(layout, b, r, p, max_sweeps=3)
    assert np.all(np.diff(it.trace) >= -1e-9 * np.abs(it.trace[:-1]))
    assert it.layout.is_feasible(p.region, p.min_spacing, tol=1e-9)
    assert check_feasibility(SolutionCandidate(it.layout, b), r, p, tol=1e-6).feasible
