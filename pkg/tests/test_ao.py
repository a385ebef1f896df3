import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fasnoma.ao import AoOptions, initialize, optimize
from fasnoma.geometry import default_params, linear_layout, random_layout, sample_realization, synthesize_channel
from fasnoma.rates import BeamformingPair, SolutionCandidate, check_feasibility, secrecy_rate


def _realization(p, seed):
    return sample_realization(p, np.random.SeedSequence(31, spawn_key=(seed,)))


def test_optimize_trace_monotone_and_feasible():
    p = default_params()
    for s in range(4):
        res = optimize(_realization(p, s), p)
        if res.status == "init_failed":
            continue
        assert np.all(np.diff(res.rate_trace) >= -1e-6)
        for tr in res.sca_traces:
            assert np.all(np.diff(tr) >= -1e-9 * np.abs(tr[:-1]))
        assert all(res.flags.values())
        assert res.secrecy_rate == pytest.approx(res.trace[-1].secrecy_rate, abs=1e-9)
        assert res.stats.logged == 0
        assert res.outer_iterations <= 30


def test_init_failure_reported():
    p = default_params()
    r = _realization(p, 0)
    dead = r.__class__(r.angles, r.sigma, np.zeros_like(r.omega), r.d_c, r.d_e)
    res = optimize(dead, p)
    assert res.status == "init_failed"
    assert math.isnan(res.secrecy_rate)
    assert res.candidate is None and res.message


def test_initialize_uses_grid_or_given_layout():
    p = default_params()
    r = _realization(p, 1)
    lin = linear_layout(p.region, 4, p.min_spacing)
    start = initialize(r, p, lin)
    assert start is not None and np.array_equal(start.layout.positions, lin.positions)


def test_beams_only_keeps_layout():
    p = default_params()
    r = _realization(p, 2)
    lin = linear_layout(p.region, 4, p.min_spacing)
    res = optimize(r, p, AoOptions(optimize_positions=False, initial_layout=lin))
    assert np.array_equal(res.candidate.layout.positions, lin.positions)
    assert {e.stage for e in res.trace} <= {"init", "beams"}


def test_positions_first_order_is_monotone():
    p = default_params()
    res = optimize(_realization(p, 3), p, AoOptions(order="positions_first", max_outer=3))
    assert res.trace[1].stage.startswith("positions")
    assert np.all(np.diff(res.rate_trace) >= -1e-6)


def test_idempotent_at_fixed_point():
    p = default_params()
    r = _realization(p, 4)
    opts = AoOptions(optimize_positions=False, sca_tol=1e-12, sca_max_iters=500, outer_tol=1e-10, max_outer=20)
    first = optimize(r, p, opts)
    again = optimize(r, p, AoOptions(optimize_positions=False, initial_layout=first.candidate.layout,
                                     initial_beams=first.candidate.beams))
    assert abs(again.secrecy_rate - first.secrecy_rate) < 1e-6


def test_warm_start_requires_layout():
    p = default_params()
    r = _realization(p, 5)
    start = initialize(r, p)
    with pytest.raises(ValueError):
        optimize(r, p, AoOptions(initial_beams=start.beams))


def test_single_path_layout_invariance():
    p = default_params(num_paths=1)
    r = _realization(p, 6)
    res = optimize(r, p, AoOptions(max_outer=3))
    b = res.candidate.beams
    rng = np.random.default_rng(0)
    h0 = {k: synthesize_channel(res.candidate.layout, r, k, p.wavelength) for k in "ce"}
    for _ in range(20):
        lay = random_layout(p.region, 4, p.min_spacing, rng)
        # re-phase the beams with the per-antenna phase change of the (shared) single path
        h1 = synthesize_channel(lay, r, "c", p.wavelength)
        rot = (h1 / np.abs(h1)) / (h0["c"] / np.abs(h0["c"]))
        moved = SolutionCandidate(lay, BeamformingPair(b.w1 * rot, b.w2 * rot))
        assert abs(secrecy_rate(moved, r, p) - res.secrecy_rate) < 1e-6
        assert check_feasibility(moved, r, p, tol=1e-6).feasible


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([2, 4]), st.sampled_from([0.0, 20.0]))
def test_optimize_monotone_any_seed(seed, M, db):
    p = default_params(db, M)
    res = optimize(sample_realization(p, seed), p, AoOptions(max_outer=3))
    if res.status == "init_failed":
        return
    assert np.all(np.diff(res.rate_trace) >= -1e-6)
    assert all(res.flags.values())
