import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from fasnoma.ao import AoOptions, optimize
from fasnoma.baselines import (OMA_LABEL, BaselineKind, grid_oracle, run_fpa, run_oma, run_rpa, secrecy_beam)
from fasnoma.beamforming import initial_beams
from fasnoma.geometry import AntennaLayout, default_params, grid_layout, linear_layout, sample_realization
from fasnoma.rates import SolutionCandidate, check_feasibility, secrecy_ratio


def _realization(p, seed):
    return sample_realization(p, np.random.SeedSequence(41, spawn_key=(seed,)))


def test_fpa_uses_linear_array():
    p = default_params()
    res = run_fpa(_realization(p, 0), p, AoOptions(max_outer=2))
    np.testing.assert_array_equal(res.candidate.layout.positions, linear_layout(p.region, 4, p.min_spacing).positions)
    assert res.label == BaselineKind.FPA.value


def test_rpa_is_seeded_and_best_of_draws():
    p = default_params()
    r = _realization(p, 1)
    a = run_rpa(r, p, np.random.default_rng(3), options=AoOptions(max_outer=2))
    b = run_rpa(r, p, np.random.default_rng(3), options=AoOptions(max_outer=2))
    assert np.array_equal(a.candidate.layout.positions, b.candidate.layout.positions)
    assert a.candidate.layout.is_feasible(p.region, p.min_spacing)
    many = run_rpa(r, p, np.random.default_rng(3), num_draws=3, options=AoOptions(max_outer=2))
    assert many.secrecy_rate >= a.secrecy_rate - 1e-12
    with pytest.raises(ValueError):
        run_rpa(r, p, np.random.default_rng(0), num_draws=0)


def test_secrecy_beam_matches_generalized_eigensolver():
    rng = np.random.default_rng(2)
    for M in (1, 2, 4, 6):
        for _ in range(10):
            hc, he = rng.normal(size=(2, M)) * 3 + 1j * rng.normal(size=(2, M)) * 3
            w, ratio = secrecy_beam(hc, he)
            A = np.eye(M) + np.outer(hc, hc.conj())
            B = np.eye(M) + np.outer(he, he.conj())
            top = scipy.linalg.eigh(A, B, eigvals_only=True)[-1]
            assert ratio == pytest.approx(top, rel=1e-10)
            assert np.linalg.norm(w) == pytest.approx(1.0)
            # no random unit beam does better
            for _ in range(50):
                v = rng.normal(size=M) + 1j * rng.normal(size=M)
                v /= np.linalg.norm(v)
                assert (1 + abs(np.vdot(hc, v)) ** 2) / (1 + abs(np.vdot(he, v)) ** 2) <= ratio * (1 + 1e-12)


def test_oma_reports_half_slot_one_rate():
    p = default_params()
    r = _realization(p, 3)
    res = run_oma(r, p, AoOptions(max_outer=2, max_sweeps=3))
    assert res.label == OMA_LABEL
    assert res.secrecy_rate >= 0.0
    full = math.log2(secrecy_ratio(res.candidate, r, p))
    assert res.secrecy_rate == pytest.approx(0.5 * full, abs=1e-12)
    assert set(res.flags) == {"power", "region", "spacing", "slot2"}
    assert res.flags["power"] and res.flags["region"] and res.flags["spacing"]


def _direct_single_antenna_oracle(r, p, beams, step):
    """Loop over lattice points, re-synthesizing the channel with the public rate checker."""
    reg = p.region
    xs = np.arange(reg.x_lo, reg.x_hi + step / 2, step)
    ys = np.arange(reg.y_lo, reg.y_hi + step / 2, step)
    best = -math.inf
    for x in xs:
        for y in ys:
            cand = SolutionCandidate(AntennaLayout([[x, y]]), beams)
            rep = check_feasibility(cand, r, p, tol=1e-9)
            if rep.flags["rate_c"] and rep.flags["rate_e"]:
                best = max(best, secrecy_ratio(cand, r, p))
    return best


def test_grid_oracle_single_antenna_matches_direct_search():
    p = default_params(num_antennas=1, num_paths=2)
    for s in range(3):
        r = _realization(p, s)
        b = initial_beams(grid_layout(p.region, 1), r, p)
        if b is None:
            continue
        step = p.wavelength / 8
        res = grid_oracle(r, p, b, grid_step=step)
        assert res.objective == pytest.approx(_direct_single_antenna_oracle(r, p, b, step), rel=1e-9)
        assert res.evaluated == 33 * 33


def test_grid_oracle_resolution_converges():
    p = default_params(num_antennas=1, num_paths=2)
    r = _realization(p, 4)
    b = initial_beams(grid_layout(p.region, 1), r, p)
    coarse = grid_oracle(r, p, b, grid_step=p.wavelength / 50)
    fine = grid_oracle(r, p, b, grid_step=p.wavelength / 100)
    assert abs(fine.objective - coarse.objective) <= 0.005 * fine.objective


def test_grid_oracle_two_antennas_respects_spacing():
    p = default_params(num_antennas=2, num_paths=2, region_side=0.25)
    r = _realization(p, 5)
    b = initial_beams(grid_layout(p.region, 2, p.min_spacing), r, p)
    res = grid_oracle(r, p, b, grid_step=p.wavelength / 8)
    assert res.layout.min_pairwise_distance() >= p.min_spacing - 1e-9
    cand = SolutionCandidate(res.layout, b)
    assert check_feasibility(cand, r, p, tol=1e-9).feasible
    assert secrecy_ratio(cand, r, p) == pytest.approx(res.objective, rel=1e-12)
    # the optimizer's starting layout is on this lattice, so the oracle can only be better
    assert res.objective >= secrecy_ratio(SolutionCandidate(grid_layout(p.region, 2, p.min_spacing), b), r, p) - 1e-12


def test_grid_oracle_rejects_large_arrays():
    p = default_params()
    r = _realization(p, 6)
    b = initial_beams(grid_layout(p.region, 4, p.min_spacing), r, p)
    with pytest.raises(ValueError):
        grid_oracle(r, p, b)


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_fas_starts_no_worse_than_its_initial_point(seed):
    p = default_params()
    r = sample_realization(p, seed)
    res = optimize(r, p, AoOptions(max_outer=2))
    if res.status != "init_failed":
        assert res.secrecy_rate >= res.trace[0].secrecy_rate - 1e-12
