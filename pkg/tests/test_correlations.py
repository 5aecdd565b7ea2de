import math

import numpy as np
import pytest

import oracles
from cavcorr.correlations import (
    PAIR_FIRST,
    SINGLE_FIRST,
    CorrGrid,
    g2,
    g2_numerator,
    g3_diagonal,
    g3_full,
    g3_full_numerator,
    time_grid,
)
from cavcorr.errors import MemoryBudgetExceeded, NumericalError, ZeroDenominator
from cavcorr.fitting import fit_damped_oscillation
from cavcorr.liouvillian import solve
from cavcorr.operators import HilbertDims, SystemParams, make_annihilation

EMPTY = SystemParams.reference(2.0, g=0.0)


def test_empty_cavity_is_coherent():
    taus = time_grid(200, 2)
    assert np.max(np.abs(g2(EMPTY, taus).values - 1)) < 1e-6
    for branch in (SINGLE_FIRST, PAIR_FIRST):
        assert np.max(np.abs(g3_diagonal(EMPTY, taus, branch).values - 1)) < 1e-6
    t = time_grid(60, 3)
    assert np.max(np.abs(g3_full(EMPTY, t, t).values - 1)) < 1e-6


def test_g2_long_time_limit():
    p = SystemParams.reference(1.9)
    tau = 30 / p.kappa * 1e3
    assert g2(p, [tau]).values[0] == pytest.approx(1.0, abs=1e-4)


def test_g2_symmetric_axis():
    grid = g2(SystemParams.reference(2.7), time_grid(50, 1)).symmetric()
    assert np.array_equal(grid.taus, -grid.taus[::-1])
    assert np.array_equal(grid.values, grid.values[::-1])
    with pytest.raises(ValueError):
        g3_diagonal(SystemParams.reference(2.7), [0, 1]).symmetric()


def test_branches_agree_at_zero():
    p = SystemParams.reference(4.5)
    a = g3_diagonal(p, [0.0], SINGLE_FIRST).values[0]
    b = g3_diagonal(p, [0.0], PAIR_FIRST).values[0]
    assert a == pytest.approx(b, rel=1e-12)


def test_full_surface_edge_equals_single_first_cut():
    p = SystemParams.reference(3.9)
    t = time_grid(80, 2)
    surface = g3_full(p, t, t)
    cut = g3_diagonal(p, t, SINGLE_FIRST)
    assert np.max(np.abs(surface.values[:, 0] - cut.values)) < 1e-8
    # photons at 0, 0 and tau: the other edge is the pair-first branch
    pair = g3_diagonal(p, t, PAIR_FIRST)
    assert np.max(np.abs(surface.values[0, :] - pair.values)) < 1e-8


def test_small_basis_against_dense_exponentials():
    d = HilbertDims(2)
    p = SystemParams.reference(2.0)
    sol = solve(p, d)
    a = make_annihilation(d)
    L = oracles.brute_liouvillian(p.g, p.kappa, p.gamma, p.delta_a, p.delta_c, p.eta, 2)
    rho = oracles.steady_state_expm(L, d.dim)
    assert np.max(np.abs(rho - sol.rho_ss)) < 1e-10
    taus = [0.0, 3.0, 17.5, 60.0]
    assert np.max(np.abs(g2(sol, taus).values - oracles.g2_direct(L, rho, a, taus))) < 1e-8


def test_numerator_normalization_relation():
    sol = solve(SystemParams.reference(2.7), HilbertDims())
    taus = time_grid(40, 4)
    assert np.allclose(g2(sol, taus).values * sol.n_ss**2, g2_numerator(sol, taus), rtol=1e-12)


def test_zero_photons_cannot_be_normalized():
    with pytest.raises(ZeroDenominator):
        g2(SystemParams.reference(0.0), [0.0, 1.0])


def test_full_surface_streaming_is_chunk_independent():
    sol = solve(SystemParams.reference(3.9), HilbertDims(4))
    t = time_grid(30, 1)
    whole = g3_full_numerator(sol, t, t)
    row_bytes = 16 * (2 * sol.propagator.D + t.size)
    chunked = g3_full_numerator(sol, t, t, max_intermediate_bytes=3 * row_bytes)
    assert np.allclose(whole, chunked, rtol=1e-12, atol=1e-15)
    with pytest.raises(MemoryBudgetExceeded):
        g3_full_numerator(sol, t, t, max_intermediate_bytes=row_bytes - 1)


def test_nonuniform_surface_grid_rejected():
    with pytest.raises(ValueError):
        g3_full(EMPTY, [0, 1, 3], [0, 1, 2])


def test_negative_delay_rejected():
    with pytest.raises(ValueError):
        g2(EMPTY, [-1.0, 0.0])


def test_corrgrid_rejects_negative_values():
    with pytest.raises(NumericalError):
        CorrGrid((np.arange(3.0),), np.array([1.0, -1e-3, 1.0]), 1.0, "g2")


def test_g2_frequencies_at_weak_drive():
    # drive resonant with the first-rung normal mode, as assumed by the two-level estimate
    p = SystemParams.normal_mode_resonant(1.9)
    curve = g2(p, time_grid(300, 1))
    fit = fit_damped_oscillation(curve.taus, curve.values)
    omega = fit.model.omega * 1e3  # rad/us
    Omega = fit.model.Omega * 1e3
    assert omega == pytest.approx(2 * p.g, rel=0.15)
    assert Omega == pytest.approx(math.sqrt(2) * p.eta, rel=0.15)
