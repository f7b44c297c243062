import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bsdelab.errors import InvalidArgument
from bsdelab.stochastic import (
    BLOCK_PATHS,
    INITIAL,
    TimeGrid,
    atom_event,
    band_event,
    half_space_event,
    make_grid,
    sample_enlargement,
    simulate_brownian,
)


def test_grid_nodes_quarter_steps():
    assert make_grid(1.0, 4).nodes.tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_grid_single_step():
    assert make_grid(2.0, 1).nodes.tolist() == [0.0, 2.0]


@pytest.mark.parametrize("T,N", [(1.0, 0), (0.0, 4), (-1.0, 4), (1.0, -3), (1.0, 2.5)])
def test_grid_rejects_bad_arguments(T, N):
    with pytest.raises(InvalidArgument):
        make_grid(T, N)


@given(st.floats(0.01, 100.0), st.integers(1, 500))
def test_grid_invariants(T, N):
    g = make_grid(T, N)
    t = g.nodes
    assert np.all(np.diff(t) > 0)
    assert t[-1] - t[0] == T
    assert g.node_of(t[N // 2]) == N // 2


def test_node_of_rejects_off_grid_times():
    with pytest.raises(InvalidArgument):
        make_grid(1.0, 4).node_of(0.3)


def test_brownian_mean_within_clt_bound():
    p = simulate_brownian(make_grid(1.0, 64), 1, 2**14, 7)
    assert abs(p.W[:, -1, 0].mean()) <= 3 * np.sqrt(1.0 / 2**14)
    assert abs(p.W[:, -1, 0].var() - 1.0) <= 0.05


def test_brownian_deterministic_and_seed_sensitive():
    g = make_grid(1.0, 64)
    a = simulate_brownian(g, 1, 2**14, 7)
    b = simulate_brownian(g, 1, 2**14, 7)
    c = simulate_brownian(g, 1, 2**14, 8)
    assert np.array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, c.increments)


def test_w_starts_at_zero_and_sums_increments():
    p = simulate_brownian(make_grid(1.0, 8), 3, 100, 1)
    assert p.W.shape == (100, 9, 3)
    assert np.all(p.W[:, 0] == 0)
    np.testing.assert_allclose(p.W[:, -1], p.increments.sum(axis=1), atol=1e-13)


@given(st.integers(1, 3 * BLOCK_PATHS), st.integers(0, 2**63))
def test_path_prefix_does_not_depend_on_path_count(m, seed):
    g = make_grid(1.0, 4)
    big = simulate_brownian(g, 1, m + 7, seed)
    small = simulate_brownian(g, 1, m, seed)
    assert np.array_equal(big.increments[:m], small.increments)


def test_coarsen_keeps_paths():
    p = simulate_brownian(make_grid(1.0, 64), 1, 50, 2)
    c = p.coarsen(4)
    assert c.grid.N == 16
    np.testing.assert_allclose(c.W[:, -1], p.W[:, -1], atol=1e-13)
    with pytest.raises(InvalidArgument):
        p.coarsen(5)


def test_enlargement_frequency():
    U = sample_enlargement([-1, 1], [0.5, 0.5], 2**14, 7)
    freq = np.mean(U.values == 1)
    assert abs(freq - 0.5) <= 0.012


def test_enlargement_degenerate():
    U = sample_enlargement([3], [1], 1000, 0)
    assert np.all(U.values == 3)


def test_enlargement_rejects_bad_mass():
    with pytest.raises(InvalidArgument):
        sample_enlargement([0, 1], [0.6, 0.6], 10, 0)


def test_enlargement_independent_of_increments():
    M = 2**14
    p = simulate_brownian(make_grid(1.0, 16), 1, M, 7)
    U = sample_enlargement([-1, 1], [0.5, 0.5], M, 7)
    for n in range(16):
        r = np.corrcoef(U.values, p.increments[:, n, 0])[0, 1]
        assert abs(r) <= 3 / np.sqrt(M)


def test_events_measurability_tags():
    p = simulate_brownian(make_grid(1.0, 8), 1, 200, 0)
    e = half_space_event(p, 4)
    assert e.available_at(4) and e.available_at(8) and not e.available_at(3)
    assert np.array_equal(e.indicator, p.W[:, 4, 0] > 0)
    b = band_event(p, 2, -0.5, 0.5)
    assert b.as_float.dtype == float
    U = sample_enlargement([-1, 1], [0.5, 0.5], 200, 0)
    a = atom_event(U, 1)
    assert a.node == INITIAL and a.available_at(0)


def test_brownian_scaling_ks_smoke():
    """Law of W_T does not depend on N (statistical smoke test)."""
    scipy_stats = pytest.importorskip("scipy.stats")
    a = simulate_brownian(make_grid(1.0, 32), 1, 2**13, 11).W[:, -1, 0]
    b = simulate_brownian(make_grid(1.0, 64), 1, 2**13, 12).W[:, -1, 0]
    assert scipy_stats.ks_2samp(a, b).pvalue > 0.01


def test_time_grid_is_hashable_value():
    assert TimeGrid(1.0, 4) == TimeGrid(1.0, 4)
