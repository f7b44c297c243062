import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bsdelab.errors import NumericalFailure, InvalidArgument
from bsdelab.forward import ForwardModel, brownian_model, check_h_assumptions, euler_maruyama, linear_model
from bsdelab.stochastic import make_grid, simulate_brownian


def _model(b, s, L1=1.0, L2=1.0):
    return ForwardModel(1, 1, b, s, L1, L2)


def test_degenerate_model_stays_at_start():
    p = simulate_brownian(make_grid(1.0, 16), 1, 64, 0)
    f = euler_maruyama(_model(lambda t, x: 0 * x, lambda t, x: np.zeros(x.shape + (1,))), p, (0, [5.0]))
    assert np.all(f.states == 5.0)


def test_constant_drift_is_exact():
    p = simulate_brownian(make_grid(1.0, 16), 1, 8, 0)
    f = euler_maruyama(_model(lambda t, x: np.ones_like(x), lambda t, x: np.zeros(x.shape + (1,))), p, (0, [0.0]))
    np.testing.assert_allclose(f.states[:, -1, 0], 1.0, rtol=0, atol=1e-15)


def test_brownian_model_reproduces_w_bitwise():
    p = simulate_brownian(make_grid(1.0, 64), 1, 500, 4)
    f = euler_maruyama(brownian_model(), p, (0, [0.0]))
    assert np.array_equal(f.states[:, :, 0], p.W[:, :, 0])


def test_state_frozen_before_start_and_adapted():
    p = simulate_brownian(make_grid(1.0, 16), 1, 100, 1)
    f = euler_maruyama(linear_model(0.3, 0.1, 0.7), p, (5, [2.0]))
    assert np.all(f.states[:, :6, 0] == 2.0)
    # changing increments after node n leaves states up to n untouched
    inc = p.increments.copy()
    inc[:, 10:] *= -1
    q = type(p)(p.grid, p.d, p.M, inc, p.seed)
    g = euler_maruyama(linear_model(0.3, 0.1, 0.7), q, (5, [2.0]))
    assert np.array_equal(f.states[:, :11], g.states[:, :11])


def test_non_finite_state_reports_location():
    p = simulate_brownian(make_grid(1.0, 8), 1, 10, 0)
    m = _model(lambda t, x: np.where(t > 0.5, np.inf, 0.0) + 0 * x, lambda t, x: np.zeros(x.shape + (1,)))
    with pytest.raises(NumericalFailure) as err:
        euler_maruyama(m, p, (0, [0.0]))
    assert err.value.node == 5 and err.value.path == 0


def test_dimension_mismatch_rejected():
    p = simulate_brownian(make_grid(1.0, 8), 2, 10, 0)
    with pytest.raises(InvalidArgument):
        euler_maruyama(brownian_model(), p, (0, [0.0]))
    with pytest.raises(InvalidArgument):
        euler_maruyama(brownian_model(), simulate_brownian(make_grid(1.0, 8), 1, 10, 0), (9, [0.0]))


def test_h_audit_passes_for_sine_drift():
    m = _model(lambda t, x: np.sin(x), lambda t, x: np.ones(x.shape + (1,)), L1=1.0, L2=2.0)
    rep = check_h_assumptions(m, probes=2000, seed=0)
    assert rep["H1"] and rep.observed["lipschitz_ratio"] <= 1.0


def test_h_audit_flags_square_drift():
    m = _model(lambda t, x: x**2, lambda t, x: np.zeros(x.shape + (1,)), L1=1.0, L2=100.0)
    rep = check_h_assumptions(m, probes=4000, seed=0, box=10.0)
    assert not rep["H1"]
    # the oracle: sup |x + x'| over the sampled pairs
    from bsdelab.forward import probe_pairs

    _, x, xp = probe_pairs(1, 4000, 0, 10.0, 1.0)
    ok = x[:, 0] != xp[:, 0]
    assert rep.observed["lipschitz_ratio"] == pytest.approx(np.max(np.abs(x[ok, 0] + xp[ok, 0])), rel=1e-9)
    assert rep.observed["lipschitz_ratio"] > 18


def test_h_audit_step_in_time():
    m = _model(lambda t, x: 0 * x, lambda t, x: np.full(x.shape + (1,), float(t >= 0.5)))
    rep = check_h_assumptions(m, probes=500, seed=0, times=(0.5,))
    assert rep["H3"]
    assert any("left-discontinuity at t=0.5" in n for n in rep.notes)


def _exact_ou(a, c, x0, W, dt):
    """Exact solution of dX = a X dt + c dW on the same Brownian path (fine quadrature)."""
    n = W.shape[1] - 1
    t = np.arange(n + 1) * dt
    dW = np.diff(W, axis=1)
    return np.exp(a * t[-1]) * (x0 + c * np.sum(np.exp(-a * t[:-1]) * dW, axis=1))


def test_strong_convergence_linear_model():
    a, c, x0 = 1.0, 0.5, 1.0
    fine = simulate_brownian(make_grid(1.0, 2048), 1, 2000, 3)
    exact = _exact_ou(a, c, x0, fine.W[:, :, 0], fine.grid.dt)
    errs = []
    for N in (16, 32, 64):
        coarse = fine.coarsen(2048 // N)
        f = euler_maruyama(linear_model(a, 0.0, c), coarse, (0, [x0]))
        errs.append(np.sqrt(np.mean((f.states[:, -1, 0] - exact) ** 2)))
    assert errs[0] / errs[1] >= 1.3 and errs[1] / errs[2] >= 1.3


def test_second_moment_of_sup_grows_affinely():
    p = simulate_brownian(make_grid(1.0, 64), 1, 4000, 5)
    xs = np.array([0.0, 1.0, 2.0, 4.0])
    mom = []
    for x in xs:
        f = euler_maruyama(linear_model(0.5, 0.0, 1.0), p, (0, [x]))
        mom.append(np.mean(np.max(f.states[:, :, 0] ** 2, axis=1)))
    mom = np.array(mom)
    assert np.all(np.isfinite(mom))
    C = np.max(mom / (1 + xs**2))
    assert np.all(mom <= C * (1 + xs**2) + 1e-12)
    assert C < 10


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 2))
def test_linear_model_declared_constants_hold(a, a0, c):
    rep = check_h_assumptions(linear_model(a, a0, c), probes=300, seed=1)
    assert rep["H1"] and rep["H2"] and rep["H3"]
