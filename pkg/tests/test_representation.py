import numpy as np
import pytest

from bsdelab.errors import InvalidArgument
from bsdelab.forward import brownian_model, linear_model
from bsdelab.generators import builtin, make_custom, terminal_affine_w
from bsdelab.gexpectation import SolverConfig
from bsdelab.representation import (
    DEFAULT_EPSILONS,
    PROPERTIES,
    RepresentationProbe,
    RepresentationReport,
    axiom_equivalence_suite,
    characterization_suite,
    converse_comparison,
    default_probe_grid,
    difference_quotient_brownian,
    difference_quotient_forward,
    linear_forward_quotient,
)

CFG = SolverConfig(N=40, M=2**14)
SMALL = SolverConfig(N=40, M=2**12)


def test_linear_quotient_exact_every_eps():
    rep = difference_quotient_brownian(builtin("linear"), RepresentationProbe(0.0, 0.0, 1.0), CFG)
    assert rep.solver == "closed-form"
    assert max(rep.errors) <= 1e-12
    assert rep.target == 1.0


def test_linear_quotient_lsmc_sub_solver():
    rep = difference_quotient_brownian(builtin("linear"), RepresentationProbe(0.0, 0.0, 1.0), SMALL, sub_solver="lsmc")
    assert max(rep.errors) <= 1e-3


def test_zero_driver_quotient_vanishes():
    rep = difference_quotient_brownian(builtin("zero"), RepresentationProbe(0.25, 1.0, -1.0), SMALL)
    assert max(abs(e) for e in rep.estimates) <= 1e-10


def test_kappa_quotient_converges():
    rep = difference_quotient_brownian(builtin("kappa_abs_z", kappa=0.5), RepresentationProbe(0.0, 0.0, 1.0), CFG)
    v = rep.verdict(final_tol=0.03)
    assert v["passed"], (rep.errors, rep.ses)
    assert rep.estimates[-1] == pytest.approx(0.5, abs=0.03)


def test_kappa_quotient_tree_sub_solver():
    rep = difference_quotient_brownian(builtin("kappa_abs_z"), RepresentationProbe(0.0, 0.0, 1.0), CFG, sub_solver="tree")
    np.testing.assert_allclose(rep.estimates, 0.5, atol=1e-12)


def test_time_dependent_driver_uses_absolute_time():
    g = make_custom(lambda t, y, z: (1.0 + t) * z[:, 0] + 0 * y, K=2.0, flags={})
    pr = RepresentationProbe(0.5, 0.0, 1.0, epsilons=(0.1, 0.05))
    rep = difference_quotient_brownian(g, pr, SMALL, sub_solver="tree")
    assert rep.target == pytest.approx(1.5)
    # Z = 1 on the tree, so the quotient is the left Riemann mean of 1 + r over 24 steps of [t, t + eps]
    expect = [1.5 + e * 23 / 48 for e in rep.epsilons]
    np.testing.assert_allclose(rep.estimates, expect, rtol=0, atol=1e-12)
    np.testing.assert_allclose(rep.estimates, rep.averaged, atol=0.1 / 48 + 1e-12)


@pytest.mark.parametrize("k", range(8))
def test_probes_at_eight_grid_times_converge(k):
    t = k / 8
    eps = (0.1, 0.05, 0.025)
    rep = difference_quotient_brownian(builtin("kappa_abs_z"), RepresentationProbe(t, 0.0, 1.0, epsilons=eps), CFG)
    assert rep.verdict(final_tol=0.03)["passed"]


def test_jump_in_time_is_reported_not_asserted():
    g = make_custom(lambda t, y, z: np.abs(z[:, 0]) * (t >= 0.5) + 0 * y, K=1.0, flags={})
    rep = difference_quotient_brownian(g, RepresentationProbe(0.475, 0.0, 1.0, epsilons=(0.1, 0.05, 0.025)), SMALL,
                                       sub_solver="tree", audit=False)
    # left of the jump the target is 0 but the quotient sees part of the jump
    assert rep.target == 0.0 and rep.estimates[0] > 0.5


@pytest.mark.parametrize(
    "eps,t", [((0.01,), 0.0), ((0.0375,), 0.0), ((0.2,), 0.9), ((0.1, 0.2), 0.0), ((), 0.0)]
)
def test_bad_epsilons_rejected(eps, t):
    with pytest.raises(InvalidArgument):
        difference_quotient_brownian(builtin("zero"), RepresentationProbe(t, 0.0, 1.0, epsilons=eps), SMALL)


def test_verdict_allows_single_small_inversion():
    rep = RepresentationReport([0.2, 0.1, 0.05], [0, 0, 0], [0.10, 0.105, 0.02], [0.01, 0.01, 0.01], 0.0)
    v = rep.verdict()
    assert v["inversions"] == 1 and v["monotone"] and v["passed"]
    big = RepresentationReport([0.2, 0.1], [0, 0], [0.01, 0.02], [0.001, 0.001], 0.0)
    assert not big.verdict()["monotone"]


def test_forward_brownian_model_reduces_bitwise():
    g = builtin("kappa_abs_z")
    a = difference_quotient_forward(g, brownian_model(), RepresentationProbe(0.0, 0.0, x=0.0, p=1.0), SMALL)
    b = difference_quotient_brownian(g, RepresentationProbe(0.0, 0.0, 1.0), SMALL)
    assert a.estimates == b.estimates and a.errors == b.errors


def test_forward_constant_drift_target():
    rep = difference_quotient_forward(builtin("zero"), linear_model(0.0, 1.0, 1.0), RepresentationProbe(0.0, 0.0, x=0.0, p=1.0), SMALL)
    assert rep.target == 1.0
    np.testing.assert_allclose(rep.estimates, 1.0, atol=1e-9)


def test_forward_linear_model_converges_to_two():
    rep = difference_quotient_forward(builtin("linear"), linear_model(1.0, 0.0, 1.0), RepresentationProbe(0.0, 0.0, x=1.0, p=1.0), CFG)
    assert rep.target == 2.0
    assert abs(rep.estimates[-1] - 2.0) <= 0.05
    # the estimates track the analytic quotient up to Euler bias on a 32-step sub-grid
    for e, est in zip(rep.epsilons, rep.estimates):
        assert est == pytest.approx(linear_forward_quotient(e, 1.0, 1.0, 0.0, 1.0, 1.0), abs=0.02)


def test_linear_forward_quotient_limits():
    assert linear_forward_quotient(1e-8, 1.0, 1.0, 0.0, 1.0, 1.0) == pytest.approx(2.0, abs=1e-6)
    assert linear_forward_quotient(0.5, 0.0, 3.0, 0.0, 2.0, 1.0) == pytest.approx(2.0)


def test_forward_shape_checked():
    with pytest.raises(InvalidArgument):
        difference_quotient_forward(builtin("zero"), linear_model(), RepresentationProbe(0.0, 0.0, x=(0.0, 1.0), p=1.0), SMALL)


def test_default_probe_grid():
    grid = default_probe_grid()
    assert len(grid) == 8 * 3 * 3
    assert sorted({p[0] for p in grid}) == [k / 8 for k in range(8)]


# --- converse comparison -------------------------------------------------------------

PROBES = [(0.0, 0.0, (z,)) for z in (-1.0, 0.0, 1.0)] + [(0.5, 1.0, (z,)) for z in (-1.0, 1.0)]


def test_converse_linear_below_abs():
    rep = converse_comparison(builtin("linear", a=0, b=0.5, c=0), builtin("kappa_abs_z"), SMALL, probes=PROBES)
    assert rep.hypothesis_holds and rep.dominance and rep.consistent
    # equality where z >= 0
    for t, y, z, d1, d2, diff, se, bad in rep.probes:
        if z[0] >= 0:
            assert abs(diff) <= 1e-9 + 3 * se


def test_converse_equal_drivers():
    g = builtin("kappa_abs_z")
    rep = converse_comparison(g, g, SMALL, probes=PROBES)
    assert rep.hypothesis_holds and rep.dominance


def test_converse_refuses_reverse_dominance():
    rep = converse_comparison(builtin("kappa_abs_z"), builtin("linear", a=0, b=0.5, c=0), SMALL,
                              family=[-terminal_affine_w()], probes=PROBES)
    # with xi = -W_T the ordering is Y(|z|) >= Y(z): the claimed inequality fails at solution level
    assert not rep.hypothesis_holds
    assert {p[2][0] for p in rep.violations} == {-1.0}
    assert rep.consistent


# --- characterization --------------------------------------------------------------


def test_homogeneity_for_kappa():
    rep = characterization_suite(builtin("kappa_abs_z"), "positive_homogeneity", cfg=SMALL)
    assert rep.solution_holds and rep.generator_holds and rep.passed
    zero_rows = [c for c in rep.checks if "a=0," in c[0]]
    assert all(c[1] <= 1e-12 for c in zero_rows)


def test_translation_for_linear():
    rep = characterization_suite(builtin("linear"), "translation_invariance", cfg=SMALL)
    assert rep.solution_holds and rep.passed


def test_discount_translation_witness():
    rep = characterization_suite(builtin("discount"), "translation_invariance", cfg=SolverConfig(N=64, M=2**12))
    assert not rep.generator_holds and not rep.solution_holds and rep.passed
    assert rep.witness["gap"] == pytest.approx(1 - np.exp(-1), abs=0.01)


@pytest.mark.parametrize("prop", ["subadditivity", "convexity"])
def test_kappa_sublinear_properties(prop):
    rep = characterization_suite(builtin("kappa_abs_z"), prop, cfg=SMALL)
    assert rep.solution_holds and rep.generator_holds


def test_concave_driver_fails_both_levels():
    g = make_custom(lambda t, y, z: -0.5 * np.abs(z[:, 0]) + 0 * y, K=0.5)
    rep = characterization_suite(g, "subadditivity", "solution=>generator", cfg=SMALL)
    assert not rep.solution_holds and not rep.generator_holds and rep.passed


def test_characterization_rejects_unknown():
    with pytest.raises(InvalidArgument):
        characterization_suite(builtin("zero"), "monotonicity", cfg=SMALL)
    assert len(PROPERTIES) == 4


@pytest.mark.parametrize("name", ["zero", "kappa_abs_z", "linear(0,0.5,0)"])
def test_equivalence_suite_agrees(name):
    rows = axiom_equivalence_suite(builtin(name), SMALL)
    assert [r.name for r in rows] == list(PROPERTIES)
    assert all(r.agrees for r in rows), [(r.name, r.expectation_level, r.generator_level, r.detail) for r in rows]
    assert all(r.expectation_level for r in rows)
