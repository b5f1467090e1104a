import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from mckeanlab import conditional as C
from mckeanlab.errors import OverflowGuard

TANH = C.CoefficientSet.from_names(b="zero", ell="tanh", gamma="const(1)")
CONST = C.CoefficientSet.from_names(b="zero", ell="const(0.7)", gamma="const(0.5)")


def test_catalogue_and_constants():
    co = C.CoefficientSet.from_names(b="tanh_y(0.8)", sigma="sin_modulated(0.3)", ell="half_sin",
                                     gamma="affine_clamped(1, 0.5, 0.5, 2)")
    assert co.a_star == pytest.approx(0.7, abs=1e-6)
    assert co.alpha_star == pytest.approx(0.25, abs=1e-6)
    assert co.theta_sup == pytest.approx(0.8 / 0.7, rel=1e-6)
    assert co.lipschitz_sq == pytest.approx(0.25 + 0.25)
    assert co.default_c() == pytest.approx(2.0)
    assert co.b_depends_on_y and C.ellipticity_check(co).passed
    with pytest.raises(ValueError):
        C.scalar_coef("nope")
    with pytest.raises(ValueError):
        C.sigma_inverse(np.array([1.0, 0.0]))
    np.testing.assert_allclose(C.sigma_inverse(np.array([[[2.0, 0.0], [0.0, 4.0]]])), [[[0.5, 0], [0, 0.25]]])


def test_zero_drift_gives_unit_weights():
    run = C.simulate_conditional(TANH, "correlated_normal(0.5)", 500, dt=0.05, T=0.5, seed=1, measure="Q")
    assert np.all(run.logZ == 0.0)


def test_constant_coefficients_drifted_brownian_y():
    N, T = 20_000, 0.5
    run = C.simulate_conditional(CONST, "correlated_normal(0.5)", N, dt=0.05, T=T, seed=2)
    y0, yT = run.Y[0], run.Y[-1]
    inc = yT - y0
    assert abs(inc.mean() - 0.7 * T) < 3 * 0.5 * np.sqrt(T / N)
    assert inc.var() == pytest.approx(0.25 * T, rel=0.05)
    assert run.bound_violations == 0


def test_independent_start_gives_flat_conditional_mean():
    N = 20_000
    q = np.linspace(-1, 1, 9)
    run = C.simulate_conditional(TANH, ("normal(0, 1)", "normal(0.5, 1)"), N, dt=0.05, T=0.1, seed=3,
                                 grid_query=q, grid_stride=1)
    truth, _ = integrate.quad(lambda y: np.tanh(y) * stats.norm.pdf(y, 0.5, 1), -12, 12)
    lam0 = run.coefficient_grid["lambda"][0]
    assert np.abs(lam0 - truth).max() < 0.04
    np.testing.assert_allclose(run.coefficient_grid["gamma"][0], 1.0)
    assert run.coefficient_grid["rho"].shape == (2, 9)


@pytest.mark.parametrize("measure", ["P", "Q"])
def test_constant_theta_log_weight_closed_form(measure):
    co = C.CoefficientSet.from_names(b="const(0.6)", sigma="const(2)", ell="tanh", gamma="const(1)")
    T = 0.5
    run = C.simulate_conditional(co, "correlated_normal(0)", 2000, dt=0.05, T=T, seed=4, measure=measure)
    theta = 0.3
    bhat = (run.X[-1] - run.X[0]) / 2.0
    np.testing.assert_allclose(run.logZ[-1], -theta * bhat + 0.5 * theta**2 * T, atol=1e-12)


def test_post_hoc_weights_match_run():
    co = C.CoefficientSet.from_names(b="tanh_sum(0.8)", sigma="sin_modulated(0.3)", ell="tanh", gamma="const(1)")
    run = C.simulate_conditional(co, "correlated_normal(0.5)", 1000, dt=0.02, T=0.2, seed=5, measure="Q",
                                 record_stride=1)
    logz = C.girsanov_weights(run.X, run.Y, co, run.dt)
    np.testing.assert_allclose(logz, run.logZ, atol=1e-12)


def test_normalization_on_both_measures():
    co = C.CoefficientSet.from_names(b="tanh_y(0.8)", ell="tanh", gamma="const(1)")
    p = C.simulate_conditional(co, "correlated_normal(0.5)", 20_000, dt=0.02, T=0.5, seed=6, measure="P")
    q = C.simulate_conditional(co, "correlated_normal(0.5)", 20_000, dt=0.02, T=0.5, seed=7, measure="Q")
    rep = C.normalization_check(p, q)
    assert rep.passed, rep.summary()
    assert C.girsanov_marginal_check(p, q, n_boot=10).passed
    assert C.weighted_conditional_check(p, q, n_boot=20).passed
    assert C.bound_transfer_check([p, q]).passed


def test_overflow_guard():
    co = C.CoefficientSet.from_names(b="const(40)", ell="tanh", gamma="const(1)")
    with pytest.raises(OverflowGuard) as info:
        C.simulate_conditional(co, "correlated_normal(0)", 100, dt=0.05, T=2.0, seed=0)
    assert info.value.step > 0


def test_weighted_check_trivial_cases():
    p = C.simulate_conditional(TANH, "correlated_normal(0.5)", 2000, dt=0.05, T=0.5, seed=8, measure="P")
    q = C.simulate_conditional(TANH, "correlated_normal(0.5)", 2000, dt=0.05, T=0.5, seed=8, measure="Q")
    # b = 0: the two runs coincide draw for draw
    np.testing.assert_array_equal(p.Y, q.Y)
    rep = C.weighted_conditional_check(p, q, n_boot=5)
    assert rep["max_z"].value == 0.0
    ones = C.weighted_conditional_check(p, q, theta=np.ones_like, n_boot=5)
    np.testing.assert_allclose(ones.info["p"], 1.0)
    np.testing.assert_allclose(ones.info["q"], 1.0)


def test_exp_mart_bound_trivial_and_constant_theta():
    q = C.simulate_conditional(TANH, "correlated_normal(0.5)", 2000, dt=0.05, T=0.5, seed=9, measure="Q")
    rep = C.exp_mart_bound_check(q, TANH, n_boot=5)
    assert rep["conditional_second_moment"].value == pytest.approx(1.0)
    co = C.CoefficientSet.from_names(b="const(0.8)", ell="tanh", gamma="const(1)")
    q = C.simulate_conditional(co, "correlated_normal(0.5)", 20_000, dt=0.05, T=0.5, seed=10, measure="Q")
    rep = C.exp_mart_bound_check(q, co, n_boot=10)
    assert rep.passed, rep.summary()
    assert rep.info["bound_theta_squared"] == pytest.approx(np.exp(3 * 0.5 * 0.64))
    with pytest.raises(ValueError):
        C.exp_mart_bound_check(C.simulate_conditional(co, "correlated_normal(0)", 100, dt=0.1, T=0.2), co)


def test_picard_constant_map_and_k1():
    norm = C.PathNormSpec(1.0, 0.05, 0.5)
    res = C.picard_iterate(CONST, "correlated_normal(0.5)", 1000, norm, K=4, seed=0)
    assert res.distances[0] > 0
    np.testing.assert_array_equal(res.distances[1:], 0.0)
    one = C.picard_iterate(TANH, "correlated_normal(0.5)", 500, norm, K=1, seed=0)
    assert one.distances.shape == (1,) and np.isnan(one.geometric_ratio)
    with pytest.raises(ValueError):
        C.picard_iterate(C.CoefficientSet.from_names(b="tanh_y(1)"), "correlated_normal(0)", 200, norm)


def test_picard_first_iterate_is_simulation():
    # zeta^1 solves the Y equation with coefficients estimated at the frozen Y0
    norm = C.PathNormSpec(1.0, 0.05, 0.5)
    res = C.picard_iterate(TANH, "correlated_normal(0.5)", 500, norm, K=2, seed=3, keep_iterates=True,
                           record_stride=1)
    assert res.iterates.shape == (3, 11, 500)
    np.testing.assert_array_equal(res.iterates[0], np.broadcast_to(res.iterates[0, 0], (11, 500)))


def test_picard_contracts_small_scale():
    co = C.CoefficientSet.from_names(b="zero", ell="half_sin", gamma="const(1)")
    norm = C.PathNormSpec(co.default_c(), 1e-2, 1.0)
    assert norm.certified(co)
    res = C.picard_iterate(co, "correlated_normal(0.5)", 5000, norm, K=6, seed=0)
    assert res.geometric_ratio < 0.8 and not res.no_contraction


@given(st.floats(0.05, 0.95), st.integers(3, 12))
def test_contraction_summary_geometric(r, n):
    D = r ** np.arange(n)
    ratios, geo, floor, flag = C.contraction_summary(D)
    assert geo == pytest.approx(r, rel=1e-9)
    np.testing.assert_allclose(ratios, r)
    assert floor == n and not flag


def test_contraction_summary_floor_and_flag():
    _, geo, floor, flag = C.contraction_summary(np.array([1.0, 0.5, 0.25, 0.3, 0.4, 0.5]))
    assert floor == 3 and geo == pytest.approx(0.5) and flag


def test_pathwise_uniqueness_trivial_cases():
    same = C.pathwise_uniqueness_check(TANH, "correlated_normal(0.5)", 200, [0], dt=0.1, T=0.3, pair=("nw", "nw"))
    assert same["refined_gap_ratio"].extra["coarse"] == 0.0
    const = C.pathwise_uniqueness_check(CONST, "correlated_normal(0.5)", 200, [0], dt=0.1, T=0.3)
    assert const["refined_gap_ratio"].extra["coarse"] < 1e-12


def test_kinetic_configuration_runs_flagged():
    co = C.CoefficientSet.from_names(b="kinetic", ell="tanh", gamma="const(1)")
    run = C.simulate_conditional(co, "correlated_normal(0)", 200, dt=0.05, T=0.2, seed=0)
    assert co.kinetic and run.info["coefficients"]["status"] == "untested theory"
