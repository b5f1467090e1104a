import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from mckeanlab.coefficients import constant, sqrt_affine
from mckeanlab.estimators import MollifierSpec
from mckeanlab.fields import GridSpec, PathField
from mckeanlab.fp_solver import initial_density, project_initial, solve_nonlinear_fp
from mckeanlab.metrics import wasserstein1_1d
from mckeanlab.particles import Bump, Linear, initial_law, martingale_residual, simulate_moderated


@pytest.mark.parametrize("spec,dist", [("normal(0.5, 2)", stats.norm(0.5, np.sqrt(2))),
                                       ("uniform(-1, 3)", stats.uniform(-1, 4)),
                                       ("triangle(0, 1)", stats.triang(0.5, loc=-1, scale=2))])
def test_initial_laws_match_distribution(spec, dist):
    x = initial_law(spec).sample(0, np.arange(50_000))
    assert stats.kstest(x, dist.cdf).pvalue > 1e-3


def test_tabulated_law_matches_density():
    x = initial_law("bimodal(3, 0.25)").sample(1, np.arange(50_000))
    pdf = initial_density("bimodal(3, 0.25)")
    grid = np.linspace(-4, 4, 8001)
    cdf = np.cumsum(pdf(grid)) * (grid[1] - grid[0])
    assert stats.kstest(x, lambda v: np.interp(v, grid, cdf)).pvalue > 1e-3


@given(st.floats(-2, 2), st.floats(0.5, 3), st.floats(-3, 3))
def test_bump_second_derivative(center, width, x):
    f = Bump(center, width)
    h = 1e-5
    fd = (f(x + h) - 2 * f(x) + f(x - h)) / h**2
    # f is only C^2 at the support edge, so the stencil error there is O(h |f'''|)
    assert float(f.second(x)) == pytest.approx(float(fd), abs=1e-3 / width**3 + 1e-5)


def test_constant_sigma_is_brownian():
    s0, T, N = 0.7, 0.5, 40_000
    path, _ = simulate_moderated(constant(s0), initial_law("normal(0, 1)"), N, MollifierSpec("gaussian", 0.1),
                                 0.05, T, seed=2)
    x0, xT = path.positions[0], path.final.positions
    var, target = xT.var(), x0.var() + s0**2 * T
    se = target * np.sqrt(2.0 / N)
    assert abs(var - target) < 3 * se
    assert path.clamp_fraction == 0.0


def test_deterministic_and_exchangeable():
    law = initial_law("normal(0, 1)")
    spec = MollifierSpec("gaussian", 0.2)
    a, _ = simulate_moderated(sqrt_affine(1, 1), law, 500, spec, 0.02, 0.2, seed=7)
    b, _ = simulate_moderated(sqrt_affine(1, 1), law, 500, spec, 0.02, 0.2, seed=7)
    np.testing.assert_array_equal(a.positions, b.positions)
    perm = np.random.default_rng(0).permutation(500)
    ids = np.arange(500)[perm]
    c, _ = simulate_moderated(sqrt_affine(1, 1), a.positions[0][perm], 500, spec, 0.02, 0.2, seed=7, ids=ids)
    # summation order inside the density changes, so agreement is to rounding
    np.testing.assert_allclose(c.final.positions, a.final.positions[perm], rtol=1e-12, atol=1e-12)


def test_kde_snapshots_and_lag():
    grid = GridSpec(6.0, 120, 0.05, 4)
    path, field = simulate_moderated(sqrt_affine(1, 1), initial_law("normal(0, 1)"), 2000,
                                     MollifierSpec("gaussian", 0.2), 0.05, 0.2, seed=1, kde_grid=grid,
                                     snapshot_stride=2, lag=2)
    assert isinstance(field, PathField) and len(field) == 3
    assert field.at(0).mass == pytest.approx(1.0, abs=1e-3)
    assert path.info["lag"] == 2 and len(path.times) == 3


def test_argument_validation():
    law = initial_law("normal(0, 1)")
    with pytest.raises(ValueError):
        simulate_moderated(constant(1.0), law, 50, None, 0.1, 0.5, 0)
    with pytest.raises(ValueError):
        simulate_moderated(constant(1.0), law, 200, None, 0.3, 0.5, 0)


def test_agreement_with_fp_solver_small_scale():
    model = sqrt_affine(1.0, 1.0, r_max=0.8)
    grid = GridSpec.from_horizon(8.0, 512, 2e-3, 0.5)
    ref = solve_nonlinear_fp(model, project_initial(initial_density("normal(0, 1)"), grid), 0.0, grid).final
    path, _ = simulate_moderated(model, initial_law("normal(0, 1)"), 20_000, None, 5e-3, 0.5, seed=3)
    assert wasserstein1_1d(path.final.positions, ref) < 0.03


def _mp_run(sigma_model):
    path, _ = simulate_moderated(sigma_model, initial_law("normal(0, 1)"), 20_000, MollifierSpec("gaussian", 0.1),
                                 0.01, 0.5, seed=4)
    grid = GridSpec(8.0, 32, 0.5, 1)
    u = PathField(np.zeros((2, 32)), np.array([0.0, 0.5]), grid)
    return path, u


def test_martingale_residual_brownian_case():
    path, u = _mp_run(constant(1.0))
    rep = martingale_residual(path, u, constant(1.0), test_fns=(Linear(), Bump(0.0, 2.0)))
    assert rep.passed, rep.summary()
    assert len(rep.checks) == 2 * 2 * 3


def test_martingale_residual_detects_wrong_generator():
    path, u = _mp_run(constant(2.0))
    rep = martingale_residual(path, u, constant(1.0), test_fns=(Bump(0.0, 2.0),))
    assert not rep.passed


def test_martingale_residual_needs_recorded_windows():
    path, _ = simulate_moderated(constant(1.0), initial_law("normal(0, 1)"), 200, None, 0.1, 0.4, seed=0,
                                 record_stride=2)
    u = PathField(np.zeros((2, 32)), np.array([0.0, 0.4]), GridSpec(8.0, 32, 0.4, 1))
    with pytest.raises((KeyError, ValueError)):
        martingale_residual(path, u, constant(1.0), windows=((0.1, 0.3),))
