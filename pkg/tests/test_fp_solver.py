import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from mckeanlab.coefficients import constant, pme, sqrt_affine
from mckeanlab.errors import TruncationError
from mckeanlab.fields import DensityField, GridSpec, PathField
from mckeanlab.fp_solver import (barenblatt, energy_report, explicit_step, initial_density, mass_report,
                                 project_initial, schaefer_fixed_point, solve_nonlinear_fp, step_linear,
                                 trajectory_map)


def _heat_l1(n, dt, T=0.5, L=8.0):
    grid = GridSpec.from_horizon(L, n, dt, T)
    u0 = project_initial(initial_density("normal(0, 1)"), grid)
    traj = solve_nonlinear_fp(constant(1.0), u0, 0.0, grid)
    exact = stats.norm(0, np.sqrt(1 + T)).pdf(grid.centers)
    return grid.h * np.abs(traj.final.values - exact).sum()


def test_project_initial_normal():
    grid = GridSpec(8.0, 512, 1e-2, 1)
    u = project_initial(initial_density("normal(0, 1)"), grid)
    assert u.mass == pytest.approx(1.0, abs=1e-9)
    assert u.sup == pytest.approx(stats.norm.pdf(0.0), rel=1e-3)


def test_project_initial_uniform_and_truncation():
    grid = GridSpec(4.0, 400, 1e-2, 1)
    u = project_initial(initial_density("uniform(-1, 1)"), grid)
    inside = np.abs(grid.centers) < 0.99
    np.testing.assert_allclose(u.values[inside], 0.5, rtol=1e-9)
    with pytest.raises(TruncationError):
        project_initial(initial_density("normal(0, 1)"), GridSpec(2.0, 128, 1e-2, 1))


def test_project_initial_from_samples():
    rng = np.random.default_rng(0)
    grid = GridSpec(8.0, 64, 1e-2, 1)
    u = project_initial(rng.standard_normal(200_000), grid)
    assert u.mass == pytest.approx(1.0, abs=1e-12)
    assert grid.h * np.abs(u.values - stats.norm.pdf(grid.centers)).sum() < 0.02


def test_step_linear_preserves_constants():
    grid = GridSpec(2.0, 64, 0.1, 1)
    u = DensityField(np.full(64, 0.25), grid)
    v = project_initial(initial_density("normal(0, 0.1)"), grid)
    np.testing.assert_allclose(step_linear(u, v, sqrt_affine(1, 1), 0.1, 0.1).values, 0.25, atol=1e-14)


def test_step_linear_solves_implicit_equation():
    # backward Euler u1 - dt L(v) u1 = u0 with the same flux stencil as the explicit step
    grid = GridSpec(4.0, 128, 0.05, 1)
    model = pme(2.0)
    u0 = project_initial(initial_density("triangle(0, 1)"), grid)
    v = project_initial(initial_density("normal(0, 0.5)"), grid)
    u1 = step_linear(u0, v, model, 0.01, grid.dt)
    back = explicit_step(u1.values, v.values, model, 0.01, grid, -grid.dt)
    np.testing.assert_allclose(back, u0.values, atol=1e-12)


@pytest.mark.parametrize("spec,ratio", [("triangle(0, 1)", 1.8), ("normal(0, 0.25)", 3.0)])
def test_step_linear_vs_explicit_oracle(spec, ratio):
    model = pme(2.0)
    gaps = []
    for dt in (4e-3, 2e-3, 1e-3):
        grid = GridSpec(4.0, 128, dt, 1)
        u0 = project_initial(initial_density(spec), grid)
        imp = step_linear(u0, u0, model, 0.0, dt)
        ref = u0.values.copy()
        for _ in range(100):
            ref = explicit_step(ref, u0.values, model, 0.0, grid, dt / 100)
        assert imp.mass == pytest.approx(1.0, abs=1e-12)
        assert imp.values.min() >= 0.0
        assert np.abs(imp.values - ref).max() < 0.25 * np.abs(ref - u0.values).max()
        gaps.append(np.abs(imp.values - ref).max())
    # second order in dt for smooth data; the kink of the triangle costs one order
    assert gaps[0] / gaps[1] > ratio and gaps[1] / gaps[2] > ratio


def test_heat_exact_solution():
    assert _heat_l1(512, 2e-3) < 1e-3


def test_heat_refinement_order():
    errs = [_heat_l1(128 * 2**k, 1e-2 / 2**k) for k in range(3)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 0.9)


def test_barenblatt_profile_has_unit_mass():
    x = np.linspace(-10, 10, 200_001)
    for m, t in ((2.0, 1.0), (3.0, 0.5)):
        assert np.trapezoid(barenblatt(m, t)(x), x) == pytest.approx(1.0, abs=1e-6)


def test_barenblatt_self_similar_solution():
    grid = GridSpec.from_horizon(4.0, 400, 5e-3, 1.0)
    u0 = project_initial(barenblatt(2.0, 1.0), grid)
    traj = solve_nonlinear_fp(pme(2.0), u0, 0.0, grid)
    exact = barenblatt(2.0, 2.0)(grid.centers)
    assert grid.h * np.abs(traj.final.values - exact).sum() < 5e-3


def test_schaefer_constant_sigma_one_iteration():
    grid = GridSpec.from_horizon(8.0, 128, 1e-2, 0.2)
    u0 = project_initial(initial_density("normal(0, 1)"), grid)
    v, k = schaefer_fixed_point(constant(1.0), u0, 0.0, grid)
    assert k == 1
    _, k_inf = schaefer_fixed_point(pme(2.0), u0, 0.0, grid, outer_tol=np.inf)
    assert k_inf == 1


def test_schaefer_matches_implicit_solve():
    grid = GridSpec.from_horizon(6.0, 128, 1e-2, 0.2)
    u0 = project_initial(initial_density("bimodal(3, 0.25)"), grid)
    tol = 1e-8
    v, k = schaefer_fixed_point(sqrt_affine(1, 1), u0, 0.01, grid, outer_tol=tol)
    direct = solve_nonlinear_fp(sqrt_affine(1, 1), u0, 0.01, grid, picard_inner_tol=1e-13)
    gap = np.sqrt(grid.h * grid.dt * np.sum((v.snapshots - direct.snapshots) ** 2))
    assert gap <= 10 * tol
    # fixed point of the trajectory map
    w = trajectory_map(direct, sqrt_affine(1, 1), u0, 0.01)
    np.testing.assert_allclose(w.snapshots, direct.snapshots, atol=1e-10)


def test_energy_report_constant_data():
    grid = GridSpec.from_horizon(1.0, 32, 0.1, 0.5)
    u0 = DensityField(np.full(32, 0.5), grid)
    traj = solve_nonlinear_fp(pme(2.0), u0, 0.1, grid)
    rep = energy_report(traj, pme(2.0), 0.1)
    assert rep.passed
    assert rep["dissipation_identity"].value == pytest.approx(0.0, abs=1e-12)
    assert rep["energy"].value == pytest.approx(u0.l2_sq(), abs=1e-12)


@given(st.sampled_from(["normal(0, 1)", "uniform(-1, 1)", "bimodal(3, 0.25)", "triangle(0.5, 1)"]),
       st.sampled_from([constant(1.0), sqrt_affine(1, 1), pme(2.0), pme(3.0)]),
       st.sampled_from([0.0, 0.01, 0.1]))
def test_mass_and_positivity(spec, model, eps):
    grid = GridSpec.from_horizon(8.0, 128, 2e-2, 0.2)
    u0 = project_initial(initial_density(spec), grid)
    traj = solve_nonlinear_fp(model, u0, eps, grid)
    rep = mass_report(traj)
    assert rep.passed, rep.summary()
    assert energy_report(traj, model, eps)["max_principle"].passed


def test_eps_stability_monotone():
    grid = GridSpec.from_horizon(6.0, 256, 5e-3, 0.3)
    u0 = project_initial(initial_density("uniform(-1, 1)"), grid)
    base = solve_nonlinear_fp(pme(2.0), u0, 0.0, grid).final.values
    gaps = [grid.h * np.abs(solve_nonlinear_fp(pme(2.0), u0, e, grid).final.values - base).sum()
            for e in (0.1, 0.05, 0.025, 0.0125)]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


def test_path_field_roundtrip(tmp_path):
    from mckeanlab.fields import read_path_csv, write_path_csv
    grid = GridSpec.from_horizon(8.0, 32, 0.1, 0.3)
    u0 = project_initial(initial_density("normal(0, 1)"), grid)
    traj = solve_nonlinear_fp(constant(1.0), u0, 0.0, grid)
    write_path_csv(traj, tmp_path / "p.csv")
    back = read_path_csv(tmp_path / "p.csv", dt=0.1)
    np.testing.assert_allclose(back.snapshots, traj.snapshots, rtol=1e-15)
    assert isinstance(back, PathField)
