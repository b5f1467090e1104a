import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mckeanlab.coefficients import (DiffusionModel, alpha, alpha_eps, check_hypotheses, constant, load_tabulated_csv,
                                    model_from_spec, phi_eps, phi_psi_eps, pme, psi_eps, sqrt_affine, sup_alpha,
                                    tabulated)
from mckeanlab.errors import DomainError

MODELS = [constant(1.0), constant(0.5), sqrt_affine(1.0, 1.0), sqrt_affine(0.5, 2.0), pme(2.0), pme(3.0), pme(1.5)]


def test_alpha_examples():
    assert alpha(constant(1.0), 0.7) == pytest.approx(1.0)
    assert alpha(sqrt_affine(1.0, 1.0), 2.0) == pytest.approx(5.0)
    assert alpha(pme(2.0), 0.5) == pytest.approx(1.0)


def test_alpha_eps_examples():
    assert alpha_eps(constant(1.0), 0.7, 0.1) == pytest.approx(1.1)
    assert alpha_eps(pme(2.0), 0.0, 0.05) == pytest.approx(0.05)
    assert alpha_eps(sqrt_affine(1.0, 1.0), 2.0, 0.01) == pytest.approx(5.01)


def test_phi_psi_examples():
    assert phi_psi_eps(constant(1.0), 2.0, 0.0) == pytest.approx((2.0, 2.0))
    assert phi_psi_eps(pme(2.0), 1.0, 0.0) == pytest.approx((1.0, 1.0 / 3.0))
    # Phi = (1 + th + 0.5) th, antiderivative 0.75 r^2 + r^3 / 3
    phi, psi = phi_psi_eps(sqrt_affine(1.0, 1.0), 1.0, 0.5)
    assert phi == pytest.approx(2.5)
    assert psi == pytest.approx(0.75 + 1.0 / 3.0, rel=1e-10)


def test_domain_errors():
    m = sqrt_affine(1.0, 1.0, r_max=2.0)
    with pytest.raises(DomainError):
        alpha(m, -0.1)
    with pytest.raises(DomainError):
        alpha(m, 2.5)
    with pytest.raises(DomainError):
        phi_psi_eps(m, 3.0, 0.0)


def test_check_hypotheses_examples():
    rep = check_hypotheses(constant(1.0))
    assert rep.a1_ok and rep.a2_ok and not rep.strictly_increasing_ok
    assert rep.eta == pytest.approx(1.0)
    rep = check_hypotheses(pme(2.0))
    assert not rep.a2_ok and rep.a2weak_ok and rep.strictly_increasing_ok
    rep = check_hypotheses(sqrt_affine(1.0, 1.0))
    assert rep.a2_ok and rep.strictly_increasing_ok and rep.eta == pytest.approx(1.0)


def test_a2_implies_a2weak():
    for m in MODELS:
        rep = check_hypotheses(m)
        assert (not rep.a2_ok) or rep.a2weak_ok


@given(st.sampled_from(MODELS), st.floats(0.0, 10.0), st.floats(0.0, 1.0))
def test_alpha_eps_shift_exact(model, r, eps):
    assert alpha_eps(model, r, eps) - alpha(model, r) == pytest.approx(eps, abs=1e-12)


@given(st.sampled_from(MODELS), st.floats(0.5, 9.0), st.floats(0.0, 0.5))
def test_phi_derivative_is_alpha_eps(model, r, eps):
    # second-order centred differences on a shrinking step sweep
    errs = []
    for h in (1e-2, 5e-3, 2.5e-3):
        fd = (phi_eps(model, r + h, eps) - phi_eps(model, r - h, eps)) / (2 * h)
        errs.append(abs(fd - alpha_eps(model, r, eps)))
    assert errs[-1] <= max(1e-9, 1e-4 * abs(alpha_eps(model, r, eps)))
    if errs[0] > 1e-9:
        assert errs[-1] <= errs[0] / 12  # two halvings at second order give 16


@given(st.sampled_from(MODELS), st.floats(0.0, 0.2))
def test_psi_convex(model, eps):
    r = np.linspace(0.0, model.r_max, 401)
    psi = psi_eps(model, r, eps)
    assert np.all(np.diff(psi, 2) >= -1e-10)


@given(st.sampled_from(MODELS), st.floats(0.01, 10.0))
def test_psi_vectorised_matches_adaptive(model, r):
    # fixed-order quadrature loses digits on the r^(m-1) kink of fractional porous-medium laws
    assert float(psi_eps(model, np.array([r]), 0.1)[0]) == pytest.approx(phi_psi_eps(model, r, 0.1)[1], rel=1e-7)


def test_finite_difference_fallback_matches_analytic():
    m = sqrt_affine(1.0, 1.0)
    fd = DiffusionModel(sigma=m.sigma, r_max=m.r_max)
    r = np.linspace(0.1, 9.0, 50)
    np.testing.assert_allclose(alpha(fd, r), alpha(m, r), rtol=1e-6)


def test_fd_sigma_prime_second_order():
    s = lambda r: np.sqrt(1.0 + np.asarray(r))
    ds = lambda r: 0.5 / np.sqrt(1.0 + np.asarray(r))
    r = np.linspace(0.5, 5.0, 7)
    e1 = np.abs((s(r + 1e-2) - s(r - 1e-2)) / 2e-2 - ds(r)).max()
    e2 = np.abs((s(r + 5e-3) - s(r - 5e-3)) / 1e-2 - ds(r)).max()
    assert e2 < e1 / 3.5


def test_model_from_spec_and_tabulated(tmp_path):
    assert model_from_spec("pme(2)").name == "pme(2)"
    assert alpha(model_from_spec("sqrt_affine(1, 1)"), 2.0) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        model_from_spec("nope(1)")
    r = np.linspace(0.0, 4.0, 41)
    path = tmp_path / "sigma.csv"
    np.savetxt(path, np.column_stack([r, np.sqrt(1 + r)]), delimiter=",", header="r,sigma", comments="")
    m = load_tabulated_csv(path)
    np.testing.assert_allclose(alpha(m, np.array([0.5, 1.5, 3.0])), 1 + 2 * np.array([0.5, 1.5, 3.0]), rtol=2e-3)
    t = tabulated(r, np.sqrt(1 + r))
    assert float(t.sigma(2.0)) == pytest.approx(np.sqrt(3.0), rel=1e-4)


def test_sup_alpha():
    assert sup_alpha(sqrt_affine(1.0, 1.0), 1.0) == pytest.approx(3.0)
    assert sup_alpha(constant(2.0), 1.0, eps=0.5) == pytest.approx(4.5)
