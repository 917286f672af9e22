import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from wiedlab.combustion import (CombustionModel, ModelError, ZERO_MODEL,
                                beta_eval, beta_prime_eval, lipschitz_bound,
                                phi_eval, sup_bound, validate_model)

BUMP = validate_model(CombustionModel("polynomial-bump"))
HAT = validate_model(CombustionModel("piecewise-linear-hat"))


def test_bump_value_at_half():
    # 3 v (1 - v), normalization forced by int_0^1 v(1-v) = 1/6
    assert abs(beta_eval(BUMP, 0.5) - 0.75) < 1e-14


@pytest.mark.parametrize("model", [BUMP, HAT, ZERO_MODEL])
@pytest.mark.parametrize("v", [-0.3, 2.0, -1e-9, 1.0 + 1e-9])
def test_support(model, v):
    assert beta_eval(model, v) == 0.0


def test_phi_saturation():
    for model in (BUMP, HAT):
        assert phi_eval(model, 1.0) == pytest.approx(1.0, abs=1e-14)
        assert phi_eval(model, 3.0) == pytest.approx(1.0, abs=1e-14)
        assert phi_eval(model, 0.0) == 0.0
        assert phi_eval(model, -2.0) == 0.0


def test_phi_closed_form_vs_quadrature():
    # Phi(1/2) = 2 (1.5 v^2 - v^3)|_{1/2} = 1/2 for the default bump
    assert abs(phi_eval(BUMP, 0.5) - 0.5) < 1e-14
    for v in (0.2, 0.35, 0.8):
        ref, _ = quad(lambda s: 2.0 * beta_eval(BUMP, s), 0.0, v)
        assert abs(phi_eval(BUMP, v) - ref) < 1e-10


def test_phi_prime_is_two_beta():
    vs = np.linspace(0.05, 0.95, 37)
    h = 1e-7  # small enough that the hat kink's curvature jump stays below tol
    for model in (BUMP, HAT):
        fd = (phi_eval(model, vs + h) - phi_eval(model, vs - h)) / (2 * h)
        assert np.max(np.abs(fd - 2.0 * beta_eval(model, vs))) < 1e-6


def test_custom_table_rescaled_by_three():
    v = np.linspace(0.0, 1.0, 2001)
    model = validate_model(CombustionModel(
        "custom-table", {"v": v.tolist(), "beta": (v * (1 - v)).tolist()}))
    assert model.params["rescale_factor"] == pytest.approx(3.0, rel=1e-6)
    tb = np.asarray(model.params["beta"])
    assert abs(np.trapezoid(tb, v) - 0.5) < 1e-12


def test_support_violation_reported_with_location():
    with pytest.raises(ModelError, match="support violation at v=1.1"):
        validate_model(CombustionModel(
            "custom-table", {"v": [0.0, 0.5, 1.1], "beta": [0.0, 1.0, 0.2]}))


def test_negative_beta_rejected():
    with pytest.raises(ModelError, match="negative"):
        validate_model(CombustionModel(
            "custom-table", {"v": [0.0, 0.5, 1.0], "beta": [0.0, -1.0, 0.0]}))


def test_valid_hat_passes_unchanged():
    model = validate_model(CombustionModel("piecewise-linear-hat",
                                           {"peak": 0.5}))
    assert model.kind == "piecewise-linear-hat"
    assert model.params == {"peak": 0.5}
    assert abs(beta_eval(model, 0.5) - 1.0) < 1e-14  # peak height 1


def test_sup_and_lipschitz_reported():
    assert abs(sup_bound(BUMP) - 0.75) < 1e-6
    assert abs(BUMP.lipschitz - 3.0) < 1e-2
    assert abs(HAT.lipschitz - 2.0) < 1e-12
    assert sup_bound(ZERO_MODEL) == 0.0


@settings(max_examples=60, deadline=None)
@given(v1=st.floats(-1.0, 2.0), v2=st.floats(-1.0, 2.0))
def test_phi_monotone_and_bounded(v1, v2):
    lo, hi = min(v1, v2), max(v1, v2)
    for model in (BUMP, HAT):
        plo, phi_ = phi_eval(model, lo), phi_eval(model, hi)
        assert plo <= phi_ + 1e-15
        assert -1e-15 <= plo <= 1 + 1e-15
        assert beta_eval(model, v1) >= 0.0


def test_beta_prime_matches_fd():
    vs = np.linspace(0.05, 0.95, 19)
    h = 1e-7
    fd = (beta_eval(BUMP, vs + h) - beta_eval(BUMP, vs - h)) / (2 * h)
    assert np.max(np.abs(fd - beta_prime_eval(BUMP, vs))) < 1e-5


def test_unknown_kind_rejected():
    with pytest.raises(ModelError):
        CombustionModel("frobnicator")
