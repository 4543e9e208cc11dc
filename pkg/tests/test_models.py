import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import POPP_HEISENBERG
from srlab.models import (ChartError, Heisenberg, KeplerHeisenberg, MagneticTorus, PhasePoint,
                          contact_covector, cometric, covector_from_frame, get_model,
                          on_characteristic_cone, popp_volume, reeb_field, reeb_momentum)

MODELS = [Heisenberg(), MagneticTorus(b=1.0), MagneticTorus(b=2.0), MagneticTorus(b=0.7),
          KeplerHeisenberg()]
IDS = ["heisenberg", "torus-b1", "torus-b2", "torus-b0.7", "kepler"]

coord = st.floats(-3.0, 3.0, allow_nan=False)


@pytest.mark.parametrize("model", MODELS, ids=IDS)
def test_frame_invariants_on_1000_points(model):
    pts = model.sample_points(np.random.default_rng(7), 1000)
    worst = np.zeros(4)
    for x in pts:
        X, Y = model.frame(x)
        a = model.alpha(x)
        R = model.reeb(x)
        M = model.dalpha(x)
        vals = [a @ X, a @ Y, a @ R - 1.0, X @ M @ Y - 1.0]
        worst = np.maximum(worst, np.abs(vals))
        assert np.abs(M @ R).max() < 1e-10 * max(1.0, np.abs(M).max())
    assert worst.max() < 1e-12, worst


@pytest.mark.parametrize("model", MODELS, ids=IDS)
def test_closed_form_jacobians_match_differences(model):
    x = model.sample_points(np.random.default_rng(3), 1)[0]
    dX, dY = model.frame_jacobian(x)
    da = model.alpha_jacobian(x)
    h = 1e-6
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        Xp, Yp = model.frame(x + e)
        Xm, Ym = model.frame(x - e)
        np.testing.assert_allclose(dX[:, j], (Xp - Xm) / (2 * h), atol=1e-7)
        np.testing.assert_allclose(dY[:, j], (Yp - Ym) / (2 * h), atol=1e-7)
        np.testing.assert_allclose(da[:, j], (model.alpha(x + e) - model.alpha(x - e)) / (2 * h), atol=1e-7)


def test_heisenberg_instance_data():
    H = Heisenberg()
    x = np.array([0.7, -1.2, 3.0])
    X, Y = H.frame(x)
    np.testing.assert_array_equal(X, [1, 0, 0])
    np.testing.assert_array_equal(Y, [0, 1, -0.7])
    np.testing.assert_array_equal(H.alpha(x), [0, 0.7, 1])
    np.testing.assert_array_equal(H.reeb(x), [0, 0, 1])


def test_cometric_examples():
    H = Heisenberg()
    assert cometric(H, PhasePoint((0, 0, 0), (1, 0, 0))) == 1.0
    assert cometric(H, PhasePoint((1, 0, 0), (0, 0, 1))) == 1.0
    assert cometric(H, PhasePoint((0.4, 2.0, -1.0), (0, 0.4, 1))) == 0.0


def test_kepler_origin_is_a_chart_error():
    K = KeplerHeisenberg()
    with pytest.raises(ChartError):
        cometric(K, PhasePoint((0, 0, 0), (1, 0, 0)))
    with pytest.raises(ChartError):
        reeb_field(K, (0.0, 0.0, 1e-8))
    with pytest.raises(ValueError):
        KeplerHeisenberg(r_min=0.0)


def test_kepler_cometric_is_scaled_flat_cometric():
    K = KeplerHeisenberg()
    x = np.array([0.4, -0.3, 0.2])
    xi = np.array([0.5, 1.1, -0.7])
    D = (x[0] ** 2 + x[1] ** 2) ** 2 + 16 * x[2] ** 2
    X0 = np.array([1, 0, x[1] / 2])
    Y0 = np.array([0, 1, -x[0] / 2])
    expected = math.sqrt(D) * ((xi @ X0) ** 2 + (xi @ Y0) ** 2)
    assert cometric(K, PhasePoint(x, xi)) == pytest.approx(expected, rel=1e-14)


def test_reeb_field_examples():
    H = Heisenberg()
    rng = np.random.default_rng(0)
    for x in rng.normal(size=(10, 3)):
        np.testing.assert_array_equal(reeb_field(H, x), [0, 0, 1])
    for b in (1.0, 2.0, 0.5):
        T = MagneticTorus(b=b)
        for x in rng.normal(size=(10, 3)):
            np.testing.assert_array_equal(reeb_field(T, x), [0, 0, b])


@pytest.mark.parametrize("model", MODELS, ids=IDS)
def test_alpha_of_reeb_is_one_at_100_points(model):
    for x in model.sample_points(np.random.default_rng(11), 100):
        assert abs(model.alpha(x) @ reeb_field(model, x) - 1.0) < 1e-12


def test_reeb_momentum_examples():
    H = Heisenberg()
    x = (0.3, -0.2, 1.0)
    assert reeb_momentum(H, contact_covector(H, x, 5.0)) == pytest.approx(5.0, abs=1e-15)
    assert reeb_momentum(H, PhasePoint(x, (1, 0, 0))) == 0.0
    # a D-pairing part on top of s*alpha does not change rho
    p = covector_from_frame(H, x, 0.8, -1.3, 0.0)
    xi = 2.5 * H.alpha(np.array(x)) + np.array(p.momentum)
    assert reeb_momentum(H, PhasePoint(x, xi)) == pytest.approx(2.5, abs=1e-14)


@settings(max_examples=200, deadline=None)
@given(x=st.tuples(coord, coord, coord), s=st.floats(-10, 10).filter(lambda v: abs(v) > 1e-3),
       a=st.floats(-2, 2), c=st.floats(-2, 2))
def test_characteristic_cone_characterization(x, s, a, c):
    for model in (Heisenberg(), MagneticTorus(b=2.0)):
        on = contact_covector(model, x, s)
        assert cometric(model, on) < 1e-20 * (1 + s * s) + 1e-24
        assert on_characteristic_cone(model, on)
        p = covector_from_frame(model, x, a, c, s)
        if a * a + c * c > 1e-6:
            assert not on_characteristic_cone(model, p)
            assert cometric(model, p) == pytest.approx(a * a + c * c, rel=1e-9, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(x=st.tuples(coord, coord, coord).filter(lambda v: math.hypot(*v) > 0.05),
       xi=st.tuples(coord, coord, coord))
def test_cone_iff_parallel_to_alpha_kepler(x, xi):
    K = KeplerHeisenberg()
    xi = np.array(xi)
    if np.linalg.norm(xi) < 1e-3:
        return
    a = K.alpha(np.array(x))
    parallel = np.linalg.norm(np.cross(xi, a)) <= 1e-9 * np.linalg.norm(xi) * np.linalg.norm(a)
    zero = cometric(K, PhasePoint(x, xi)) <= 1e-18 * (xi @ xi)
    assert parallel == zero or not parallel and cometric(K, PhasePoint(x, xi)) < 1e-12


def test_popp_volume():
    assert popp_volume(Heisenberg()) == pytest.approx(POPP_HEISENBERG, rel=1e-15)
    assert popp_volume(MagneticTorus(b=1.0)) == pytest.approx(POPP_HEISENBERG, rel=1e-15)
    assert popp_volume(MagneticTorus(b=2.0)) == pytest.approx(POPP_HEISENBERG / 2, rel=1e-15)
    # quadrature route agrees with the closed form
    assert popp_volume(Heisenberg(), quad_points=6) == pytest.approx(POPP_HEISENBERG, rel=1e-13)
    for c in (0.5, 3.0):
        assert popp_volume(Heisenberg(), scale=c, quad_points=4) == pytest.approx(c * c * POPP_HEISENBERG, rel=1e-13)
    with pytest.raises(ChartError):
        popp_volume(KeplerHeisenberg())
    with pytest.raises(ChartError):
        popp_volume(MagneticTorus(b=0.7))


def test_deck_transformations_preserve_frame_pairings():
    for model in (Heisenberg(), MagneticTorus(b=2.0)):
        x = np.array([0.3, -0.4, 1.1])
        xi = np.array([0.2, 0.9, -1.3])
        for n in [(1, 0, 0), (0, 1, 0), (0, 0, 1), (2, -1, 3)]:
            gx = model.deck(x, n)
            assert model.nearest_deck(x, gx) == n
            # left translations carry the frame, so pairings of the pulled-back covector agree
            J = np.eye(3)
            if n[0]:
                J[2, 1] = -model.b * model.side * n[0]
            X, Y = model.frame(x)
            Xg, Yg = model.frame(gx)
            np.testing.assert_allclose(J @ X, Xg, atol=1e-14)
            np.testing.assert_allclose(J @ Y, Yg, atol=1e-14)


def test_get_model():
    assert isinstance(get_model("heisenberg"), Heisenberg)
    assert get_model("magnetic-torus", b=3.0).b == 3.0
    assert get_model("kepler", r_min=0.01).r_min == 0.01
    with pytest.raises(ValueError, match="unknown model"):
        get_model("sphere")


def test_phase_point_validation():
    with pytest.raises(ValueError):
        PhasePoint((0, 0, math.nan), (1, 0, 0))
    with pytest.raises(ValueError):
        PhasePoint((0, 0), (1, 0, 0))
    p = PhasePoint((1, 2, 3), (4, 5, 6))
    assert PhasePoint.from_array(p.as_array()) == p
