import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaycoord.dynamics import (
    CAT_MATRIX,
    GOLDEN_OMEGA,
    chart_cocycle,
    make_dynamics,
    make_rotation,
    orbit,
    orbit_charts,
    periodic_mask,
    periodic_screen,
    pushforward,
)
from delaycoord.geometry import tangent_frame

LOG_LAMBDA = np.log((3 + np.sqrt(5)) / 2)
unit = st.floats(0, 1, allow_nan=False, exclude_max=True)


def test_cat_fixed_point_and_half(cat):
    np.testing.assert_array_equal(cat.forward(np.zeros(2)), [0, 0])
    np.testing.assert_array_equal(cat.forward(np.array([0.5, 0.5])), [0.5, 0.0])


def test_cat_eigenvalues():
    w = np.sort(np.linalg.eigvalsh(CAT_MATRIX))
    np.testing.assert_allclose(w, [(3 - np.sqrt(5)) / 2, (3 + np.sqrt(5)) / 2], rtol=1e-14)
    assert np.log(w[1]) == pytest.approx(0.9624236501192069, abs=1e-15)


def test_rotation_basics(rotation):
    assert rotation.forward(np.zeros(1))[0] == pytest.approx(0.6180339887, abs=1e-15)
    np.testing.assert_array_equal(rotation.chart_derivative(np.array([0.37])), [[1.0]])


def test_rotation_closest_return(rotation):
    res = [c.residual for c in periodic_screen(rotation, 0.0, 4, 1e-6)]
    assert int(np.argmin(res)) + 1 == 3
    # {3 w} = 0.854101966..., distance to 0 is 1 - that
    assert min(res) == pytest.approx(1 - (3 * GOLDEN_OMEGA - 1), abs=1e-12)
    assert min(res) == pytest.approx(0.1459, abs=1e-4)


def test_orbit_edge_cases(cat):
    seg = orbit(cat, [0.3, 0.4], 0)
    assert len(seg) == 1 and seg.cocycle.shape == (0, 2, 2)
    fixed = orbit(cat, [0, 0], 5)
    np.testing.assert_array_equal(fixed.charts, np.zeros((6, 2)))
    quarter = orbit(make_rotation(0.25), 0.0, 4)
    np.testing.assert_allclose(quarter.charts[:, 0], [0, 0.25, 0.5, 0.75, 0], atol=1e-15)


def test_orbit_steps_follow_forward(cat, rng):
    seg = orbit(cat, rng.random(2), 50)
    for a, b in zip(seg.charts[:-1], seg.charts[1:]):
        assert cat.manifold.distance(cat.forward(a), b) < 1e-10
    np.testing.assert_array_equal(seg.cocycle, np.broadcast_to(CAT_MATRIX, (50, 2, 2)))


def test_orbit_charts_batched_matches_single(cat, rng):
    X = rng.random((5, 2))
    B = orbit_charts(cat, X, 7)
    assert B.shape == (5, 8, 2)
    for i in range(5):
        np.testing.assert_array_equal(B[i], orbit_charts(cat, X[i], 7))


def test_periodic_screen_cases(cat, rotation):
    assert all(c.periodic and c.residual == 0 for c in periodic_screen(cat, [0, 0], 3, 1e-8))
    flags = [c.periodic for c in periodic_screen(cat, [0.5, 0.5], 3, 1e-8)]
    assert flags == [False, False, True]
    np.testing.assert_array_equal(orbit_charts(cat, [0.5, 0.5], 3), [[0.5, 0.5], [0.5, 0], [0, 0.5], [0.5, 0.5]])
    for u in np.linspace(0, 1, 17, endpoint=False):
        assert not any(c.periodic for c in periodic_screen(rotation, u, 4, 1e-6))
    with pytest.raises(ValueError):
        periodic_screen(cat, [0.1, 0.2], 0, 1e-8)


def test_periodic_mask_agrees_with_screen(cat, rng):
    X = np.vstack([rng.random((20, 2)), [[0, 0], [0.5, 0.5], [0.2, 0.4]]])
    mask = periodic_mask(cat, X, 3)
    ref = [any(c.periodic for c in periodic_screen(cat, x, 3, 1e-8)) for x in X]
    np.testing.assert_array_equal(mask, ref)


def test_make_dynamics_ids():
    assert make_dynamics("cat").name == "cat"
    assert make_dynamics("rotation:0.25").forward(np.zeros(1))[0] == 0.25
    assert make_dynamics("rotation").name == f"rotation:{GOLDEN_OMEGA!r}"
    with pytest.raises(KeyError):
        make_dynamics("henon")


@pytest.mark.parametrize("system", ["cat", "rotation"])
def test_inverse_and_derivative(system, rng):
    T = make_dynamics(system)
    M = T.manifold
    u = rng.random((1000, M.d))
    back = T.inverse(T.forward(u))
    assert M.distance(back, u).max() < 1e-10
    assert T.manifold.distance(T.iterate(T.iterate(u, 5), -5), u).max() < 1e-10
    h = 1e-6
    for x in u[:100]:
        D = T.chart_derivative(x)
        assert abs(np.linalg.det(D)) == 1.0
        for j in range(M.d):
            e = np.zeros(M.d)
            e[j] = h
            # unwrapped difference: forward is affine mod 1
            diff = T.forward(x + e) - T.forward(x - e)
            diff = (diff + 0.5) % 1.0 - 0.5
            np.testing.assert_allclose(diff / (2 * h), D[:, j], rtol=1e-6)


def test_pushforward_identity_and_cube(cat):
    F = tangent_frame(cat.manifold, [0.3, 0.7])
    _, P0 = pushforward(cat, F, 0)
    np.testing.assert_array_equal(P0, np.eye(2))
    _, P3 = pushforward(cat, F, 3)
    np.testing.assert_allclose(np.linalg.svd(P3, compute_uv=False),
                               np.linalg.svd([[13, 8], [8, 5]], compute_uv=False), rtol=1e-10)


def test_pushforward_growth_rate(cat):
    w, V = np.linalg.eigh(CAT_MATRIX)
    v = V[:, 1]
    F = tangent_frame(cat.manifold, [0.123, 0.456])
    _, P = pushforward(cat, F, 20)
    assert np.log(np.linalg.norm(P @ v)) / 20 == pytest.approx(LOG_LAMBDA, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.tuples(unit, unit), st.integers(0, 8), st.integers(0, 8))
def test_cocycle_consistency(x, n, m):
    T = make_dynamics("cat")
    F = tangent_frame(T.manifold, np.array(x))
    Fn, Pn = pushforward(T, F, n)
    _, Pm = pushforward(T, Fn, m)
    _, Pnm = pushforward(T, F, n + m)
    assert np.linalg.norm(Pnm - Pm @ Pn, 2) <= 1e-10 * max(1.0, np.linalg.norm(Pnm, 2))


def test_chart_cocycle_prefix_products(cat, rng):
    charts = orbit_charts(cat, rng.random(2), 4)
    C = chart_cocycle(cat, charts)
    for i in range(5):
        np.testing.assert_array_equal(C[i], np.linalg.matrix_power(CAT_MATRIX, i))
