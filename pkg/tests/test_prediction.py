import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaycoord.dynamics import make_rotation
from delaycoord.embedding import DelayMap, delay_eval_many
from delaycoord.geometry import make_circle
from delaycoord.observables import MonomialBasis, Observable
from delaycoord.prediction import (
    EmptyBall,
    PredictionDataset,
    chi,
    error_curve,
    log_eps_grid,
    predict,
    resolution_floor,
    sigma,
)
from delaycoord.sampling import MeasureSampler, PointCloud, sample


def toy_dataset(embedded, images):
    M = make_circle()
    embedded = np.asarray(embedded, dtype=float)
    charts = np.zeros((len(embedded), 1))
    return PredictionDataset(PointCloud(M, charts, embedded), images)


@pytest.fixture(scope="module")
def random_ds():
    rng = np.random.default_rng(5)
    return toy_dataset(rng.random((500, 3)), rng.standard_normal((500, 3)))


def test_singleton_and_global_balls(random_ds):
    y = random_ds.cloud.embedded[42]
    gaps = np.linalg.norm(random_ds.cloud.embedded - y, axis=1)
    tiny = np.sort(gaps)[1] / 2
    np.testing.assert_array_equal(chi(random_ds, y, tiny), random_ds.images[42])
    assert sigma(random_ds, y, tiny) == 0.0
    np.testing.assert_allclose(chi(random_ds, y, 10.0), random_ds.images.mean(axis=0), atol=1e-12)


def test_two_point_ball():
    p, q = np.array([1.0, 2.0]), np.array([4.0, -2.0])
    ds = toy_dataset([[0.0], [0.1], [5.0]], [p, q, [0.0, 0.0]])
    assert sigma(ds, [0.05], 0.2) == pytest.approx(np.linalg.norm(p - q) / 2, rel=1e-15)


def test_constant_observable_has_zero_spread(rotation):
    basis = MonomialBasis.for_delay(2, 2)
    dm = DelayMap(rotation, Observable(basis, np.zeros(basis.size), "zero"), 2)
    ds = PredictionDataset.from_delay_map(dm, np.random.default_rng(0).random((50, 1)))
    for eps in (1e-3, 0.1, 10.0):
        assert sigma(ds, [0.0, 0.0], eps) == 0.0


def test_empty_ball(random_ds):
    with pytest.raises(EmptyBall):
        chi(random_ds, [10.0, 10.0, 10.0], 0.1)
    with pytest.raises(EmptyBall):
        sigma(random_ds, [10.0, 10.0, 10.0], 0.1)


def test_chi_matches_linear_scan(random_ds):
    rng = np.random.default_rng(1)
    E, I = random_ds.cloud.embedded, random_ds.images
    for _ in range(50):
        y = rng.random(3)
        eps = rng.uniform(0.1, 0.6)
        inside = np.linalg.norm(E - y, axis=1) < eps
        if not inside.any():
            continue
        np.testing.assert_allclose(chi(random_ds, y, eps), I[inside].mean(axis=0), atol=1e-12, rtol=0)
        dev = I[inside] - I[inside].mean(axis=0)
        assert sigma(random_ds, y, eps) == pytest.approx(np.sqrt((dev ** 2).sum(1).mean()), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.05, 1.0))
def test_parallel_axis_identity(seed, eps):
    rng = np.random.default_rng(seed)
    ds = toy_dataset(rng.random((80, 2)), rng.standard_normal((80, 3)) * 3)
    y = ds.cloud.embedded[0]
    inside = np.linalg.norm(ds.cloud.embedded - y, axis=1) < eps
    s, c = sigma(ds, y, eps), chi(ds, y, eps)
    assert s >= 0
    assert s ** 2 + c @ c == pytest.approx(np.mean(np.sum(ds.images[inside] ** 2, axis=1)), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(-8, 8))
def test_translation_invariance(seed, shift_exp):
    rng = np.random.default_rng(seed)
    emb, img = rng.random((60, 2)), rng.standard_normal((60, 2))
    # power-of-two shifts of dyadic images keep every sum exact
    img = np.round(img * 64) / 64
    shift = np.array([2.0 ** shift_exp, -(2.0 ** shift_exp)])
    a = toy_dataset(emb, img)
    b = toy_dataset(emb, img + shift)
    assert sigma(a, emb[3], 0.5) == sigma(b, emb[3], 0.5)


def test_predict_nearest_and_ties():
    ds = toy_dataset([[0.0], [1.0], [1.0], [3.0]], [[10.0], [11.0], [12.0], [13.0]])
    np.testing.assert_array_equal(predict(ds, [3.0]), [13.0])
    np.testing.assert_array_equal(predict(ds, [1.0]), [11.0])
    np.testing.assert_array_equal(predict(ds, [2.0]), [11.0])
    np.testing.assert_array_equal(predict(ds, [2.0], 0.5), predict(ds, [2.0]))


def test_images_shift_structure(cat_dm):
    charts = np.random.default_rng(2).random((200, 2))
    ds = PredictionDataset.from_delay_map(cat_dm, charts)
    np.testing.assert_array_equal(ds.images[:, :-1], ds.cloud.embedded[:, 1:])
    np.testing.assert_array_equal(ds.images, delay_eval_many(cat_dm, cat_dm.dynamics.forward(charts)))
    with pytest.raises(ValueError):
        PredictionDataset(ds.cloud, ds.images[:-1])


def test_log_eps_grid():
    g = log_eps_grid(1e-3, 1e-1, 3)
    np.testing.assert_allclose(g, [1e-3, 1e-2, 1e-1])
    with pytest.raises(ValueError):
        log_eps_grid(0.1, 0.01, 4)
    with pytest.raises(ValueError):
        log_eps_grid(0.01, 0.1, 1)


def test_rotation_identity_regime():
    T = make_rotation()
    M = T.manifold
    charts = sample(MeasureSampler("lebesgue", M, seed=0), 20_000)
    ds = PredictionDataset.from_map(T, M.ambient, charts)
    floor = resolution_floor(ds)
    grid = log_eps_grid(max(2 * floor, 1e-3), 0.1, 6)
    curve = error_curve(ds, 64, grid, seed=0)
    assert curve.fitted.all()
    valid = ~np.isnan(curve.sigma_cells)
    # a rotation is an isometry of the ambient circle
    assert np.all(curve.sigma_cells[valid] <= np.broadcast_to(curve.eps, curve.sigma_cells.shape)[valid])
    assert curve.slope >= 0.9
    rows = list(curve.rows())
    assert len(rows) == 6 and all(r[1] >= 0 for r in rows)


def test_error_curve_drops_sparse_cells(random_ds):
    curve = error_curve(random_ds, 20, [1e-4, 1e-3, 0.3, 0.6], seed=0)
    assert np.isnan(curve.sigma_cells[:, 0]).all()
    assert all(c < 5 for _, _, c in curve.dropped)
    assert len(curve.dropped) == int(np.sum(curve.counts < 5))
    assert not curve.fitted[0] and not curve.fitted[1]
    assert np.isfinite(curve.slope)


def test_mirror_probes_keep_spread():
    T = make_rotation()
    M = T.manifold
    charts = sample(MeasureSampler("lebesgue", M, seed=0), 10_000)
    ds = PredictionDataset.from_map(T, lambda c: M.ambient(c)[:, :1], charts)
    diam = float(np.ptp(ds.cloud.embedded))
    for u in (0.2, 0.3, 0.7, 0.8):
        y = M.ambient(np.array([[u]]))[0, :1]
        assert sigma(ds, y, 10 ** -2.5) > 0.1 * diam


@pytest.mark.slow
def test_held_out_prediction(cat_dm):
    T = cat_dm.dynamics
    train = sample(MeasureSampler("lebesgue", T.manifold, seed=0), 100_000)
    test = sample(MeasureSampler("lebesgue", T.manifold, seed=1), 1000)
    ds = PredictionDataset.from_delay_map(cat_dm, train)
    y = delay_eval_many(cat_dm, test)
    truth = delay_eval_many(cat_dm, T.forward(test))
    err = np.array([np.linalg.norm(predict(ds, yi) - ti) for yi, ti in zip(y, truth)])
    nn = np.median(ds.cloud.index.nearest_neighbor_distances(1))
    assert np.median(err) < 10 * nn
