import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaycoord.config import ExperimentConfig
from delaycoord.dynamics import orbit
from delaycoord.embedding import DelayMap, delay_differentials
from delaycoord.lyapunov import (
    OseledetsData,
    RankDeficient,
    direct_exponents,
    distortion,
    em_occupancy,
    observed_cocycle,
    observed_frequency,
    oseledets_data,
    pseudo_inverse,
)
from delaycoord.observables import MonomialBasis, Observable
from delaycoord.runner import make_delay_map

CAT_MATRIX = np.array([[2.0, 1.0], [1.0, 1.0]])
CAT_EXPONENT = math.log((3 + math.sqrt(5)) / 2)
START = np.array([0.137, 0.682])


def sin_angle(a, b):
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    return abs(a[0] * b[1] - a[1] * b[0])


def test_cat_exponent_oracle():
    eig = np.linalg.eigvalsh(CAT_MATRIX)
    assert CAT_EXPONENT == pytest.approx(np.log(eig.max()), rel=1e-15)
    assert CAT_EXPONENT == pytest.approx(0.9624236501192069, abs=1e-15)


def test_rotation_exponent_is_zero(rotation):
    [(chi, v)] = direct_exponents(rotation, np.array([0.3]), 500)
    assert chi == 0.0
    assert abs(v[0]) == 1.0


def test_cat_direct_exponents(cat):
    (lo, v_lo), (hi, v_hi) = direct_exponents(cat, START, 1000)
    assert abs(lo + CAT_EXPONENT) < 1e-6 and abs(hi - CAT_EXPONENT) < 1e-6
    assert abs(lo + hi) < 1e-8
    w, V = np.linalg.eigh(CAT_MATRIX)
    assert sin_angle(v_lo, V[:, 0]) < 1e-6
    assert sin_angle(v_hi, V[:, 1]) < 1e-6


def test_direct_exponents_needs_ten_steps(cat):
    with pytest.raises(ValueError):
        direct_exponents(cat, START, 5)


def test_oseledets_data_cat(cat):
    od = oseledets_data(cat)
    assert od.exponents == pytest.approx((-CAT_EXPONENT, CAT_EXPONENT), abs=1e-14)
    assert sum(od.multiplicities) == 2
    stable, unstable = od.splitting(START)
    np.testing.assert_allclose(CAT_MATRIX @ unstable[:, 0], math.exp(CAT_EXPONENT) * unstable[:, 0], atol=1e-12)
    np.testing.assert_allclose(CAT_MATRIX @ stable[:, 0], math.exp(-CAT_EXPONENT) * stable[:, 0], atol=1e-12)
    with pytest.raises(ValueError):
        OseledetsData((1.0, 0.0), (1, 1), lambda x: [])


def test_oseledets_data_rotation(rotation):
    od = oseledets_data(rotation)
    assert od.exponents == (0.0,) and od.multiplicities == (1,)


def test_identity_at_time_zero(cat_dm):
    oc = observed_cocycle(cat_dm, START, 0)
    rng = np.random.default_rng(0)
    for _ in range(5):
        w = oc.G_start @ rng.standard_normal(2)
        assert np.linalg.norm(oc.operator @ w - w) < 1e-10


def test_conjugation_at_fixed_point(cat):
    # T^n x = x, so the observed operator is G (D T^n) G^+ with G injective
    basis = MonomialBasis.for_delay(4, 2)
    alpha = np.random.default_rng(1).standard_normal(basis.size) / math.sqrt(basis.size)
    dm = DelayMap(cat, Observable(basis, alpha, "cos1"), 2)
    oc = observed_cocycle(dm, np.array([0.0, 0.0]), 3)
    ev = np.sort(np.linalg.eigvals(oc.operator).real)
    expected = np.sort(np.linalg.eigvalsh(np.linalg.matrix_power(CAT_MATRIX, 3)))
    np.testing.assert_allclose(ev, expected, rtol=1e-8)


def test_expanding_growth_matches(cat_dm):
    n = 50
    oc = observed_cocycle(cat_dm, START, n)
    od = oseledets_data(cat_dm.dynamics)
    v = oc.G_start @ od.splitting(START)[1][:, 0]
    rate = math.log(np.linalg.norm(oc.operator @ v) / np.linalg.norm(v)) / n
    assert abs(rate - CAT_EXPONENT) < 0.05


def test_observed_singular_values_within_distortion(cat_dm):
    n = 20
    oc = observed_cocycle(cat_dm, START, n)
    s_obs = np.linalg.svd(oc.restricted, compute_uv=False)
    s_dir = np.linalg.svd(oc.pushforward, compute_uv=False)
    M0, Mn = distortion(np.stack([oc.G_start, oc.G_end]), 2)
    lo, hi = s_dir / (M0 * Mn), s_dir * (M0 * Mn)
    assert np.all(s_obs >= lo) and np.all(s_obs <= hi)


def test_pseudo_inverse_and_rank_deficiency():
    G = np.array([[1.0, 0.0], [0.0, 2.0], [0.0, 0.0]])
    np.testing.assert_allclose(pseudo_inverse(G) @ G, np.eye(2), atol=1e-15)
    with pytest.raises(RankDeficient):
        pseudo_inverse(np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]]))
    assert distortion(np.zeros((1, 3, 2)), 2)[0] == np.inf


def test_zero_observable_is_rank_deficient(cat):
    basis = MonomialBasis.for_delay(4, 3)
    dm = DelayMap(cat, Observable(basis, np.zeros(basis.size), "zero"), 3)
    with pytest.raises(RankDeficient):
        observed_cocycle(dm, START, 3)
    with pytest.raises(RankDeficient):
        observed_frequency(dm, START, 10, 0.1)


@pytest.fixture(scope="module")
def cat_report(cat_dm):
    return observed_frequency(cat_dm, START, 1000, [0.02, 0.05, 0.1])


def test_cat_frequency(cat_report):
    assert cat_report.observed.shape == (1000, 2)
    assert cat_report.fraction(0.05) >= 0.95
    assert float(cat_report.observed[-1].max()) < 0.02


def test_frequency_monotone_in_eps(cat_report):
    f = [cat_report.fraction(e) for e in np.linspace(0.0, 1.0, 21)]
    assert all(0 <= a <= b <= 1 for a, b in zip(f, f[1:]))
    assert list(cat_report.fractions) == [0.02, 0.05, 0.1]


def test_deviation_bound_term_by_term(cat_report):
    ok = np.isfinite(cat_report.observed).all(axis=1)
    lhs = cat_report.observed[ok]
    rhs = cat_report.direct[ok] + cat_report.bound()[ok, None]
    assert np.all(lhs <= rhs + 1e-12)


def test_rotation_frequency():
    dm = make_delay_map(ExperimentConfig(system="rotation", k=2, seed=0))
    rep = observed_frequency(dm, np.array([0.3]), 1000, 0.1)
    assert rep.fraction(0.1) >= 0.99


def test_single_step_edge(cat_dm):
    rep = observed_frequency(cat_dm, START, 1, 0.0)
    assert rep.observed.shape == (1, 2)
    first = float(rep.observed[0].max())
    assert first > 0
    assert rep.fraction(first / 2) == 0.0
    assert rep.fraction(first * 2) == 1.0
    with pytest.raises(ValueError):
        observed_frequency(cat_dm, START, 0, 0.1)


def test_em_occupancy(cat_dm):
    seg = orbit(cat_dm.dynamics, START, 2000)
    dist = distortion(delay_differentials(cat_dm, seg.charts), 2)
    np.testing.assert_array_equal(em_occupancy(cat_dm, seg, [dist.min() * 0.99, dist.max()]), [0.0, 1.0])
    occ = em_occupancy(cat_dm, seg.charts, np.logspace(0, 3, 12))
    assert np.all(np.diff(occ) >= 0)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0.1, 1e4), min_size=2, max_size=8))
def test_em_occupancy_monotone_property(grid):
    dm = make_delay_map(ExperimentConfig(system="cat", k=3, seed=0))
    charts = np.random.default_rng(0).random((200, 2))
    grid = sorted(grid)
    occ = em_occupancy(dm, charts, grid)
    assert np.all(np.diff(occ) >= 0) and np.all((occ >= 0) & (occ <= 1))
