"""Empirical checks of pointwise bi-Lipschitz regularity and local immersion.

The pointwise constant ``C(x)`` is estimated in two parts that mirror how
such bounds are proved: a global part (largest ratio of manifold distance to
embedded distance over the sampled set) and a local part (inverse of the
smallest singular value of the differential at ``x``).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .dynamics import chart_cocycle, orbit_charts, periodic_screen
from .embedding import DelayMap, delay_differentials, differential_parts, numerical_rank, pair_matrices
from .geometry import tangent_frame
from .observables import Observable, random_alphas, tangential_interpolation
from .sampling import STREAMS, PointCloud, worker_rng


class ExactCollision(RuntimeWarning):
    """Two distinct sample points have identical embedded coordinates."""


class PeriodicPoint(ValueError):
    pass


class DegenerateSingularValue(ValueError):
    pass


@dataclass(frozen=True)
class BiLipRecord:
    index: int
    c_global: float
    c_local: float
    witness: int
    collision: bool

    @property
    def constant(self) -> float:
        return max(self.c_global, self.c_local)


@dataclass
class BiLipReport:
    records: list[BiLipRecord]
    summary: dict = field(default_factory=dict)

    @property
    def finite_count(self) -> int:
        return sum(np.isfinite(r.c_global) for r in self.records)


def bilip_constant(pc: PointCloud, i: int, exclusion_radius: float = 0.0) -> BiLipRecord:
    """Global and local bi-Lipschitz constants of the embedding at cloud point ``i``."""
    if len(pc) < 2:
        raise ValueError("need at least two cloud points")
    if exclusion_radius < 0:
        raise ValueError("exclusion radius must be >= 0")
    M = pc.manifold
    rho = M.distance(pc.charts[i], pc.charts)
    gap = pc.index.distances(slice(None), pc.embedded[i])
    mask = (rho >= exclusion_radius) & (rho > 0)
    mask[i] = False
    collision = bool(np.any(mask & (gap == 0)))
    c_global, witness = 0.0, -1
    if mask.any():
        idx = np.flatnonzero(mask)
        with np.errstate(divide="ignore"):
            ratio = rho[idx] / gap[idx]
        j = int(np.argmax(ratio))
        c_global, witness = float(ratio[j]), int(idx[j])
    if collision:
        warnings.warn(f"exact collision in the embedding at cloud point {i}", ExactCollision)

    c_local = np.nan
    if pc.differential is not None:
        s = np.linalg.svd(pc.local_differential(i)[0], compute_uv=False)
        smin = s[-1] * pc.scale
        c_local = float(M.metric_scale / smin) if smin > 0 else np.inf
    return BiLipRecord(int(i), c_global, c_local, witness, collision)


def bilip_report(pc: PointCloud, indices, exclusion_radius: float = 0.0) -> BiLipReport:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExactCollision)
        records = [bilip_constant(pc, int(i), exclusion_radius) for i in indices]
    cg = np.array([r.c_global for r in records])
    cl = np.array([r.c_local for r in records])
    finite = cg[np.isfinite(cg)]
    summary = {
        "probes": len(records),
        "finite": int(np.isfinite(cg).sum()),
        "collisions": int(sum(r.collision for r in records)),
        "c_global_quantiles": np.quantile(finite, [0.5, 0.9, 1.0]).tolist() if finite.size else [],
        "c_local_median": float(np.nanmedian(cl)) if np.isfinite(cl).any() else None,
    }
    return BiLipReport(records, summary)


def immersion_scan(dm: DelayMap, charts, alphas, seed: int = 0, radius: float = 1.0) -> float:
    """Fraction of (alpha, x) pairs at which the delay differential has full rank ``d``.

    ``alphas`` is either a number of draws from the uniform ball of the given
    radius or an explicit ``(count, m)`` array of coefficient vectors.
    """
    d = dm.manifold.d
    if dm.k < d:
        raise ValueError(f"immersion needs k >= dim M (k={dm.k}, d={d})")
    m = dm.observable.basis.size
    if np.ndim(alphas) == 0:
        alphas = random_alphas(m, radius, worker_rng(seed, stream=STREAMS["immersion"]), int(alphas))
    alphas = np.atleast_2d(np.asarray(alphas, dtype=float))
    G_base, G_mono = differential_parts(dm, charts)
    G = G_base[None] + np.einsum("nkdm,am->ankd", G_mono, alphas)
    s = np.linalg.svd(G, compute_uv=False)
    return float(np.mean(numerical_rank(s) == d))


def surjectivity_targets(dm: DelayMap, x, targets) -> np.ndarray:
    """Differentials achieved by interpolating each target; shape like ``targets``.

    For each target ``L`` (``k x d`` in the frame at ``x``) the covector at
    ``T^i x`` is ``L_i`` composed with the inverse of ``D_x T^i`` and a
    polynomial with those tangential differentials is interpolated along the
    orbit.  The returned matrices are the delay differentials of these
    polynomials, computed independently by the forward chain rule.
    """
    M = dm.manifold
    u = M.chart(x)
    if dm.k > 1 and any(c.periodic for c in periodic_screen(dm.dynamics, u, dm.k - 1, 1e-8)):
        raise PeriodicPoint(f"{u} is periodic with period < {dm.k}")
    orb = orbit_charts(dm.dynamics, u, dm.k - 1)
    frames = [tangent_frame(M, c) for c in orb]
    C = chart_cocycle(dm.dynamics, orb)
    R0inv = np.linalg.inv(frames[0].chart_to_frame)
    P = [f.chart_to_frame @ Ci @ R0inv for f, Ci in zip(frames, C)]
    basis = dm.observable.basis
    achieved = []
    for L in np.asarray(targets, dtype=float).reshape(-1, dm.k, M.d):
        covectors = [L[i] @ np.linalg.inv(P[i]) for i in range(dm.k)]
        alpha = tangential_interpolation(M, frames, covectors, basis=basis)
        achieved.append(delay_differentials(dm, u[None], Observable(basis, alpha))[0])
    return np.array(achieved)


def surjectivity_check(dm: DelayMap, x, trials: int, seed: int = 0, targets=None) -> float:
    """Largest operator-norm error between requested and achieved differentials."""
    if targets is None:
        rng = worker_rng(seed, stream=STREAMS["targets"])
        targets = rng.standard_normal((trials, dm.k, dm.manifold.d))
    targets = np.asarray(targets, dtype=float).reshape(-1, dm.k, dm.manifold.d)
    achieved = surjectivity_targets(dm, x, targets)
    return float(np.max(np.linalg.norm(achieved - targets, ord=2, axis=(1, 2))))


@dataclass(frozen=True)
class PairRankReport:
    pairs: int
    screened_out: int
    full_rank: int
    min_relative_sigma: float

    @property
    def fraction(self) -> float:
        kept = self.pairs - self.screened_out
        return self.full_rank / kept if kept else float("nan")


def pair_rank_scan(dm: DelayMap, X, Y, tol: float = 1e-6, window: int | None = None) -> PairRankReport:
    """How often ``D_{x,y}`` has full rank ``k`` over pairs with ``y`` off the orbit of ``x``.

    The full orbit is replaced by ``T^-w x, ..., T^w x`` with ``w = window``
    (default ``2k``); pairs with ``y`` within ``tol`` of it are screened out
    before the rank test.
    """
    M, T = dm.manifold, dm.dynamics
    X = np.asarray(X, dtype=float).reshape(-1, M.d)
    Y = np.asarray(Y, dtype=float).reshape(-1, M.d)
    w = 2 * dm.k if window is None else window
    back = orbit_charts(T, T.iterate(X, -w), 2 * w)
    gaps = M.chart_distance(back, Y[:, None, :])
    keep = ~np.any(gaps < tol, axis=1)
    D, _ = pair_matrices(dm, X[keep], Y[keep])
    s = np.linalg.svd(D, compute_uv=False)
    rel = s[:, dm.k - 1] / s[:, 0]
    full = int(np.sum(numerical_rank(s) == dm.k))
    return PairRankReport(len(X), int((~keep).sum()), full, float(rel.min()) if rel.size else float("nan"))


@dataclass(frozen=True)
class IntersectionReport:
    pairs: int
    far_pairs: int
    violations: int
    eps_sep: float
    delta_emb: float

    @property
    def rate(self) -> float:
        return self.violations / self.pairs


def _pair_sample(pc: PointCloud, pairs: int, seed: int):
    rng = worker_rng(seed, stream=STREAMS["pairs"])
    i = rng.integers(0, len(pc), pairs)
    j = rng.integers(0, len(pc), pairs)
    rho = pc.manifold.distance(pc.charts[i], pc.charts[j])
    diff = pc.embedded[i] - pc.embedded[j]
    gap = np.sqrt(np.sum(diff * diff, axis=-1))
    return rho, gap


def self_intersection_rate(pc: PointCloud, eps_sep: float, delta_emb: float, pairs: int,
                           seed: int = 0) -> IntersectionReport:
    """Share of i.i.d. pairs that are far apart on ``M`` yet close after embedding."""
    return self_intersection_rates(pc, eps_sep, [delta_emb], pairs, seed)[0]


def self_intersection_rates(pc: PointCloud, eps_sep: float, deltas, pairs: int,
                            seed: int = 0) -> list[IntersectionReport]:
    """Rates for several thresholds on one shared pair sample."""
    if eps_sep <= 0 or np.any(np.asarray(deltas) <= 0):
        raise ValueError("eps_sep and delta_emb must be positive")
    rho, gap = _pair_sample(pc, pairs, seed)
    far = rho > eps_sep
    return [IntersectionReport(pairs, int(far.sum()), int(np.sum(far & (gap < dl))), eps_sep, float(dl))
            for dl in deltas]


@dataclass(frozen=True)
class SValueBound:
    fraction: float
    bound: float
    stderr: float
    sigma_p: float


def ball_projection_constant(m: int, p: int) -> float:
    """Density at 0 of a ``p``-dim orthogonal projection of the uniform unit ``m``-ball,
    times the volume of the unit ``p``-ball.

    For ``L`` with ``sigma_p(L) > 0`` and any ``z`` this is the smallest constant
    with ``P(|L a + z| <= eps) <= C (eps / (sigma_p r))^p`` for all ``eps``; the
    supremum is approached as ``eps -> 0`` when ``z = 0`` and ``L`` has ``p``
    equal nonzero singular values.
    """
    if not 1 <= p <= m:
        raise ValueError("need 1 <= p <= m")
    return float(np.exp(gammaln(m / 2 + 1) - gammaln(p / 2 + 1) - gammaln((m - p) / 2 + 1)))


def _ball_draws(m: int, r: float, rng: np.random.Generator, n: int) -> np.ndarray:
    return random_alphas(m, r, rng, n)


def svalue_measure_bound(L, z, r: float, eps: float, p: int, draws: int,
                         seed: int = 0) -> SValueBound:
    """Monte Carlo share of the ball ``B_m(0, r)`` where ``|L a + z| <= eps``.

    Returned alongside the scale-free bound ``(eps / (sigma_p(L) r))^p``.
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    z = np.asarray(z, dtype=float).reshape(-1)
    k, m = L.shape
    if not 1 <= p <= k:
        raise ValueError("need 1 <= p <= k")
    s = np.linalg.svd(L, compute_uv=False)
    if p > len(s) or s[p - 1] < 1e-14:
        raise DegenerateSingularValue(f"sigma_{p}(L) is numerically zero")
    rng = worker_rng(seed, stream=STREAMS["svbound"])
    hits = 0
    chunk = max(1, min(draws, 2_000_000 // max(m, 1)))
    done = 0
    while done < draws:
        n = min(chunk, draws - done)
        a = _ball_draws(m, r, rng, n)
        v = a @ L.T + z
        hits += int(np.sum(np.sqrt(np.sum(v * v, axis=1)) <= eps))
        done += n
    frac = hits / draws
    return SValueBound(frac, float((eps / (s[p - 1] * r)) ** p),
                       float(np.sqrt(max(frac * (1 - frac), 0.0) / draws)), float(s[p - 1]))
