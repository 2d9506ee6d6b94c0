"""Lyapunov exponents of the system and of its delay-coordinate image.

Exponents are in nats per step.  Long products of derivatives are never
formed explicitly: vectors are renormalized each step and the discarded
log-norms are accumulated, so growth rates stay finite for thousands of
iterates of a hyperbolic map.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import Diffeo, orbit_charts
from .embedding import RANK_RTOL, DelayMap, delay_differentials
from .geometry import canonical_chart, frame_factors


class RankDeficient(np.linalg.LinAlgError):
    """The delay differential has numerical rank below ``dim M``."""


def frame_steps(T: Diffeo, charts: np.ndarray) -> np.ndarray:
    """One-step derivatives along an orbit in tangent-frame coordinates, ``(n, d, d)``."""
    _, R = frame_factors(T.manifold, charts)
    C = T.chart_derivative(charts[:-1])
    return R[1:] @ C @ np.linalg.inv(R[:-1])


def direct_exponents(T: Diffeo, x, n: int, transient: int = 100) -> list[tuple[float, np.ndarray]]:
    """QR estimate of the exponents, ascending, each with its Gram-Schmidt direction.

    An orthonormal frame is pushed through ``transient`` steps first so the
    averages start from (nearly) converged directions, then through ``n``
    more steps whose ``log |diag R|`` are averaged.  Directions are frame
    coordinates at ``T^(transient + n) x``.

    The products use chart derivatives; the frame change is bounded, so the
    exponents agree, and an isometric chart derivative gives exactly 0.
    """
    if n < 10:
        raise ValueError("n must be >= 10")
    M = T.manifold
    d = M.d
    u = canonical_chart(M.chart(x))
    charts = orbit_charts(T, u, transient + n)
    steps = T.chart_derivative(charts[:-1])
    Q = np.eye(d)
    sums = np.zeros(d)
    for i, A in enumerate(steps):
        Q, R = np.linalg.qr(A @ Q)
        diag = np.diagonal(R)
        Q = Q * np.sign(diag)
        if i >= transient:
            sums += np.log(np.abs(diag))
    exps = sums / n
    _, R_end = frame_factors(M, charts[-1:])
    F, _ = np.linalg.qr(R_end[0] @ Q)
    F = F * np.sign(np.sum(F * (R_end[0] @ Q), axis=0))
    order = np.argsort(exps, kind="stable")
    return [(float(exps[j]), F[:, j].copy()) for j in order]


@dataclass(frozen=True)
class OseledetsData:
    """Exponents (ascending, distinct), multiplicities and the splitting at a point.

    ``splitting(x)`` returns one ``(d, d_i)`` matrix of orthonormal columns
    per exponent, in tangent-frame coordinates at ``x``.
    """

    exponents: tuple
    multiplicities: tuple
    splitting: Callable[[np.ndarray], list]

    def __post_init__(self):
        if len(self.exponents) != len(self.multiplicities):
            raise ValueError("one multiplicity per exponent")
        if any(b <= a for a, b in zip(self.exponents, self.exponents[1:])):
            raise ValueError("exponents must be strictly increasing")


def _group(values: np.ndarray, tol: float):
    groups = []
    for j in np.argsort(values, kind="stable"):
        if groups and abs(values[j] - values[groups[-1][0]]) <= tol:
            groups[-1].append(j)
        else:
            groups.append([j])
    return groups


def oseledets_data(T: Diffeo, n: int = 1000, tol: float = 1e-9) -> OseledetsData:
    """Oseledets data from the eigen-decomposition of a constant derivative.

    Systems without a constant, real-diagonalizable derivative fall back to
    directions from long derivative products (two-dimensional, simple
    spectrum only).
    """
    M = T.manifold
    A = T.constant_derivative
    if A is not None:
        w, V = np.linalg.eig(A)
        if np.all(np.abs(w.imag) < 1e-12):
            w, V = w.real, V.real
            logs = np.log(np.abs(w))
            groups = _group(logs, tol)
            exps = tuple(float(np.mean(logs[g])) for g in groups)

            def split(x):
                _, R = frame_factors(M, M.chart(x)[None])
                out = []
                for g in groups:
                    Qg, _ = np.linalg.qr(R[0] @ V[:, g])
                    out.append(Qg)
                return out

            return OseledetsData(exps, tuple(len(g) for g in groups), split)
    return _product_oseledets(T, n)


def _product_oseledets(T: Diffeo, n: int) -> OseledetsData:
    M = T.manifold
    if M.d == 1:
        exps = direct_exponents(T, np.zeros(1), max(n, 10))
        return OseledetsData((exps[0][0],), (1,), lambda x: [np.ones((1, 1))])
    if M.d != 2:
        raise NotImplementedError("product-based splitting needs d <= 2")
    exps = direct_exponents(T, M.chart(np.full(M.d, 0.1234)), max(n, 10))
    lo, hi = exps[0][0], exps[1][0]
    if hi - lo < 1e-6:
        raise NotImplementedError("product-based splitting needs a simple spectrum")
    horizon = 30

    def slowest_right(charts, inverse: bool):
        S = frame_steps(T, charts)
        P = np.eye(M.d)
        for A in S:
            P = A @ P
            P /= np.linalg.norm(P)
        if inverse:
            P = np.linalg.inv(P)
        _, _, Vt = np.linalg.svd(P)
        return Vt[-1][:, None]

    def split(x):
        u = M.chart(x)
        stable = slowest_right(orbit_charts(T, u, horizon), False)
        back = T.iterate(u, -horizon)
        # D_x T^{-h} = (D_{T^{-h}x} T^h)^{-1}; its slowest direction expands forward
        unstable = slowest_right(orbit_charts(T, back, horizon), True)
        return [stable, unstable]

    return OseledetsData((lo, hi), (1, 1), split)


def pseudo_inverse(G: np.ndarray, d: int | None = None, rtol: float = RANK_RTOL) -> np.ndarray:
    """Inverse of an injective ``k x d`` differential on its image, from a reduced SVD."""
    d = G.shape[-1] if d is None else d
    U, s, Vt = np.linalg.svd(G, full_matrices=False)
    if s[0] == 0 or s[d - 1] < rtol * s[0]:
        raise RankDeficient(f"sigma_{d} = {s[d - 1]:.3e} below {rtol} * sigma_1 = {s[0]:.3e}")
    return Vt.T @ (U.T / s[:, None])


@dataclass(frozen=True)
class ObservedCocycle:
    """``D(S^n)`` on the tangent plane of the image at ``z = phi(x)``.

    ``operator`` is ``k x k`` and acts as the identity-composed map on the
    image of ``G_x``; ``restricted`` is ``operator @ G_x`` (``k x d``, frame
    coordinates at ``x``).
    """

    operator: np.ndarray
    restricted: np.ndarray
    G_start: np.ndarray
    G_end: np.ndarray
    pushforward: np.ndarray


def _orbit_pushforward(T: Diffeo, charts: np.ndarray) -> np.ndarray:
    P = np.eye(T.manifold.d)
    for A in frame_steps(T, charts):
        P = A @ P
    return P


def observed_cocycle(dm: DelayMap, x, n: int) -> ObservedCocycle:
    """``G_{T^n x} (D_x T^n) G_x^+`` with rank checks at both ends."""
    if n < 0:
        raise ValueError("n must be >= 0")
    M = dm.manifold
    u = M.chart(x)
    charts = orbit_charts(dm.dynamics, u, n)
    G = delay_differentials(dm, charts[[0, -1]])
    G0, Gn = G[0], G[1]
    G0_inv = pseudo_inverse(G0, M.d)
    pseudo_inverse(Gn, M.d)
    P = _orbit_pushforward(dm.dynamics, charts)
    restricted = Gn @ P
    return ObservedCocycle(restricted @ G0_inv, restricted, G0, Gn, P)


def _log_sv(X: np.ndarray) -> np.ndarray:
    s = np.linalg.svd(X, compute_uv=False)
    with np.errstate(divide="ignore"):
        return np.log(s)


def distortion(G: np.ndarray, d: int) -> np.ndarray:
    """``max(|G|, |G^+|)`` per differential (``inf`` when rank deficient), shape ``(n,)``."""
    s = np.linalg.svd(G, compute_uv=False)
    top, low = s[..., 0], s[..., d - 1]
    ok = (top > 0) & (low >= RANK_RTOL * top)
    with np.errstate(divide="ignore"):
        out = np.maximum(top, 1.0 / low)
    return np.where(ok, out, np.inf)


@dataclass
class FrequencyReport:
    """Per-``n`` deviations of observed (and direct) growth rates from the exponents.

    ``observed[n - 1, i]`` (``n = 1..N``) is the sup over ``v`` in the pushed-forward block
    ``i`` of ``|log(|A_n v| / |v|) / n - chi_i|``; ``direct`` is the same for
    ``D_x T^n`` on the block itself.  ``log_m[n]`` is
    ``log M(T^n x)`` with ``M`` the differential distortion.
    """

    eps: tuple
    N: int
    exponents: tuple
    observed: np.ndarray
    direct: np.ndarray
    log_m: np.ndarray
    rank_deficient: list = field(default_factory=list)

    def good(self, eps: float) -> np.ndarray:
        """Per-``n`` flags for ``n = 1..N``; ``n = 0`` has no growth rate and is not counted."""
        return np.all(self.observed < eps, axis=1)

    def fraction(self, eps: float) -> float:
        return float(np.mean(self.good(eps)))

    @property
    def fractions(self) -> dict:
        return {float(e): self.fraction(e) for e in self.eps}

    def bound(self) -> np.ndarray:
        """Right-hand side of the per-``n`` comparison ``observed <= direct + bound``."""
        n = np.arange(1, self.N + 1)
        return (self.log_m[0] + self.log_m[1:self.N + 1]) / n


def observed_frequency(dm: DelayMap, x, N: int, eps, oseledets: OseledetsData | None = None) -> FrequencyReport:
    """Deviation records for ``n = 1..N`` and the share of good times for each ``eps``.

    Each block is pushed forward one step at a time and projected back onto
    its invariant subspace along the other blocks.  Times at which the end
    differential is rank deficient get ``inf`` deviations and are listed in
    ``rank_deficient``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    eps = tuple(float(e) for e in np.atleast_1d(eps))
    T, M = dm.dynamics, dm.manifold
    d = M.d
    data = oseledets if oseledets is not None else oseledets_data(T)
    u = M.chart(x)
    charts = orbit_charts(T, u, N)
    G = delay_differentials(dm, charts)
    G0 = G[0]
    pseudo_inverse(G0, d)
    dist = distortion(G, d)
    with np.errstate(divide="ignore"):
        log_m = np.log(dist)
    steps = frame_steps(T, charts)
    splits = [data.splitting(c) for c in charts]
    blocks = splits[0]
    L = len(blocks)
    sizes = np.cumsum([0] + [b.shape[1] for b in blocks])
    # coefficients in the splitting at each orbit point; used to keep each block
    # inside its own invariant subspace, otherwise rounding drifts every vector
    # toward the fastest direction within a few dozen steps
    W_inv = [np.linalg.inv(np.hstack(sp)) for sp in splits]
    observed = np.full((N, L), np.inf)
    direct = np.full((N, L), np.inf)
    ranks = []
    for i, E in enumerate(blocks):
        # orthonormal coordinates on the pushed-forward block at z
        _, Rq = np.linalg.qr(G0 @ E)
        Rinv = np.linalg.inv(Rq)
        chi = data.exponents[i]
        Y = E.copy()
        logscale = 0.0
        for n in range(1, N + 1):
            Y = steps[n - 1] @ Y
            Y = splits[n][i] @ (W_inv[n][sizes[i]:sizes[i + 1]] @ Y)
            s = np.linalg.norm(Y)
            Y /= s
            logscale += np.log(s)
            ld = _log_sv(Y) + logscale
            direct[n - 1, i] = np.max(np.abs(ld / n - chi))
            if not np.isfinite(dist[n]):
                if i == 0:
                    ranks.append(n)
                continue
            lo = _log_sv(G[n] @ Y @ Rinv) + logscale
            observed[n - 1, i] = np.max(np.abs(lo / n - chi))
    return FrequencyReport(eps, N, data.exponents, observed, direct, log_m, ranks)


def em_occupancy(dm: DelayMap, charts, m_grid) -> np.ndarray:
    """Share of orbit points where both the differential and its inverse have norm ``<= M``.

    ``charts`` may be an :class:`OrbitSegment` or an array of chart points.
    Rank-deficient points belong to no ``E_M``.
    """
    charts = getattr(charts, "charts", charts)
    G = delay_differentials(dm, charts)
    dist = distortion(G, dm.manifold.d)
    m_grid = np.asarray(m_grid, dtype=float)
    return (dist[None, :] <= m_grid[:, None]).mean(axis=1)
