"""Delay-coordinate maps, their differentials, pair matrices and projections."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dynamics import Diffeo, orbit_charts
from .geometry import Manifold, TangentFrame, canonical_chart, frame_factors
from .observables import Observable, evaluate, ambient_gradient

#: Singular values below this fraction of the largest one count as zero.
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class DelayMap:
    """``phi(x) = (h(x), h(Tx), ..., h(T^{k-1}x))``."""

    dynamics: Diffeo
    observable: Observable
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("delay length k must be >= 1")
        if self.observable.basis.ambient_dim != self.manifold.N:
            raise ValueError("observable and manifold ambient dimensions differ")

    @property
    def manifold(self) -> Manifold:
        return self.dynamics.manifold

    def __call__(self, charts) -> np.ndarray:
        return delay_eval_many(self, charts)


@dataclass(frozen=True)
class PairMatrix:
    D: np.ndarray
    w: np.ndarray


@dataclass(frozen=True)
class Projection:
    """Orthonormal basis (columns) of a ``k``-plane ``V`` in ``R^N``."""

    V_basis: np.ndarray

    @property
    def k(self) -> int:
        return self.V_basis.shape[1]

    @property
    def projector(self) -> np.ndarray:
        return self.V_basis @ self.V_basis.T


def numerical_rank(s: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Rank from singular values (last axis), relative to the largest one."""
    s = np.asarray(s)
    top = s[..., :1]
    return np.sum((s > rtol * top) & (top > 0), axis=-1)


def _charts(M: Manifold, x) -> np.ndarray:
    return M.chart(x)


def delay_eval(dm: DelayMap, x) -> np.ndarray:
    u = _charts(dm.manifold, x)
    orb = orbit_charts(dm.dynamics, u, dm.k - 1)
    return evaluate(dm.observable, dm.manifold.ambient(orb))


def delay_eval_many(dm: DelayMap, charts) -> np.ndarray:
    """``(n, d)`` chart points to ``(n, k)`` delay vectors."""
    u = canonical_chart(np.asarray(charts, dtype=float).reshape(-1, dm.manifold.d))
    orb = orbit_charts(dm.dynamics, u, dm.k - 1)
    return evaluate(dm.observable, dm.manifold.ambient(orb))


def _prefix_cocycles(T: Diffeo, orb: np.ndarray) -> np.ndarray:
    # orb: (n, k, d) -> (n, k, d, d) with [:, i] = D_x T^i in chart coordinates
    n, k, d = orb.shape
    out = np.empty((n, k, d, d))
    out[:, 0] = np.eye(d)
    if k > 1:
        steps = T.chart_derivative(orb[:, :-1])
        for i in range(1, k):
            out[:, i] = steps[:, i - 1] @ out[:, i - 1]
    return out


def delay_differentials(dm: DelayMap, charts, observable: Observable | None = None) -> np.ndarray:
    """Delay differentials at many points, ``(n, k, d)``, in the tangent frames at ``x``.

    Row ``i`` is the tangential gradient of ``h`` at ``T^i x`` composed with
    ``D_x T^i``.  ``observable`` overrides the map's observable.
    """
    obs = dm.observable if observable is None else observable
    M = dm.manifold
    u = canonical_chart(np.asarray(charts, dtype=float).reshape(-1, M.d))
    orb = orbit_charts(dm.dynamics, u, dm.k - 1)
    C = _prefix_cocycles(dm.dynamics, orb)
    J = M.chart_jacobian(orb)
    grads = ambient_gradient(obs, M.ambient(orb))
    rows = np.einsum("nkN,nkNd,nkde->nke", grads, J, C)
    _, R = frame_factors(M, u)
    return rows @ np.linalg.inv(R)


def delay_differential(dm: DelayMap, frame: TangentFrame) -> np.ndarray:
    return delay_differentials(dm, frame.base.chart[None, :])[0]


def pair_matrix(dm: DelayMap, x, y) -> PairMatrix:
    D, w = pair_matrices(dm, _charts(dm.manifold, x)[None], _charts(dm.manifold, y)[None])
    return PairMatrix(D[0], w[0])


def pair_matrices(dm: DelayMap, X, Y) -> tuple[np.ndarray, np.ndarray]:
    """Batched ``D_{x,y}`` (``(B, k, m)``) and ``w_{x,y}`` (``(B, k)``)."""
    M = dm.manifold
    obs = dm.observable
    zx = M.ambient(orbit_charts(dm.dynamics, np.asarray(X, dtype=float).reshape(-1, M.d), dm.k - 1))
    zy = M.ambient(orbit_charts(dm.dynamics, np.asarray(Y, dtype=float).reshape(-1, M.d), dm.k - 1))
    D = obs.basis.values(zx) - obs.basis.values(zy)
    w = obs.base_value(zx) - obs.base_value(zy)
    return D, w


def sample_projection(N: int, k: int, rng: np.random.Generator | int | None = None) -> Projection:
    """Haar-distributed ``k``-plane: orthonormalized ``N x k`` Gaussian matrix."""
    if not 1 <= k <= N:
        raise ValueError("need 1 <= k <= N")
    rng = np.random.default_rng(rng)
    Q, R = np.linalg.qr(rng.standard_normal((N, k)))
    Q = Q * np.sign(np.diagonal(R))
    return Projection(Q)


def project_eval(P: Projection, M: Manifold, x,
                 base_map: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
    """Coordinates of ``P_V x`` in the basis of ``V`` (plus an optional base map of the chart)."""
    u = _charts(M, x)
    out = M.ambient(u) @ P.V_basis
    if base_map is not None:
        out = out + base_map(u)
    return out


def projection_differentials(P: Projection, M: Manifold, charts) -> np.ndarray:
    """``V^T`` restricted to the tangent planes, ``(n, k, d)`` in frame coordinates."""
    Q, _ = frame_factors(M, np.asarray(charts, dtype=float).reshape(-1, M.d))
    return np.einsum("Nk,nNd->nkd", P.V_basis, Q)


def differential_parts(dm: DelayMap, charts) -> tuple[np.ndarray, np.ndarray]:
    """Split the delay differential into its base and per-monomial parts.

    Returns ``(G_base, G_mono)`` of shapes ``(n, k, d)`` and ``(n, k, d, m)``
    so that the differential of ``h + sum_j a_j h_j`` is ``G_base + G_mono @ a``.
    """
    M = dm.manifold
    obs = dm.observable
    u = canonical_chart(np.asarray(charts, dtype=float).reshape(-1, M.d))
    orb = orbit_charts(dm.dynamics, u, dm.k - 1)
    C = _prefix_cocycles(dm.dynamics, orb)
    JC = np.einsum("nkNd,nkde->nkNe", M.chart_jacobian(orb), C)
    z = M.ambient(orb)
    _, R = frame_factors(M, u)
    Rinv = np.linalg.inv(R)
    G_base = np.einsum("nkN,nkNe,ned->nkd", obs.base_gradient(z), JC, Rinv)
    G_mono = np.einsum("nkNm,nkNe,ned->nkdm", obs.basis.gradients(z), JC, Rinv)
    return G_base, G_mono
