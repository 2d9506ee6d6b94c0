"""Polynomially perturbed observables ``h_alpha = h + sum_j alpha_j z^beta_j``.

Monomials are evaluated at raw ambient coordinates.  The test manifolds have
coordinates bounded by ``1/(2*pi)``, which keeps the basis usable up to
degree 12; higher degrees are refused.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import comb

import numpy as np

from .geometry import Manifold, TangentFrame, TWO_PI

MAX_DEGREE = 12
RANK_RTOL = 1e-10
_CHUNK = 8192


class IllConditioned(np.linalg.LinAlgError):
    """The stacked gradient-interpolation system is numerically rank deficient."""


def basis_size(N: int, D: int) -> int:
    if N < 1 or D < 0:
        raise ValueError("need N >= 1 and D >= 0")
    return comb(N + D, N)


def _exponents(N: int, D: int) -> np.ndarray:
    rows = []
    for deg in range(D + 1):
        level = []
        for combo in combinations_with_replacement(range(N), deg):
            beta = [0] * N
            for var in combo:
                beta[var] += 1
            level.append(tuple(beta))
        # lexicographic inside a degree, largest power of z_1 first
        rows.extend(sorted(level, reverse=True))
    return np.array(rows, dtype=np.int64).reshape(-1, N)


@dataclass(frozen=True)
class MonomialBasis:
    ambient_dim: int
    max_degree: int
    exponents: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.max_degree > MAX_DEGREE:
            raise ValueError(f"monomial degree {self.max_degree} exceeds the supported limit {MAX_DEGREE}")
        object.__setattr__(self, "exponents", _exponents(self.ambient_dim, self.max_degree))

    @classmethod
    def for_delay(cls, N: int, k: int) -> "MonomialBasis":
        """The basis of degree ``2k - 1`` used to perturb ``k``-delay observables."""
        return cls(N, 2 * k - 1)

    @property
    def size(self) -> int:
        return len(self.exponents)

    def index(self, beta) -> int:
        hits = np.flatnonzero((self.exponents == np.asarray(beta)).all(axis=1))
        if len(hits) == 0:
            raise KeyError(f"exponent {tuple(beta)} not in basis")
        return int(hits[0])

    def _powers(self, z: np.ndarray) -> np.ndarray:
        # powers[..., l, e] = z_l ** e, built by repeated multiplication
        P = np.empty(z.shape + (self.max_degree + 1,))
        P[..., 0] = 1.0
        for e in range(1, self.max_degree + 1):
            P[..., e] = P[..., e - 1] * z
        return P

    def values(self, z) -> np.ndarray:
        """Monomial values, shape ``(..., m)``."""
        z = np.asarray(z, dtype=float)
        P = self._powers(z)
        out = np.ones(z.shape[:-1] + (self.size,))
        for l in range(self.ambient_dim):
            out *= P[..., l, :][..., self.exponents[:, l]]
        return out

    def gradients(self, z) -> np.ndarray:
        """Monomial gradients, shape ``(..., N, m)``: ``[.., l, j] = d z^beta_j / d z_l``."""
        z = np.asarray(z, dtype=float)
        P = self._powers(z)
        N = self.ambient_dim
        E = self.exponents
        factors = [P[..., l, :][..., E[:, l]] for l in range(N)]
        out = np.empty(z.shape[:-1] + (N, self.size))
        for l in range(N):
            g = E[:, l] * P[..., l, :][..., np.maximum(E[:, l] - 1, 0)]
            for q in range(N):
                if q != l:
                    g = g * factors[q]
            out[..., l, :] = g
        return out


BASE_KINDS = ("zero", "cos1")


@dataclass(frozen=True)
class Observable:
    """``h_alpha(z) = base(z) + alpha . monomials(z)`` on ambient points ``z``.

    ``base_kind`` is ``"zero"`` or ``"cos1"``; the latter is
    ``cos(2*pi*u_1)`` written through ambient coordinates as ``2*pi*z_1``
    (``base_spec['scale']`` rescales it).
    """

    basis: MonomialBasis
    alpha: np.ndarray
    base_kind: str = "zero"
    base_spec: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.base_kind not in BASE_KINDS:
            raise ValueError(f"unknown base observable {self.base_kind!r}")
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.shape != (self.basis.size,):
            raise ValueError(f"alpha must have length {self.basis.size}")
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def monomial(cls, basis: MonomialBasis, beta, coef: float = 1.0) -> "Observable":
        alpha = np.zeros(basis.size)
        alpha[basis.index(beta)] = coef
        return cls(basis, alpha)

    @classmethod
    def constant(cls, basis: MonomialBasis, c: float) -> "Observable":
        return cls.monomial(basis, [0] * basis.ambient_dim, c)

    @property
    def _base_scale(self) -> float:
        return float(self.base_spec.get("scale", 1.0))

    def base_value(self, z: np.ndarray) -> np.ndarray:
        if self.base_kind == "zero":
            return np.zeros(z.shape[:-1])
        return self._base_scale * TWO_PI * z[..., 0]

    def base_gradient(self, z: np.ndarray) -> np.ndarray:
        g = np.zeros(z.shape)
        if self.base_kind == "cos1":
            g[..., 0] = self._base_scale * TWO_PI
        return g

    def __call__(self, z) -> np.ndarray:
        return evaluate(self, z)


def _chunked(z: np.ndarray, fn, width: int) -> np.ndarray:
    flat = z.reshape(-1, z.shape[-1])
    out = np.empty((len(flat), width)) if width else np.empty(len(flat))
    for s in range(0, len(flat), _CHUNK):
        out[s:s + _CHUNK] = fn(flat[s:s + _CHUNK])
    return out.reshape(z.shape[:-1] + ((width,) if width else ()))


def evaluate(obs: Observable, z) -> np.ndarray:
    """Value of the observable at ambient point(s) ``z`` (shape ``(..., N)``)."""
    z = np.asarray(z, dtype=float)
    # single points go through the batched path so both agree to the last bit
    if z.ndim == 1:
        return float(evaluate(obs, z[None])[0])
    # multiply-then-sum keeps each row's result independent of the batch size
    return _chunked(z, lambda c: obs.base_value(c) + (obs.basis.values(c) * obs.alpha).sum(axis=-1), 0)


def ambient_gradient(obs: Observable, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    N = obs.basis.ambient_dim

    def grad(c):
        return obs.base_gradient(c) + (obs.basis.gradients(c) * obs.alpha).sum(axis=-1)

    if z.ndim == 1:
        return _chunked(z[None], grad, N)[0]
    return _chunked(z, grad, N)


def random_alpha(m: int, r: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the open ball ``B_m(0, r)``."""
    g = rng.standard_normal(m)
    g /= np.linalg.norm(g)
    return r * rng.random() ** (1.0 / m) * g


def random_alphas(m: int, r: float, rng: np.random.Generator, count: int) -> np.ndarray:
    g = rng.standard_normal((count, m))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return r * (rng.random(count) ** (1.0 / m))[:, None] * g


def min_norm_solve(A: np.ndarray, b: np.ndarray, required_rank: int | None = None) -> np.ndarray:
    """Minimum-norm solution of ``A x = b`` through an SVD with relative cutoff."""
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        rank = 0
    else:
        rank = int(np.sum(s > RANK_RTOL * s[0]))
    if required_rank is not None and rank < required_rank:
        raise IllConditioned(f"numerical rank {rank} < {required_rank}")
    return Vt[:rank].T @ ((U[:, :rank].T @ b) / s[:rank])


def interpolate_gradients(basis: MonomialBasis, points, targets) -> np.ndarray:
    """Coefficients of a polynomial ``p`` with ``grad p(z_i) = u_i`` for every ``i``."""
    Z = np.atleast_2d(np.asarray(points, dtype=float))
    U = np.atleast_2d(np.asarray(targets, dtype=float))
    k, N = Z.shape
    if U.shape != (k, N):
        raise ValueError("points and targets must both have shape (k, N)")
    if basis.max_degree < k:
        raise ValueError(f"basis degree {basis.max_degree} is below the {k} needed for {k} points")
    if k > 1:
        gaps = np.linalg.norm(Z[:, None, :] - Z[None, :, :], axis=-1)[np.triu_indices(k, 1)]
        if gaps.min() <= 1e-8:
            raise IllConditioned("interpolation points are (nearly) coincident")
    G = basis.gradients(Z).reshape(k * N, basis.size)
    alpha = min_norm_solve(G, U.reshape(-1), required_rank=k * N)
    residual = np.abs(G @ alpha - U.reshape(-1)).max()
    if residual > 1e-8 * max(1.0, np.abs(U).max()):
        raise IllConditioned(f"interpolation residual {residual:.3e} too large")
    return alpha


def tangential_interpolation(M: Manifold, frames: list[TangentFrame], covectors,
                             basis: MonomialBasis | None = None) -> np.ndarray:
    """Coefficients of ``p`` whose restriction to ``M`` has the given differentials.

    Covector ``i`` is expressed in frame ``i``; it is lifted to the ambient
    vector ``basis_i @ L_i`` (zero normal component) before interpolating.
    The default basis has degree ``2k - 1`` for ``k`` frames.
    """
    L = np.atleast_2d(np.asarray(covectors, dtype=float))
    if len(frames) != len(L):
        raise ValueError("need one covector per frame")
    if basis is None:
        basis = MonomialBasis.for_delay(M.N, len(frames))
    points = np.array([f.base.ambient for f in frames])
    lifts = np.array([f.basis @ Li for f, Li in zip(frames, L)])
    alpha = interpolate_gradients(basis, points, lifts)
    grads = basis.gradients(points) @ alpha
    achieved = np.einsum("inj,in->ij", np.array([f.basis for f in frames]), grads)
    residual = np.abs(achieved - L).max()
    if residual > 1e-8 * max(1.0, np.abs(L).max()):
        raise IllConditioned(f"tangential residual {residual:.3e} too large")
    return alpha
