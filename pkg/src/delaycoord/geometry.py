"""Explicitly parametrized compact manifolds embedded in R^N.

Every manifold here is a product of unit-length circles ``R/Z`` carried in a
global periodic chart ``[0, 1)^d``.  The embedding into ``R^N`` is scaled by
``1/(2*pi)`` so that the parametrization has unit speed, i.e. chart length
equals ambient arc length and the Riemannian distance is the flat torus
metric on the chart.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

TWO_PI = 2.0 * np.pi

#: Smallest singular value a chart Jacobian may have before the chart is
#: considered degenerate.
JACOBIAN_TOL = 1e-10


class DegenerateChart(ValueError):
    """Raised when a chart Jacobian is (numerically) rank deficient."""


def canonical_chart(u) -> np.ndarray:
    """Reduce chart coordinates to the fundamental domain ``[0, 1)``."""
    u = np.mod(np.asarray(u, dtype=float), 1.0)
    # np.mod can return exactly 1.0 for tiny negative inputs
    return np.where(u >= 1.0, 0.0, u)


def _circle_embed(u: np.ndarray) -> np.ndarray:
    a = TWO_PI * u
    return np.stack([np.cos(a), np.sin(a)], axis=-1) / TWO_PI


def _periodic_distance(a, b) -> np.ndarray:
    delta = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 1.0
    delta = np.minimum(delta, 1.0 - delta)
    return np.sqrt(np.sum(delta * delta, axis=-1))


@dataclass(frozen=True)
class ManifoldPoint:
    """A point given by canonical chart coordinates and its ambient image."""

    chart: np.ndarray
    ambient: np.ndarray


@dataclass(frozen=True)
class TangentFrame:
    """Orthonormal basis (columns, ``N x d``) of ``T_x M`` inside ``R^N``.

    ``chart_to_frame`` is the ``d x d`` upper triangular matrix ``R`` with
    ``J = basis @ R`` where ``J`` is the chart Jacobian at ``base``; it converts
    chart tangent vectors into frame coordinates.
    """

    base: ManifoldPoint
    basis: np.ndarray
    chart_to_frame: np.ndarray


@dataclass(frozen=True)
class Manifold:
    name: str
    intrinsic_dim: int
    ambient_dim: int
    parametrization: Callable[[np.ndarray], np.ndarray]
    chart_jacobian: Callable[[np.ndarray], np.ndarray]
    chart_distance: Callable[[np.ndarray, np.ndarray], np.ndarray]
    #: Upper bound on Riemannian distance per unit of chart displacement; 1 for
    #: the unit-speed charts used here.
    metric_scale: float = 1.0
    #: Bound on (Riemannian distance)/(chordal distance); pi/2 for unit circles.
    chord_ratio_bound: float = field(default=np.pi / 2)

    @property
    def d(self) -> int:
        return self.intrinsic_dim

    @property
    def N(self) -> int:
        return self.ambient_dim

    def chart(self, x) -> np.ndarray:
        """Canonical chart coordinates of a point, chart array or scalar."""
        if isinstance(x, ManifoldPoint):
            return x.chart
        u = canonical_chart(x)
        if u.ndim == 0:
            u = u.reshape(1)
        return u

    def point(self, chart) -> ManifoldPoint:
        u = canonical_chart(np.atleast_1d(np.asarray(chart, dtype=float)))
        if u.shape != (self.d,):
            raise ValueError(f"expected {self.d} chart coordinates, got shape {u.shape}")
        return ManifoldPoint(chart=u, ambient=self.parametrization(u))

    def ambient(self, charts) -> np.ndarray:
        return self.parametrization(canonical_chart(charts))

    def distance(self, x, y) -> np.ndarray:
        """Riemannian distance; broadcasts over leading axes of chart arrays."""
        return self.chart_distance(self.chart(x), self.chart(y))


def make_flat_torus() -> Manifold:
    """Flat torus ``R^2/Z^2`` in ``R^4`` as a product of two unit-length circles."""

    def param(u):
        u = np.asarray(u, dtype=float)
        return np.concatenate([_circle_embed(u[..., 0]), _circle_embed(u[..., 1])], axis=-1)

    def jac(u):
        u = np.asarray(u, dtype=float)
        a, b = TWO_PI * u[..., 0], TWO_PI * u[..., 1]
        J = np.zeros(u.shape[:-1] + (4, 2))
        J[..., 0, 0] = -np.sin(a)
        J[..., 1, 0] = np.cos(a)
        J[..., 2, 1] = -np.sin(b)
        J[..., 3, 1] = np.cos(b)
        return J

    return Manifold("torus2", 2, 4, param, jac, _periodic_distance)


def make_circle() -> Manifold:
    """Unit-length circle ``R/Z`` in ``R^2``."""

    def param(u):
        u = np.asarray(u, dtype=float)
        return _circle_embed(u[..., 0])

    def jac(u):
        u = np.asarray(u, dtype=float)
        a = TWO_PI * u[..., 0]
        return np.stack([-np.sin(a), np.cos(a)], axis=-1)[..., None]

    return Manifold("circle", 1, 2, param, jac, _periodic_distance)


MANIFOLDS = {"torus2": make_flat_torus, "circle": make_circle}


def make_manifold(name: str) -> Manifold:
    try:
        return MANIFOLDS[name]()
    except KeyError:
        raise KeyError(f"unknown manifold {name!r}; expected one of {sorted(MANIFOLDS)}") from None


def frame_factors(M: Manifold, charts) -> tuple[np.ndarray, np.ndarray]:
    """Batched thin QR of chart Jacobians with positive ``diag(R)``.

    Returns ``(Q, R)`` of shapes ``(..., N, d)`` and ``(..., d, d)``.
    """
    J = M.chart_jacobian(canonical_chart(charts))
    Q, R = np.linalg.qr(J)
    signs = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    signs = np.where(signs == 0, 1.0, signs)
    Q = Q * signs[..., None, :]
    R = R * signs[..., :, None]
    smallest = np.min(np.abs(np.diagonal(R, axis1=-2, axis2=-1)), axis=-1)
    if np.any(smallest < JACOBIAN_TOL):
        raise DegenerateChart(f"chart Jacobian of {M.name} is rank deficient")
    return Q, R


def tangent_frame(M: Manifold, x) -> TangentFrame:
    point = x if isinstance(x, ManifoldPoint) else M.point(x)
    J = M.chart_jacobian(point.chart)
    if np.linalg.svd(J, compute_uv=False)[-1] < JACOBIAN_TOL:
        raise DegenerateChart(f"chart Jacobian of {M.name} at {point.chart} is rank deficient")
    Q, R = frame_factors(M, point.chart)
    return TangentFrame(base=point, basis=Q, chart_to_frame=R)
