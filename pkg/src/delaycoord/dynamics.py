"""Diffeomorphisms of the test manifolds with analytic chart derivatives."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .geometry import (
    Manifold,
    ManifoldPoint,
    TangentFrame,
    canonical_chart,
    make_circle,
    make_flat_torus,
    tangent_frame,
)

CAT_MATRIX = np.array([[2.0, 1.0], [1.0, 1.0]])
CAT_INVERSE = np.array([[1.0, -1.0], [-1.0, 2.0]])

#: Golden-ratio conjugate, the default irrational rotation number.
GOLDEN_OMEGA = 0.6180339887


@dataclass(frozen=True)
class Diffeo:
    manifold: Manifold
    forward: Callable[[np.ndarray], np.ndarray]
    inverse: Callable[[np.ndarray], np.ndarray]
    chart_derivative: Callable[[np.ndarray], np.ndarray]
    name: str = ""
    #: Set when the chart derivative does not depend on the point.
    constant_derivative: np.ndarray | None = None

    def iterate(self, charts, n: int) -> np.ndarray:
        """Apply ``T^n`` (``n`` may be negative) to an array of chart points."""
        u = canonical_chart(charts)
        step = self.forward if n >= 0 else self.inverse
        for _ in range(abs(n)):
            u = step(u)
        return u


@dataclass(frozen=True)
class OrbitSegment:
    """Chart coordinates ``x, Tx, ..., T^n x`` and the step derivatives.

    ``cocycle[i]`` is the chart derivative of ``T`` at ``charts[i]``.
    """

    manifold: Manifold
    charts: np.ndarray
    cocycle: np.ndarray

    @property
    def ambient(self) -> np.ndarray:
        return self.manifold.ambient(self.charts)

    @property
    def points(self) -> list[ManifoldPoint]:
        return [self.manifold.point(u) for u in self.charts]

    def __len__(self) -> int:
        return len(self.charts)


class PeriodCheck(NamedTuple):
    period: int
    residual: float
    periodic: bool


def make_cat_map() -> Diffeo:
    """Arnold cat map ``(u, v) -> (2u + v, u + v) mod 1`` on the flat torus."""

    def forward(u):
        u = np.asarray(u, dtype=float)
        return canonical_chart(u @ CAT_MATRIX.T)

    def inverse(u):
        u = np.asarray(u, dtype=float)
        return canonical_chart(u @ CAT_INVERSE.T)

    def deriv(u):
        u = np.asarray(u, dtype=float)
        return np.broadcast_to(CAT_MATRIX, u.shape[:-1] + (2, 2)).copy()

    return Diffeo(make_flat_torus(), forward, inverse, deriv, name="cat",
                  constant_derivative=CAT_MATRIX.copy())


def make_rotation(omega: float = GOLDEN_OMEGA) -> Diffeo:
    omega = float(omega)

    def forward(u):
        return canonical_chart(np.asarray(u, dtype=float) + omega)

    def inverse(u):
        return canonical_chart(np.asarray(u, dtype=float) - omega)

    def deriv(u):
        u = np.asarray(u, dtype=float)
        return np.ones(u.shape[:-1] + (1, 1))

    return Diffeo(make_circle(), forward, inverse, deriv, name=f"rotation:{omega!r}",
                  constant_derivative=np.ones((1, 1)))


def make_dynamics(system: str) -> Diffeo:
    """Build a system from its config id: ``"cat"`` or ``"rotation:<omega>"``."""
    if system == "cat":
        return make_cat_map()
    if system == "rotation":
        return make_rotation()
    if system.startswith("rotation:"):
        return make_rotation(float(system.split(":", 1)[1]))
    raise KeyError(f"unknown system {system!r}; expected 'cat' or 'rotation:<omega>'")


def orbit(T: Diffeo, x, n: int) -> OrbitSegment:
    if n < 0:
        raise ValueError("orbit length n must be >= 0")
    M = T.manifold
    u = M.chart(x)
    d = M.d
    charts = np.empty((n + 1, d))
    cocycle = np.empty((n, d, d))
    charts[0] = u
    for i in range(n):
        cocycle[i] = T.chart_derivative(charts[i])
        charts[i + 1] = T.forward(charts[i])
    return OrbitSegment(M, charts, cocycle)


def orbit_charts(T: Diffeo, x, n: int) -> np.ndarray:
    """Just the ``n + 1`` orbit points; vectorized over a batch of start points.

    ``x`` of shape ``(d,)`` gives ``(n + 1, d)``; shape ``(B, d)`` gives
    ``(B, n + 1, d)``.
    """
    u = canonical_chart(x)
    out = np.empty((n + 1,) + u.shape)
    out[0] = u
    for i in range(n):
        out[i + 1] = T.forward(out[i])
    return np.moveaxis(out, 0, -2) if u.ndim > 1 else out


def periodic_screen(T: Diffeo, x, p_max: int, tol: float) -> list[PeriodCheck]:
    """Residuals ``rho(T^p x, x)`` for ``p = 1..p_max``; periodic when below ``tol``."""
    if p_max < 1 or tol <= 0:
        raise ValueError("need p_max >= 1 and tol > 0")
    M = T.manifold
    u0 = M.chart(x)
    u = u0
    checks = []
    for p in range(1, p_max + 1):
        u = T.forward(u)
        r = float(M.distance(u, u0))
        checks.append(PeriodCheck(p, r, r < tol))
    return checks


def periodic_mask(T: Diffeo, charts, p_max: int, tol: float = 1e-8) -> np.ndarray:
    """Vectorized screen: True where some ``p <= p_max`` has residual below ``tol``."""
    u0 = canonical_chart(charts)
    flagged = np.zeros(u0.shape[:-1], dtype=bool)
    u = u0
    for _ in range(p_max):
        u = T.forward(u)
        flagged |= T.manifold.chart_distance(u, u0) < tol
    return flagged


def chart_cocycle(T: Diffeo, charts: np.ndarray) -> np.ndarray:
    """Prefix products ``D_x T^i`` (chart coordinates) along an orbit.

    ``charts`` holds ``x, Tx, ..., T^{n}x``; the result has shape
    ``(n + 1, d, d)`` with entry ``i`` equal to ``D_x T^i``.
    """
    d = charts.shape[-1]
    steps = T.chart_derivative(charts[:-1])
    out = np.empty((len(charts), d, d))
    out[0] = np.eye(d)
    for i in range(1, len(charts)):
        out[i] = steps[i - 1] @ out[i - 1]
    return out


def pushforward(T: Diffeo, frame: TangentFrame, n: int) -> tuple[TangentFrame, np.ndarray]:
    """Matrix of ``D_x T^n`` from the frame at ``x`` to the frame at ``T^n x``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    M = T.manifold
    charts = orbit_charts(T, frame.base.chart, n)
    C = chart_cocycle(T, charts)[-1]
    end = tangent_frame(M, charts[-1])
    matrix = end.chart_to_frame @ C @ np.linalg.inv(frame.chart_to_frame)
    return end, matrix
