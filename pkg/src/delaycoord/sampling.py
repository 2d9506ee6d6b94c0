"""Reference measures, fractal test sets, box counting and ball queries.

Samplers are deterministic given their seed.  When several workers sample in
parallel each gets its own stream, derived from ``(seed, worker)`` through
:func:`numpy.random.SeedSequence` spawn keys.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .dynamics import Diffeo, orbit_charts, periodic_mask
from .geometry import Manifold, canonical_chart

MEASURE_KINDS = ("lebesgue", "orbit", "cantor")
#: Second torus coordinate of the Cantor-product test set.
CANTOR_FIXED_COORD = 0.3819660113


class InsufficientScales(ValueError):
    pass


#: Stream ids of the random draws made by each part of the package.
STREAMS = {
    "measure": 0,
    "immersion": 1,
    "targets": 2,
    "pairs": 3,
    "svbound": 4,
    "probes": 5,
    "alpha": 6,
    "projection": 7,
}


def worker_rng(seed: int, worker: int = 0, stream: int = 0) -> np.random.Generator:
    """Generator for ``(seed, stream, worker)``; streams never share state."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, worker)))


@dataclass(frozen=True)
class MeasureSampler:
    """Sampler for ``mu``.

    ``kind`` is ``"lebesgue"`` (uniform on the chart), ``"orbit"`` (consecutive
    points of one orbit, started at a Lebesgue point) or ``"cantor"``
    (middle-third Cantor set of depth ``level`` in the first coordinate, times
    a fixed second coordinate on the torus).  Points that are ``p``-periodic
    for ``p < k`` (tolerance ``periodic_tol``) are rejected and redrawn when a
    dynamics is supplied.
    """

    kind: str
    manifold: Manifold
    seed: int = 0
    dynamics: Diffeo | None = None
    k: int = 1
    level: int = 8
    burn_in: int = 0
    periodic_tol: float = 1e-8
    worker: int = 0

    def __post_init__(self):
        if self.kind not in MEASURE_KINDS:
            raise ValueError(f"unknown measure kind {self.kind!r}")

    @classmethod
    def from_spec(cls, spec: str, manifold: Manifold, **kw) -> "MeasureSampler":
        """Parse ``"lebesgue"``, ``"orbit:<n>"`` (burn-in) or ``"cantor:<level>"``."""
        name, _, arg = spec.partition(":")
        if name == "lebesgue":
            return cls("lebesgue", manifold, **kw)
        if name == "orbit":
            return cls("orbit", manifold, burn_in=int(arg or 0), **kw)
        if name == "cantor":
            return cls("cantor", manifold, level=int(arg or 8), **kw)
        raise ValueError(f"unknown measure spec {spec!r}")


def _draw(ms: MeasureSampler, rng: np.random.Generator, n: int) -> np.ndarray:
    d = ms.manifold.d
    if ms.kind == "cantor":
        digits = 2 * rng.integers(0, 2, size=(n, ms.level))
        scale = 3.0 ** -np.arange(1, ms.level + 1)
        c = digits @ scale + rng.random(n) * 3.0 ** -ms.level
        if d == 1:
            return canonical_chart(c[:, None])
        out = np.full((n, d), CANTOR_FIXED_COORD)
        out[:, 0] = c
        return canonical_chart(out)
    return canonical_chart(rng.random((n, d)))


def _screen(ms: MeasureSampler, charts: np.ndarray) -> np.ndarray:
    if ms.dynamics is None or ms.k < 2:
        return np.zeros(len(charts), dtype=bool)
    return periodic_mask(ms.dynamics, charts, ms.k - 1, ms.periodic_tol)


def sample(ms: MeasureSampler, n: int) -> np.ndarray:
    """``n`` chart points, shape ``(n, d)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = worker_rng(ms.seed, ms.worker)
    if ms.kind == "orbit":
        if ms.dynamics is None:
            raise ValueError("orbit sampling needs a dynamics")
        while True:
            x0 = _draw(ms, rng, 1)[0]
            if not _screen(ms, x0[None])[0]:
                break
        x0 = ms.dynamics.iterate(x0, ms.burn_in)
        return orbit_charts(ms.dynamics, x0, n - 1)
    out = _draw(ms, rng, n)
    bad = _screen(ms, out)
    while bad.any():
        out[bad] = _draw(ms, rng, int(bad.sum()))
        bad = _screen(ms, out)
    return out


def boxcount_dimension(points, scales) -> float:
    """Least-squares slope of ``log N(s)`` against ``log(1/s)`` over the given box sizes."""
    scales = np.sort(np.asarray(scales, dtype=float))
    if len(scales) < 4:
        raise InsufficientScales(f"need at least 4 scales, got {len(scales)}")
    if scales[-1] / scales[0] < 10.0 * (1 - 1e-12):
        raise InsufficientScales("scales must span at least one decade")
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    counts = []
    for s in scales:
        boxes = np.floor(pts / s).astype(np.int64)
        counts.append(len(np.unique(boxes, axis=0)))
    slope = np.polyfit(np.log(1.0 / scales), np.log(counts), 1)[0]
    return float(slope)


class SpatialIndex:
    """Exact strict-inequality Euclidean ball queries over a fixed point set."""

    def __init__(self, points):
        self.points = np.ascontiguousarray(np.asarray(points, dtype=float))
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        self._tree = cKDTree(self.points)

    def __len__(self) -> int:
        return len(self.points)

    def distances(self, idx, center) -> np.ndarray:
        diff = self.points[idx] - np.asarray(center, dtype=float)
        return np.sqrt(np.sum(diff * diff, axis=-1))

    def ball(self, center, eps: float) -> np.ndarray:
        if eps <= 0:
            raise ValueError("eps must be positive")
        center = np.atleast_1d(np.asarray(center, dtype=float))
        # the tree may round differently from the scan; widen, then filter exactly
        cand = np.asarray(self._tree.query_ball_point(center, eps * (1 + 1e-9) + 1e-300), dtype=np.int64)
        if cand.size == 0:
            return cand
        cand.sort()
        return cand[self.distances(cand, center) < eps]

    def nearest(self, center) -> tuple[int, float]:
        """Nearest point; exact ties go to the lowest index."""
        center = np.atleast_1d(np.asarray(center, dtype=float))
        d0, _ = self._tree.query(center)
        cand = np.asarray(self._tree.query_ball_point(center, d0 * (1 + 1e-9) + 1e-300), dtype=np.int64)
        cand.sort()
        dist = self.distances(cand, center)
        j = int(np.argmin(dist))  # argmin returns the first minimum
        return int(cand[j]), float(dist[j])

    def nearest_neighbor_distances(self, kth: int = 1) -> np.ndarray:
        """Distance from each point to its ``kth`` nearest other point."""
        d, _ = self._tree.query(self.points, k=kth + 1)
        return d[:, kth]


@dataclass
class PointCloud:
    """Sample points on ``M`` and their images under an embedding.

    ``differential`` returns, for chart points, the ``(n, k, d)`` differentials
    of the unscaled embedding in tangent frames; it feeds local bi-Lipschitz
    bounds.  ``scale`` is the factor applied to ``embedded`` since the cloud
    was built, so the effective differential is ``scale * differential``.
    """

    manifold: Manifold
    charts: np.ndarray
    embedded: np.ndarray
    differential: Callable[[np.ndarray], np.ndarray] | None = None
    scale: float = 1.0
    index: SpatialIndex = field(init=False, repr=False)

    def __post_init__(self):
        self.charts = np.asarray(self.charts, dtype=float).reshape(-1, self.manifold.d)
        self.embedded = np.asarray(self.embedded, dtype=float)
        if self.embedded.ndim == 1:
            self.embedded = self.embedded[:, None]
        if len(self.embedded) != len(self.charts):
            raise ValueError("charts and embedded must have the same length")
        self.index = SpatialIndex(self.embedded)

    @classmethod
    def from_map(cls, manifold: Manifold, charts, embed: Callable[[np.ndarray], np.ndarray],
                 differential=None) -> "PointCloud":
        charts = np.asarray(charts, dtype=float).reshape(-1, manifold.d)
        return cls(manifold, charts, embed(charts), differential)

    def __len__(self) -> int:
        return len(self.charts)

    def scaled(self, lam: float) -> "PointCloud":
        return PointCloud(self.manifold, self.charts, self.embedded * lam, self.differential,
                          self.scale * lam)

    def local_differential(self, idx) -> np.ndarray:
        if self.differential is None:
            raise ValueError("this cloud carries no differential")
        return self.differential(self.charts[np.atleast_1d(idx)])


def ball_query(pc: PointCloud, center, eps: float) -> np.ndarray:
    return pc.index.ball(center, eps)
