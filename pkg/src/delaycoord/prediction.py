"""Empirical prediction map and ball-averaged prediction error.

The invariant measure is replaced by the empirical measure of a point cloud:
``chi`` and ``sigma`` are the mean and root-mean-square spread of the one-step
futures of all cloud points whose embedded image lies in an open ball.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import Diffeo
from .embedding import DelayMap, delay_eval_many
from .sampling import STREAMS, PointCloud, worker_rng

#: Cells whose ball holds fewer points than this are dropped from error curves.
MIN_OCCUPANCY = 5


class EmptyBall(ValueError):
    """No cloud point lies in the requested ball."""


@dataclass
class PredictionDataset:
    cloud: PointCloud
    images: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=float)
        if self.images.ndim == 1:
            self.images = self.images[:, None]
        if len(self.images) != len(self.cloud):
            raise ValueError("need one image per cloud point")

    def __len__(self) -> int:
        return len(self.cloud)

    @classmethod
    def from_delay_map(cls, dm: DelayMap, charts, params: dict | None = None) -> "PredictionDataset":
        """Cloud of ``phi(x_i)`` with futures ``phi(T x_i)``."""
        charts = np.asarray(charts, dtype=float).reshape(-1, dm.manifold.d)
        cloud = PointCloud(dm.manifold, charts, delay_eval_many(dm, charts))
        images = delay_eval_many(dm, dm.dynamics.forward(charts))
        return cls(cloud, images, dict(params or {}, k=dm.k))

    @classmethod
    def from_map(cls, T: Diffeo, embed: Callable[[np.ndarray], np.ndarray], charts,
                 params: dict | None = None) -> "PredictionDataset":
        """Same construction for an arbitrary map of chart points."""
        charts = np.asarray(charts, dtype=float).reshape(-1, T.manifold.d)
        cloud = PointCloud(T.manifold, charts, embed(charts))
        return cls(cloud, embed(T.forward(charts)), dict(params or {}))


def _ball(ds: PredictionDataset, y, eps: float) -> np.ndarray:
    idx = ds.cloud.index.ball(y, eps)
    if idx.size == 0:
        raise EmptyBall(f"no cloud point within {eps!r} of {np.asarray(y).tolist()}")
    return idx


def chi(ds: PredictionDataset, y, eps: float) -> np.ndarray:
    """Mean future of the cloud points in ``B(y, eps)``."""
    return ds.images[_ball(ds, y, eps)].mean(axis=0)


def _spread(imgs: np.ndarray) -> float:
    # centered on the first member so a common shift of all images cancels exactly
    rel = imgs - imgs[0]
    dev = rel - rel.mean(axis=0)
    return float(np.sqrt(np.mean(np.sum(dev * dev, axis=1))))


def sigma(ds: PredictionDataset, y, eps: float) -> float:
    """Root-mean-square distance of the futures in ``B(y, eps)`` from their mean."""
    return _spread(ds.images[_ball(ds, y, eps)])


def predict(ds: PredictionDataset, y, eps: float | None = None) -> np.ndarray:
    """Future of the nearest cloud point (lowest index on exact ties).

    ``eps`` is accepted for interface symmetry with ``chi`` and ignored.
    """
    j, _ = ds.cloud.index.nearest(y)
    return ds.images[j]


def resolution_floor(ds: PredictionDataset, kth: int = 5) -> float:
    """Median distance from a cloud point to its ``kth`` nearest neighbor."""
    return float(np.median(ds.cloud.index.nearest_neighbor_distances(kth)))


@dataclass
class ErrorCurve:
    eps: np.ndarray
    sigma_median: np.ndarray
    occupancy: np.ndarray
    sigma_cells: np.ndarray
    counts: np.ndarray
    probes: np.ndarray
    dropped: list
    floor: float
    slope: float
    intercept: float
    fitted: np.ndarray

    def rows(self):
        for e, s, o, f in zip(self.eps, self.sigma_median, self.occupancy, self.fitted):
            yield float(e), float(s), float(o), bool(f)


def log_eps_grid(eps_min: float, eps_max: float, cells: int) -> np.ndarray:
    if not 0 < eps_min < eps_max or cells < 2:
        raise ValueError("need 0 < eps_min < eps_max and at least 2 cells")
    return np.logspace(np.log10(eps_min), np.log10(eps_max), cells)


def error_curve(ds: PredictionDataset, probes: int, eps_grid, seed: int = 0,
                min_count: int = MIN_OCCUPANCY, floor_kth: int = 5) -> ErrorCurve:
    """``sigma`` at probe points over an eps grid and its log-log slope.

    Probes are cloud points drawn without replacement.  A (probe, eps) cell
    is dropped when its ball holds fewer than ``min_count`` points; an eps
    column is left out of the fit when it lies below the resolution floor
    (median ``floor_kth``-nearest-neighbor distance) or when every cell in
    it was dropped.  The slope is fitted to the log of the per-eps median.
    """
    eps_grid = np.sort(np.asarray(eps_grid, dtype=float))
    rng = worker_rng(seed, stream=STREAMS["probes"])
    probe_idx = np.sort(rng.choice(len(ds), size=min(probes, len(ds)), replace=False))
    floor = resolution_floor(ds, floor_kth)
    S = np.full((len(probe_idx), len(eps_grid)), np.nan)
    counts = np.zeros(S.shape, dtype=np.int64)
    dropped = []
    for a, j in enumerate(probe_idx):
        y = ds.cloud.embedded[j]
        for b, e in enumerate(eps_grid):
            idx = ds.cloud.index.ball(y, e)
            counts[a, b] = idx.size
            if idx.size < min_count:
                dropped.append((int(j), float(e), int(idx.size)))
                continue
            S[a, b] = _spread(ds.images[idx])
    valid = ~np.isnan(S)
    occupancy = valid.mean(axis=0)
    med = np.array([np.median(S[valid[:, b], b]) if valid[:, b].any() else np.nan
                    for b in range(len(eps_grid))])
    fitted = (eps_grid >= floor) & np.isfinite(med) & (med > 0)
    slope = intercept = np.nan
    if fitted.sum() >= 2:
        slope, intercept = np.polyfit(np.log(eps_grid[fitted]), np.log(med[fitted]), 1)
    return ErrorCurve(eps_grid, med, occupancy, S, counts, probe_idx, dropped, floor,
                      float(slope), float(intercept), fitted)
