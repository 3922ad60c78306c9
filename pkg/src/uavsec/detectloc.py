"""Jamming detection, RSS jammer localization and uplink-aggressor identification."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Mapping, Optional, Sequence

import numpy as np
from scipy.ndimage import minimum_filter
from scipy.optimize import least_squares

from .channel import ChannelParams, MIN_ELEVATION_DEG, a2g_mean_path_loss_db
from .errors import DomainError
from .scene import Position3D


@dataclass(frozen=True)
class MetricWindow:
    node_id: str
    samples: tuple[float, ...]
    window_len: int = 10

    def __post_init__(self):
        if len(self.samples) == 0:
            raise DomainError(f"empty metric window for {self.node_id!r}")
        if not all(math.isfinite(v) for v in self.samples):
            raise DomainError(f"non-finite sample in window for {self.node_id!r}")

    def mean(self) -> float:
        return float(np.mean(self.samples[-self.window_len:]))


@dataclass(frozen=True)
class DetectionReport:
    flagged: tuple[str, ...]
    method: Literal["centralized", "distributed"]
    statistic: dict = field(default_factory=dict)
    threshold: float = 0.0


def detect_centralized(windows: Sequence[MetricWindow], threshold_db: float) -> DetectionReport:
    """Flag nodes whose windowed mean SINR (dB) is strictly below the threshold."""
    stats = {w.node_id: w.mean() for w in windows}
    flagged = tuple(sorted(n for n, m in stats.items() if m < threshold_db))
    return DetectionReport(flagged, "centralized", stats, threshold_db)


def detect_distributed(windows: Sequence[MetricWindow], k_mad: float = 3.0) -> DetectionReport:
    """Peer comparison: flag nodes that sit far below the median of their peers.

    The statistic is median(peers) - own mean, and the threshold is
    ``k_mad`` times the median absolute deviation of all windowed means.
    """
    if len(windows) < 3:
        raise DomainError("distributed detection needs at least 3 nodes")
    means = {w.node_id: w.mean() for w in windows}
    values = np.array(list(means.values()))
    mad = float(np.median(np.abs(values - np.median(values))))
    threshold = k_mad * mad if mad > 0 else 1e-9
    stats = {}
    for node, m in means.items():
        peers = [v for n, v in means.items() if n != node]
        stats[node] = float(np.median(peers)) - m
    flagged = tuple(sorted(n for n, s in stats.items() if s > threshold))
    return DetectionReport(flagged, "distributed", stats, threshold)


@dataclass(frozen=True)
class RssMeasurement:
    sensor: Position3D
    rss_dbm: float

    def __post_init__(self):
        if not math.isfinite(self.rss_dbm):
            raise DomainError("RSS must be finite")


@dataclass(frozen=True)
class LocalizationEstimate:
    position: Position3D
    est_tx_power_dbm: float
    residual: float
    bounds_limited: bool = False
    coarse_residual: float = math.inf


def rss_model_loss_db(points: np.ndarray, sensors: np.ndarray, params: ChannelParams) -> np.ndarray:
    """Mean A2G path loss from each candidate point (rows) to each sensor (columns)."""
    diff = points[:, None, :] - sensors[None, :, :]
    h = np.hypot(diff[..., 0], diff[..., 1])
    d = np.maximum(np.sqrt(h * h + diff[..., 2] ** 2), params.min_distance_m)
    theta = np.maximum(np.degrees(np.arctan2(np.abs(diff[..., 2]), h)), MIN_ELEVATION_DEG)
    return a2g_mean_path_loss_db(d, theta, params)


def _profiled(points, sensors, rss, params):
    y = rss[None, :] + rss_model_loss_db(points, sensors, params)
    p_tx = y.mean(axis=1)
    return ((y - p_tx[:, None]) ** 2).sum(axis=1), p_tx


def _check_geometry(sensors):
    centered = sensors - sensors.mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-6) < 2:
        raise DomainError("sensor positions are collinear")


def rss_localize(measurements: Sequence[RssMeasurement], params: ChannelParams,
                 search_bounds: tuple[float, float, float, float, float, float],
                 grid_cells: int = 64, tolerance_m: float = 0.1, refine_starts: int = 8) -> LocalizationEstimate:
    """Joint position and transmit-power fit of a transmitter from RSS readings.

    Minimizes the squared dB residual between the readings and the
    fading-averaged A2G model. The transmit power is profiled out in closed
    form, the best local minima of a coarse grid of cell centers seed an
    axis-shrinking pattern search plus a least-squares polish, and the best
    refined start wins.
    """
    if len(measurements) < 4:
        raise DomainError("localization needs at least 4 measurements")
    sensors = np.array([tuple(m.sensor) for m in measurements], dtype=float)
    rss = np.array([m.rss_dbm for m in measurements], dtype=float)
    _check_geometry(sensors)
    lo = np.array(search_bounds[:3], dtype=float)
    hi = np.array(search_bounds[3:], dtype=float)
    if np.any(hi < lo):
        raise DomainError("search bounds are inverted")
    cell = (hi - lo) / grid_cells

    axes = [lo[i] + (np.arange(grid_cells) + 0.5) * cell[i] for i in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    res = np.empty(len(pts))
    for start in range(0, len(pts), 65536):
        res[start:start + 65536] = _profiled(pts[start:start + 65536], sensors, rss, params)[0]
    coarse_best = float(res.min())
    # refine from the best coarse local minima, not just neighbouring cells of one basin
    cube = res.reshape(grid_cells, grid_cells, grid_cells)
    is_min = (cube == minimum_filter(cube, size=3, mode="nearest")).ravel()
    order = np.flatnonzero(is_min)
    order = order[np.argsort(res[order], kind="stable")]

    def f(p):
        return float(_profiled(p[None, :], sensors, rss, params)[0][0])

    best_p, best_f = None, math.inf
    for idx in order[:refine_starts]:
        p, fp = _pattern_search(f, pts[idx].copy(), fp0=float(res[idx]), step=cell.copy(),
                                lo=lo, hi=hi, tol=tolerance_m)
        p, fp = _polish(p, fp, sensors, rss, params, lo, hi)
        if fp < best_f:
            best_p, best_f = p, fp
    _, p_tx = _profiled(best_p[None, :], sensors, rss, params)
    span = hi - lo
    limited = bool(np.any((span > 0) & ((best_p - lo <= tolerance_m) | (hi - best_p <= tolerance_m))))
    return LocalizationEstimate(Position3D(*map(float, best_p)), float(p_tx[0]), best_f, limited, coarse_best)


def _pattern_search(f, x, fp0, step, lo, hi, tol, max_iter=20000):
    fx = fp0
    step = np.where(step > 0, step, 0.0)
    for _ in range(max_iter):
        if np.all(step < tol):
            break
        moved = False
        for axis in range(3):
            if step[axis] < tol:
                continue
            for sign in (1.0, -1.0):
                cand = x.copy()
                cand[axis] = min(max(cand[axis] + sign * step[axis], lo[axis]), hi[axis])
                fc = f(cand)
                if fc < fx:
                    x, fx, moved = cand, fc, True
                    break
        if not moved:
            step = step * 0.5
    return x, fx


def _polish(x, fx, sensors, rss, params, lo, hi):
    # the residual surface has long shallow valleys where compass steps stall
    free = hi > lo
    if not free.any():
        return x, fx

    def resid(v):
        p = x.copy()
        p[free] = v
        y = rss + rss_model_loss_db(p[None, :], sensors, params)[0]
        return y - y.mean()

    sol = least_squares(resid, x[free], bounds=(lo[free], hi[free]), x_scale=1.0,
                        xtol=1e-12, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    cand = x.copy()
    cand[free] = sol.x
    fc = float(np.sum(resid(sol.x) ** 2))
    return (cand, fc) if fc < fx else (x, fx)


@dataclass(frozen=True)
class AggressorIdentification:
    uav_id: Optional[str]
    confidence_db: float
    contrasts: dict = field(default_factory=dict)


def identify_uplink_aggressor(victim_reports: Mapping[str, Sequence[float]],
                              allocations: Mapping[str, Sequence[int]],
                              floor_db: float = 3.0) -> AggressorIdentification:
    """Match per-resource-block interference reports against UAV allocations.

    A candidate's contrast is the mean reported level (dBm) on its allocated
    blocks minus the mean on the other blocks, averaged over victims.
    """
    if not allocations or any(len(v) == 0 for v in allocations.values()):
        raise DomainError("allocations must be non-empty")
    if not victim_reports:
        raise DomainError("need at least one victim report")
    contrasts = {}
    for uav, rbs in allocations.items():
        per_victim = []
        for levels in victim_reports.values():
            levels = np.asarray(levels, dtype=float)
            mask = np.zeros(len(levels), dtype=bool)
            mask[list(rbs)] = True
            if mask.all():
                raise DomainError(f"allocation of {uav!r} covers every block")
            per_victim.append(levels[mask].mean() - levels[~mask].mean())
        contrasts[uav] = float(np.mean(per_victim))
    best = min(contrasts, key=lambda u: (-contrasts[u], u))
    if contrasts[best] > floor_db:
        return AggressorIdentification(best, contrasts[best], contrasts)
    return AggressorIdentification(None, contrasts[best], contrasts)
