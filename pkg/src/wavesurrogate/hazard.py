"""Hazard curves, the two-sample K-S test, error metrics and report tables."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .catalog import Catalog
from .errors import AlignmentError, JoinError, UndefinedCorrelation, ValidationError

N_AEP = 23
TOTAL_CORE_RATE = 0.35


def aep_grid(n: int = N_AEP, hi: float = 0.5, lo: float = 0.0005) -> np.ndarray:
    """Log-spaced annual exceedance probabilities, strictly decreasing."""
    grid = np.geomspace(hi, lo, n)
    grid[0], grid[-1] = hi, lo
    check_grid(grid)
    return grid


def check_grid(grid) -> None:
    g = np.asarray(grid, np.float64)
    if g.ndim != 1 or len(g) < 1:
        raise ValidationError("AEP grid must be a 1-D sequence")
    if not ((g > 0) & (g < 1)).all() or (len(g) > 1 and not (np.diff(g) < 0).all()):
        raise ValidationError("AEP grid values must lie in (0, 1) and strictly decrease")


def synthetic_rates(catalog: Catalog, total: float = TOTAL_CORE_RATE, core_only: bool = True) -> dict[int, float]:
    """Rates proportional to 1 / (1 + dp/50), scaled to sum to ``total`` per year."""
    storms = [s for s in catalog.storms if s.is_core or not core_only]
    raw = np.array([1.0 / (1.0 + s.delta_p / 50.0) for s in storms])
    scaled = raw * (total / raw.sum())
    return {s.storm_id: float(r) for s, r in zip(storms, scaled)}


@dataclass(frozen=True)
class HazardCurve:
    point_id: int
    aep: np.ndarray
    hs: np.ndarray


def _curve_values(peaks: np.ndarray, rates: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Curve values for peaks of shape (..., S); returns (..., len(grid))."""
    order = np.argsort(-peaks, axis=-1, kind="stable")
    p = np.take_along_axis(peaks, order, axis=-1)
    r = np.take_along_axis(np.broadcast_to(rates, peaks.shape), order, axis=-1)
    cum = np.cumsum(r, axis=-1)
    # lambda at each distinct peak includes all tied storms: use the last index of a tie run
    S = p.shape[-1]
    idx = np.broadcast_to(np.arange(S), p.shape)
    is_end = np.ones(p.shape, bool)
    is_end[..., :-1] = p[..., :-1] != p[..., 1:]
    end_idx = np.where(is_end, idx, S)
    last = np.flip(np.minimum.accumulate(np.flip(end_idx, -1), axis=-1), -1)
    lam = np.take_along_axis(cum, last, axis=-1)
    aep_at = 1.0 - np.exp(-lam)  # AEP(p_k), nondecreasing in k
    out = np.zeros(peaks.shape[:-1] + (len(grid),))
    for gi, a in enumerate(grid):
        # peaks whose AEP reaches a form a suffix of the descending order; take its first (largest)
        n_ok = (aep_at >= a).sum(axis=-1)
        k = np.minimum(S - n_ok, S - 1)
        val = np.take_along_axis(p, k[..., None], axis=-1)[..., 0]
        out[..., gi] = np.where(n_ok > 0, val, 0.0)
    return np.maximum(out, 0.0)


def exceedance_curve(peaks: Mapping[int, float], rates: Mapping[int, float], grid=None,
                     point_id: int = 0) -> HazardCurve:
    """Hs at each AEP: the largest h with ``1 - exp(-sum of rates of peaks >= h) >= aep``."""
    grid = aep_grid() if grid is None else np.asarray(grid, np.float64)
    check_grid(grid)
    ids = sorted(peaks)
    missing = [i for i in ids if i not in rates]
    if missing:
        raise JoinError(f"storms {missing[:5]} have no rate")
    if not ids:
        return HazardCurve(point_id, grid.copy(), np.zeros(len(grid)))
    p = np.array([peaks[i] for i in ids], np.float64)
    r = np.array([rates[i] for i in ids], np.float64)
    return HazardCurve(point_id, grid.copy(), _curve_values(p, r, grid))


def curves_matrix(peaks: np.ndarray, rates: np.ndarray, grid=None) -> np.ndarray:
    """Vectorised curves for a (points, storms) peak matrix."""
    grid = aep_grid() if grid is None else np.asarray(grid, np.float64)
    check_grid(grid)
    return _curve_values(np.asarray(peaks, np.float64), np.asarray(rates, np.float64), grid)


def ks_statistic(curve_a, curve_b) -> float:
    """Largest gap between the empirical CDFs of two equal-grid samples."""
    if isinstance(curve_a, HazardCurve) and isinstance(curve_b, HazardCurve):
        if curve_a.aep.shape != curve_b.aep.shape or not np.array_equal(curve_a.aep, curve_b.aep):
            raise AlignmentError("hazard curves are on different AEP grids")
        a, b = curve_a.hs, curve_b.hs
    else:
        a, b = np.asarray(curve_a, np.float64), np.asarray(curve_b, np.float64)
    return float(ks_statistic_matrix(a[None, :], b[None, :])[0])


def ks_statistic_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Row-wise two-sample K-S statistic for (points, n) and (points, m) samples."""
    A = np.sort(np.asarray(A, np.float64), axis=1)
    B = np.sort(np.asarray(B, np.float64), axis=1)
    if A.shape[0] != B.shape[0]:
        raise AlignmentError("sample matrices differ in row count")
    n, m = A.shape[1], B.shape[1]
    pooled = np.concatenate([A, B], axis=1)
    out = np.empty(A.shape[0])
    for i in range(A.shape[0]):
        fa = np.searchsorted(A[i], pooled[i], side="right") / n
        fb = np.searchsorted(B[i], pooled[i], side="right") / m
        out[i] = np.max(np.abs(fa - fb))
    return out


def ks_threshold(alpha: float = 0.05, n: int = N_AEP) -> float:
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1)")
    return math.sqrt(-math.log(alpha / 2.0) * (1.0 / n))


def ks_reject(D, alpha: float = 0.05, n: int = N_AEP):
    return np.asarray(D) > ks_threshold(alpha, n) if np.ndim(D) else bool(D > ks_threshold(alpha, n))


def _pair(pred, ref):
    p = np.asarray(pred, np.float64).ravel()
    r = np.asarray(ref, np.float64).ravel()
    if p.shape != r.shape:
        raise AlignmentError(f"lengths differ: {p.size} vs {r.size}")
    if p.size == 0:
        raise ValidationError("metrics need at least one value")
    return p, r


def rmse(pred, ref) -> float:
    p, r = _pair(pred, ref)
    return float(np.sqrt(np.mean((p - r) ** 2)))


def nrmse(pred, ref, normalizer: str = "mean") -> float:
    """RMSE over the mean (or range) of the reference values.

    Zero error is 0 regardless of the normaliser; a zero normaliser with
    nonzero error gives ``nan``.
    """
    p, r = _pair(pred, ref)
    e = rmse(p, r)
    if normalizer == "mean":
        scale = float(np.mean(r))
    elif normalizer == "range":
        scale = float(np.ptp(r))
    else:
        raise ValidationError(f"unknown normalizer {normalizer!r}")
    if e == 0.0:
        return 0.0
    return e / scale if scale != 0.0 else float("nan")


def pearson(pred, ref) -> float:
    p, r = _pair(pred, ref)
    if p.size < 2:
        raise ValidationError("pearson needs at least two values")
    dp = p - p.mean()
    dr = r - r.mean()
    sp = math.sqrt(float(np.dot(dp, dp)))
    sr = math.sqrt(float(np.dot(dr, dr)))
    if sp == 0.0 or sr == 0.0:
        raise UndefinedCorrelation("correlation undefined: zero variance")
    return float(np.clip(np.dot(dp, dr) / (sp * sr), -1.0, 1.0))


def format_table1_cell(rmse_m: float, corr: float) -> str:
    return f"{rmse_m:.3f} {corr:.3f}"
