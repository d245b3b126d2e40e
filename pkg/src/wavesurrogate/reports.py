"""Report tables comparing surrogate predictions with the reference simulations.

All metrics are computed per (variant, held-out landscape, seed) and then
averaged over seeds.
"""
from __future__ import annotations

import io
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import hazard
from .errors import AlignmentError, UndefinedCorrelation
from .oracle import LandscapeKey, SimulationTable
from .trainer import PredictionSet


@dataclass
class CellMetrics:
    variant: str
    key: LandscapeKey
    seed: int
    point_ids: np.ndarray
    rmse_hs: float
    corr_hs: float
    rmse_surge: float | None
    corr_surge: float | None
    point_sq_err: np.ndarray      # per point, sum over storms of squared hs error
    n_storms: int
    aep_rmse: np.ndarray
    aep_nrmse: np.ndarray
    reject_pct: float
    ks_d: np.ndarray
    pred_curves: np.ndarray
    ref_curves: np.ndarray


def _safe_pearson(a, b) -> float:
    try:
        return hazard.pearson(a, b)
    except UndefinedCorrelation:
        return float("nan")


def align(pred: PredictionSet, reference: SimulationTable):
    """(storms, points) matrices of predicted and reference values for one held-out landscape."""
    ref = reference.subset(reference.mask_for(pred.fold))
    storms = np.unique(pred.storm_id)
    points = np.unique(pred.point_id)
    S, P = len(storms), len(points)
    if len(pred.storm_id) != S * P:
        raise AlignmentError(f"predictions for {pred.fold} do not form a full storm x point grid")
    in_ref = np.isin(ref.storm_id, storms) & np.isin(ref.point_id, points)
    ref = ref.subset(in_ref)
    if len(ref) != S * P:
        raise AlignmentError(f"reference table lacks rows predicted for {pred.fold}")
    pi = np.lexsort((pred.point_id, pred.storm_id))
    ri = np.lexsort((ref.point_id, ref.storm_id))
    if not (np.array_equal(pred.storm_id[pi], ref.storm_id[ri]) and np.array_equal(pred.point_id[pi], ref.point_id[ri])):
        raise AlignmentError(f"prediction and reference keys differ for {pred.fold}")
    out = {
        "storms": storms, "points": points,
        "pred_hs": pred.pred_hs[pi].reshape(S, P), "ref_hs": ref.hs[ri].reshape(S, P),
        "ref_surge": ref.surge[ri].reshape(S, P),
    }
    if pred.pred_surge is not None:
        out["pred_surge"] = pred.pred_surge[pi].reshape(S, P)
    return out


def cell_metrics(pred: PredictionSet, reference: SimulationTable, rates: Mapping[int, float], grid,
                 alpha: float = 0.05, normalizer: str = "mean") -> CellMetrics:
    m = align(pred, reference)
    storms = m["storms"]
    missing = [int(s) for s in storms if int(s) not in rates]
    if missing:
        raise AlignmentError(f"no rates for storms {missing[:5]}")
    r = np.array([rates[int(s)] for s in storms])
    ph, rh = m["pred_hs"], m["ref_hs"]
    pc = hazard.curves_matrix(ph.T, r, grid)
    rc = hazard.curves_matrix(rh.T, r, grid)
    d = hazard.ks_statistic_matrix(pc, rc)
    n = len(grid)
    reject = hazard.ks_reject(d, alpha, n)
    aep_rmse = np.array([hazard.rmse(pc[:, i], rc[:, i]) for i in range(n)])
    aep_nrmse = np.array([hazard.nrmse(pc[:, i], rc[:, i], normalizer) for i in range(n)])
    rmse_s = corr_s = None
    if "pred_surge" in m:
        rmse_s = hazard.rmse(m["pred_surge"], m["ref_surge"])
        corr_s = _safe_pearson(m["pred_surge"], m["ref_surge"])
    return CellMetrics(pred.variant, tuple(pred.fold), pred.seed, m["points"], hazard.rmse(ph, rh),
                       _safe_pearson(ph, rh), rmse_s, corr_s, ((ph - rh) ** 2).sum(axis=0), len(storms),
                       aep_rmse, aep_nrmse, 100.0 * float(np.mean(reject)), d, pc, rc)


@dataclass
class ReportBundle:
    table1: list[dict] = field(default_factory=list)
    table2: list[dict] = field(default_factory=list)
    fig1: list[dict] = field(default_factory=list)
    fig3_fig4: list[dict] = field(default_factory=list)
    fig2: list[dict] = field(default_factory=list)
    cells: list[CellMetrics] = field(default_factory=list)

    def by_fold(self, table: str, variant: str, value: str, target: str | None = None) -> dict:
        rows = getattr(self, table)
        return {(r["scenario"], r["year"]): r[value] for r in rows
                if r["variant"] == variant and (target is None or r.get("target") == target)}


def _cell(rmse_m: float, corr: float) -> str:
    if np.isnan(corr):
        return f"{rmse_m:.3f} undefined"
    return hazard.format_table1_cell(rmse_m, corr)


def _mean(vals):
    vals = [v for v in vals if v is not None]
    return float(np.mean(vals)) if vals else None


def build_reports(predictions: Sequence[PredictionSet], reference: SimulationTable, rates: Mapping[int, float],
                  grid=None, alpha: float = 0.05, normalizer: str = "mean") -> ReportBundle:
    grid = hazard.aep_grid() if grid is None else np.asarray(grid, np.float64)
    cells = [cell_metrics(p, reference, rates, grid, alpha, normalizer) for p in predictions]
    groups: dict[tuple[str, LandscapeKey], list[CellMetrics]] = defaultdict(list)
    for c in cells:
        groups[(c.variant, c.key)].append(c)
    bundle = ReportBundle(cells=cells)
    order = sorted(groups, key=lambda g: (g[0], g[1]))
    for variant, key in order:
        cs = sorted(groups[(variant, key)], key=lambda c: c.seed)
        sc, yr = key
        if variant == "M4":
            rm, co = _mean([c.rmse_surge for c in cs]), _mean([c.corr_surge for c in cs])
            bundle.table1.append({"variant": variant, "target": "surge", "scenario": sc, "year": yr,
                                  "rmse_m": rm, "corr": co, "cell": _cell(rm, co)})
        rm, co = _mean([c.rmse_hs for c in cs]), _mean([c.corr_hs for c in cs])
        bundle.table1.append({"variant": variant, "target": "hs", "scenario": sc, "year": yr,
                              "rmse_m": rm, "corr": co, "cell": _cell(rm, co)})
        bundle.table2.append({"variant": variant, "scenario": sc, "year": yr,
                              "rejected_pct": _mean([c.reject_pct for c in cs])})
        aep_r = np.mean([c.aep_rmse for c in cs], axis=0)
        aep_n = np.mean([c.aep_nrmse for c in cs], axis=0)
        for a, rv, nv in zip(grid, aep_r, aep_n):
            bundle.fig3_fig4.append({"variant": variant, "scenario": sc, "year": yr, "aep": float(a),
                                     "rmse_m": float(rv), "nrmse": float(nv)})
    # per-point RMSE pooled over held-out landscapes and storms, then averaged over seeds
    per_variant: dict[str, dict[int, list]] = defaultdict(lambda: defaultdict(list))
    for c in cells:
        per_variant[c.variant][c.seed].append(c)
    for variant in sorted(per_variant):
        seeds = []
        pids = None
        for seed in sorted(per_variant[variant]):
            cs = per_variant[variant][seed]
            pids = cs[0].point_ids
            for c in cs:
                if not np.array_equal(c.point_ids, pids):
                    raise AlignmentError("cells cover different grid points")
            sq = np.sum([c.point_sq_err for c in cs], axis=0)
            cnt = sum(c.n_storms for c in cs)
            seeds.append(np.sqrt(sq / cnt))
        vals = np.mean(seeds, axis=0)
        thresholds = np.sort(vals)
        pct = 100.0 * (len(vals) - np.searchsorted(np.sort(vals), thresholds, side="left")) / len(vals)
        for t, p in zip(thresholds, pct):
            bundle.fig1.append({"rmse_threshold_m": float(t), "pct_points_at_or_above": float(p),
                                "variant": variant})
    # per-point RMSE differences against the M1 baseline, per held-out landscape
    if any(v == "M1" for v, _ in groups):
        def per_point(cs):
            return np.mean([np.sqrt(c.point_sq_err / c.n_storms) for c in cs], axis=0)

        for variant, key in order:
            if variant == "M1" or ("M1", key) not in groups:
                continue
            diff = per_point(groups[(variant, key)]) - per_point(groups[("M1", key)])
            for pid, dv in zip(groups[(variant, key)][0].point_ids, diff):
                bundle.fig2.append({"variant": variant, "scenario": key[0], "year": key[1],
                                    "point_id": int(pid), "rmse_diff_m": float(dv)})
    return bundle


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "undefined" if np.isnan(v) else repr(v)
    return str(v)


def _csv(rows: list[dict], cols: Sequence[str]) -> str:
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(r[c]) for c in cols) + "\n")
    return buf.getvalue()


REPORT_FILES = {
    "report_table1.csv": ("table1", ("variant", "target", "scenario", "year", "rmse_m", "corr", "cell")),
    "report_table2.csv": ("table2", ("variant", "scenario", "year", "rejected_pct")),
    "report_fig1.csv": ("fig1", ("rmse_threshold_m", "pct_points_at_or_above", "variant")),
    "report_fig3_fig4.csv": ("fig3_fig4", ("variant", "scenario", "year", "aep", "rmse_m", "nrmse")),
    "report_fig2.csv": ("fig2", ("variant", "scenario", "year", "point_id", "rmse_diff_m")),
}


def write_reports(bundle: ReportBundle, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    for name, (attr, cols) in REPORT_FILES.items():
        path = out_dir / name
        path.write_text(_csv(getattr(bundle, attr), cols))
        written.append(path)
    return written


def hazard_csv(point_ids: np.ndarray, grid: np.ndarray, curves: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write("point_id,aep,hs_m\n")
    for pid, row in zip(point_ids, curves):
        for a, h in zip(grid, row):
            buf.write(f"{int(pid)},{float(a)!r},{float(h)!r}\n")
    return buf.getvalue()
