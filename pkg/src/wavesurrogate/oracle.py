"""Closed-form pseudo-physics standing in for a coupled surge and wave simulator.

Peak surge decays with distance from landfall and is amplified over shallow
water, damped by bottom friction near the shoreline, and skewed to the right
of the track. Peak significant wave height is the smaller of a wind-limited
value and a depth-limited breaking height ``gamma * h``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields
from typing import Callable, Iterable, Sequence

import numpy as np

from .catalog import Catalog, GridPoint, Landscape, StormRecord, landscape_stem
from .errors import ConfigurationError, DuplicateError, ParseError, ValidationError

LandscapeKey = tuple[str, int]

KM_PER_DEG = 111.0
KM_PER_NMI = 1.852


@dataclass(frozen=True)
class OracleParams:
    p_far: float = 1013.25
    k_v: float = 3.0
    k_s: float = 0.012
    gamma: float = 0.78
    landfall_lat: float = 29.5
    # surge shape
    vf_gain: float = 0.015
    surge_decay_km: float = 25.0
    shallow_gain: float = 0.6
    shallow_depth_m: float = 8.0
    friction_gain: float = 8.0
    friction_depth_m: float = 2.0
    asym_gain: float = 0.25
    # wave shape
    wave_coef: float = 0.0025
    wave_decay_km: float = 40.0
    rmax_decay_mult: float = 3.0
    z0_gain: float = 2.0
    canopy_gain: float = 0.5
    slope_gain: float = 0.3
    slope_scale: float = 50.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "landfall_lat":
                if not math.isfinite(value):
                    raise ValidationError("landfall_lat must be finite")
            elif not (math.isfinite(value) and value > 0):
                raise ValidationError(f"oracle constant {f.name} must be > 0")
        if self.gamma > 1:
            raise ValidationError("gamma must lie in (0, 1]")


def _geometry(lon_pt, lat_pt, landfall_lon, r_max, heading, params: OracleParams):
    coslat = math.cos(math.radians(params.landfall_lat))
    r_km = KM_PER_NMI * r_max
    dlon = lon_pt - landfall_lon
    d = KM_PER_DEG * np.sqrt(dlon**2 * coslat**2 + (lat_pt - params.landfall_lat) ** 2)
    rel = KM_PER_DEG * dlon * coslat
    asym = 1.0 + params.asym_gain * np.tanh(rel / (2.0 * r_km)) * np.cos(heading * math.pi / 180.0)
    return r_km, d, asym


def surge_field(dp, v_f, r_max, landfall_lon, heading, lon, lat, elevation, manning_n, msl,
                params: OracleParams = OracleParams()):
    """Vectorised peak surge; all arguments broadcast together."""
    r_km, d, asym = _geometry(lon, lat, landfall_lon, r_max, heading, params)
    depth = msl - elevation
    s = (params.k_s * dp * (1.0 + params.vf_gain * v_f)
         * np.exp(-d / (params.surge_decay_km + params.rmax_decay_mult * r_km))
         * (1.0 + params.shallow_gain * np.exp(-np.maximum(depth, 0.0) / params.shallow_depth_m))
         * np.exp(-params.friction_gain * manning_n
                  * np.clip((params.friction_depth_m - depth) / params.friction_depth_m, 0.0, 1.0))
         * asym)
    return msl + np.maximum(s, 0.0)


def wave_field(dp, r_max, landfall_lon, heading, lon, lat, elevation, avg_slope, z0, canopy, eta,
               params: OracleParams = OracleParams()):
    """Vectorised peak significant wave height given peak surge ``eta``."""
    r_km, d, asym = _geometry(lon, lat, landfall_lon, r_max, heading, params)
    h = np.maximum(0.0, eta - elevation)
    v2 = params.k_v**2 * dp
    hs0 = (params.wave_coef * v2
           * np.exp(-d / (params.wave_decay_km + params.rmax_decay_mult * r_km))
           * np.exp(-params.z0_gain * z0)
           * (1.0 - params.canopy_gain * canopy)
           * (1.0 + params.slope_gain * np.clip(params.slope_scale * avg_slope, 0.0, 1.0))
           * asym)
    hs = np.minimum(hs0, params.gamma * h)
    return np.where(h > 0.0, hs, 0.0)


def oracle_surge(storm: StormRecord, ls: Landscape, pt: GridPoint, params: OracleParams = OracleParams()) -> float:
    dp = params.p_far - storm.c_p
    return float(surge_field(dp, storm.v_f, storm.r_max, storm.landfall_lon, storm.heading,
                             pt.lon, pt.lat, pt.elevation, pt.manning_n, ls.msl, params))


def oracle_wave(storm: StormRecord, ls: Landscape, pt: GridPoint, params: OracleParams = OracleParams(),
                eta: float | None = None) -> float:
    if eta is None:
        eta = oracle_surge(storm, ls, pt, params)
    dp = params.p_far - storm.c_p
    return float(wave_field(dp, storm.r_max, storm.landfall_lon, storm.heading, pt.lon, pt.lat,
                            pt.elevation, pt.avg_slope, pt.z0, pt.canopy, eta, params))


class SimulationTable:
    """Columnar (storm, landscape, point) -> (surge, hs) table.

    Rows are kept sorted by (landscape key, storm_id, point_id); ``landscape``
    holds indices into ``keys``.
    """

    def __init__(self, keys: Sequence[LandscapeKey], landscape, storm_id, point_id, surge, hs):
        self.keys = [tuple(k) for k in keys]
        cols = [np.asarray(landscape, np.int64), np.asarray(storm_id, np.int64),
                np.asarray(point_id, np.int64), np.asarray(surge, np.float64), np.asarray(hs, np.float64)]
        n = len(cols[0])
        if any(len(c) != n for c in cols):
            raise ValidationError("simulation table columns differ in length")
        # canonical order: landscape key, storm, point
        rank = np.empty(len(self.keys), np.int64)
        rank[sorted(range(len(self.keys)), key=lambda i: self.keys[i])] = np.arange(len(self.keys))
        order = np.lexsort((cols[2], cols[1], rank[cols[0]] if n else cols[0]))
        self.landscape, self.storm_id, self.point_id, self.surge, self.hs = (c[order] for c in cols)
        if n > 1:
            same = ((np.diff(self.landscape) == 0) & (np.diff(self.storm_id) == 0)
                    & (np.diff(self.point_id) == 0))
            if same.any():
                raise DuplicateError("duplicate (storm, landscape, point) record in simulation table")

    def __len__(self) -> int:
        return len(self.storm_id)

    def landscape_keys(self) -> list[LandscapeKey]:
        """Key of every row."""
        return [self.keys[i] for i in self.landscape]

    def records(self):
        for i in range(len(self)):
            yield (int(self.storm_id[i]), self.keys[self.landscape[i]], int(self.point_id[i]),
                   float(self.surge[i]), float(self.hs[i]))

    def mask_for(self, key: LandscapeKey) -> np.ndarray:
        if tuple(key) not in self.keys:
            return np.zeros(len(self), bool)
        return self.landscape == self.keys.index(tuple(key))

    def subset(self, mask) -> "SimulationTable":
        mask = np.asarray(mask)
        return SimulationTable(self.keys, self.landscape[mask], self.storm_id[mask],
                               self.point_id[mask], self.surge[mask], self.hs[mask])

    def get(self, storm_id: int, key: LandscapeKey, point_id: int) -> tuple[float, float]:
        m = self.mask_for(key) & (self.storm_id == storm_id) & (self.point_id == point_id)
        idx = np.flatnonzero(m)
        if len(idx) == 0:
            raise KeyError((storm_id, key, point_id))
        return float(self.surge[idx[0]]), float(self.hs[idx[0]])

    @classmethod
    def concat(cls, tables: Sequence["SimulationTable"]) -> "SimulationTable":
        keys: list[LandscapeKey] = []
        for t in tables:
            for k in t.keys:
                if k not in keys:
                    keys.append(k)
        remap = [np.array([keys.index(k) for k in t.keys], np.int64) for t in tables]
        return cls(keys,
                   np.concatenate([r[t.landscape] if len(t) else t.landscape for r, t in zip(remap, tables)]),
                   np.concatenate([t.storm_id for t in tables]),
                   np.concatenate([t.point_id for t in tables]),
                   np.concatenate([t.surge for t in tables]),
                   np.concatenate([t.hs for t in tables]))


def default_subset_rule(catalog: Catalog) -> Callable[[Landscape], list[int]]:
    """Full catalog on the baseline landscape, core subset elsewhere."""
    all_ids = catalog.ids
    core = catalog.core_ids

    def rule(ls: Landscape) -> list[int]:
        return all_ids if ls.is_baseline else core

    return rule


def simulate_landscape(storms: Sequence[StormRecord], ls: Landscape, params: OracleParams = OracleParams()):
    """Evaluate the oracle on every (storm, point) pair; returns (surge, hs) of shape (S, P)."""
    s = {name: np.array([getattr(st, name) for st in storms], np.float64)[:, None]
         for name in ("heading", "v_f", "r_max", "landfall_lon", "c_p")}
    dp = params.p_far - s["c_p"]
    p = {name: ls.column(name)[None, :] for name in
         ("lon", "lat", "elevation", "avg_slope", "manning_n", "z0", "canopy")}
    eta = surge_field(dp, s["v_f"], s["r_max"], s["landfall_lon"], s["heading"], p["lon"], p["lat"],
                      p["elevation"], p["manning_n"], ls.msl, params)
    hs = wave_field(dp, s["r_max"], s["landfall_lon"], s["heading"], p["lon"], p["lat"], p["elevation"],
                    p["avg_slope"], p["z0"], p["canopy"], eta, params)
    return eta, hs


def generate_simulations(catalog: Catalog, landscapes: Sequence[Landscape], params: OracleParams = OracleParams(),
                         subset_rule: Callable[[Landscape], Iterable[int]] | None = None) -> SimulationTable:
    rule = subset_rule or default_subset_rule(catalog)
    by_id = catalog.by_id()
    ordered = sorted(landscapes, key=lambda ls: ls.key)
    parts = []
    for li, ls in enumerate(ordered):
        ids = sorted(set(int(i) for i in rule(ls)))
        if not ids:
            raise ConfigurationError(f"no storms selected for landscape {ls.key}")
        try:
            storms = [by_id[i] for i in ids]
        except KeyError as exc:
            raise ConfigurationError(f"subset for {ls.key} names unknown storm {exc.args[0]}") from None
        eta, hs = simulate_landscape(storms, ls, params)
        S, P = eta.shape
        parts.append((np.full(S * P, li), np.repeat(ids, P), np.tile(ls.point_ids, S), eta.ravel(), hs.ravel()))
    cols = [np.concatenate(c) for c in zip(*parts)] if parts else [[]] * 5
    return SimulationTable([ls.key for ls in ordered], *cols)


# --- sims_<scenario>_<year>.csv ----------------------------------------------

SIM_COLUMNS = ("storm_id", "point_id", "surge_m", "hs_m")


def format_simulations(table: SimulationTable, key: LandscapeKey) -> str:
    m = table.mask_for(key)
    buf = io.StringIO()
    buf.write(",".join(SIM_COLUMNS) + "\n")
    for sid, pid, s, h in zip(table.storm_id[m], table.point_id[m], table.surge[m], table.hs[m]):
        buf.write(f"{sid},{pid},{float(s)!r},{float(h)!r}\n")
    return buf.getvalue()


def parse_simulations(text: str, key: LandscapeKey) -> SimulationTable:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != SIM_COLUMNS:
        raise ParseError(f"simulation file header must be {','.join(SIM_COLUMNS)}")
    rows = [r for r in reader if r]
    try:
        arr = np.array(rows, dtype=np.float64).reshape(len(rows), 4)
    except ValueError as exc:
        raise ParseError(f"malformed simulation row: {exc}") from None
    return SimulationTable([key], np.zeros(len(rows), np.int64), arr[:, 0].astype(np.int64),
                           arr[:, 1].astype(np.int64), arr[:, 2], arr[:, 3])


def sim_filename(key: LandscapeKey) -> str:
    return f"sims_{landscape_stem(key)}.csv"
