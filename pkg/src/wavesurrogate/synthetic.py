"""Desk-scale study design: evolving landscapes on a raster grid.

Fields are smooth analytic functions of normalised grid coordinates
(``u`` west to east, ``v`` south to north). Vegetation-driven attributes
(Manning's n, canopy, z0) follow elevation relative to mean sea level, so
they degrade as land subsides and the sea rises.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .catalog import Catalog, GridPoint, Landscape, bundled_catalog, compute_avg_slope
from .errors import ValidationError

BASE_YEAR = 2020
FUTURE_YEARS = (2030, 2040, 2050, 2060, 2070)
SCENARIOS = ("Lower", "Higher")
DEM_CELL_M = 30.0


@dataclass(frozen=True)
class GridDesign:
    rows: int = 24
    cols: int = 24
    lon_min: float = -93.6
    lon_max: float = -88.8
    lat_min: float = 28.9
    lat_max: float = 30.4
    msl_base: float = 0.15
    seed: int = 2020


def grid_shape(n_points: int) -> tuple[int, int]:
    """Most nearly square factorisation rows x cols of ``n_points``."""
    if n_points < 1:
        raise ValidationError("need at least one grid point")
    r = int(math.isqrt(n_points))
    while n_points % r:
        r -= 1
    return r, n_points // r


def sea_level(scenario: str, year: int, base: float = 0.15) -> float:
    t = (year - BASE_YEAR) / 50.0
    if scenario == "Lower":
        return base + 0.35 * t
    if scenario == "Higher":
        # accelerating rise: the last decade is well outside the earlier range
        return base + 0.2 * t + 0.5 * t ** 2 + 1.45 * t ** 6
    return base


def _coords(design: GridDesign):
    v, u = np.meshgrid(np.linspace(0.0, 1.0, design.rows), np.linspace(0.0, 1.0, design.cols), indexing="ij")
    lon = design.lon_min + u * (design.lon_max - design.lon_min)
    lat = design.lat_min + v * (design.lat_max - design.lat_min)
    return u.ravel(), v.ravel(), lon.ravel(), lat.ravel()


def _local_slopes(n: int, relief: np.ndarray, seed: int) -> np.ndarray:
    """Centre-cell average slope of a 3x3 DEM patch around each point."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((n, 3, 3))
    return np.array([compute_avg_slope(relief[i] * noise[i], DEM_CELL_M)[1, 1] for i in range(n)])


def _vegetation(elev, msl):
    return 1.0 / (1.0 + np.exp(-(elev - msl + 0.5) / 0.15))


def make_landscape(design: GridDesign, scenario: str, year: int) -> Landscape:
    u, v, lon, lat = _coords(design)
    n = len(u)
    elev0 = (-3.2 + 3.8 * v ** 1.5 + 0.3 * np.sin(3.0 * math.pi * u) * v
             + 0.2 * np.cos(5.0 * math.pi * u + 2.0 * v))
    relief = 0.05 + 0.25 * (1.0 + np.sin(2.0 * math.pi * (u + 0.7 * v)))
    forest = 0.5 + 0.5 * np.cos(2.0 * math.pi * (u - 0.3))
    t = max(0.0, (year - BASE_YEAR) / 50.0)
    factor = {"Lower": 1.0, "Higher": 1.5}.get(scenario, 0.0)
    subsidence = (0.15 + 0.35 * (0.5 + 0.5 * np.sin(math.pi * u) * v)) * t * factor
    elev = elev0 - subsidence
    msl = sea_level(scenario, year, design.msl_base)
    veg = _vegetation(elev, msl)
    manning = 0.02 + 0.10 * veg
    canopy = np.clip(0.7 * veg * forest, 0.0, 1.0)
    z0 = 0.01 + 0.6 * canopy
    slope = _local_slopes(n, relief, design.seed) * (1.0 - 0.3 * t * (factor > 1.0))
    points = tuple(
        GridPoint(i + 1, float(lon[i]), float(lat[i]), float(elev[i]), float(slope[i]), float(manning[i]),
                  float(z0[i]), float(canopy[i]))
        for i in range(n))
    for p in points:
        p.validate()
    return Landscape(scenario, int(year), float(msl), points)


def make_landscapes(design: GridDesign = GridDesign()) -> list[Landscape]:
    """One baseline plus every (scenario, future year) landscape."""
    out = [make_landscape(design, "Baseline", BASE_YEAR)]
    for scenario in SCENARIOS:
        for year in FUTURE_YEARS:
            out.append(make_landscape(design, scenario, year))
    return sorted(out, key=lambda ls: ls.key)


def reduced_catalog(n_storms: int, n_core: int | None = None) -> Catalog:
    """The bundled catalog, or an evenly spaced subset of it with a proportional core."""
    full = bundled_catalog()
    if n_storms >= len(full):
        return full
    if n_storms < 1:
        raise ValidationError("need at least one storm")
    idx = np.unique(np.round(np.linspace(0, len(full) - 1, n_storms)).astype(int))
    picked = [full.storms[i] for i in idx]
    if n_core is None:
        n_core = max(1, round(len(picked) * 90 / 645))
    core_idx = set(np.unique(np.round(np.linspace(0, len(picked) - 1, n_core)).astype(int)).tolist())
    storms = tuple(
        type(s)(s.storm_id, s.heading, s.v_f, s.r_max, s.landfall_lon, s.c_p, is_core=i in core_idx)
        for i, s in enumerate(picked))
    return Catalog(storms, declared_core=len(core_idx))
