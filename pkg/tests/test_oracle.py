import math

import numpy as np
import pytest

from wavesurrogate.catalog import Catalog
from wavesurrogate.errors import ConfigurationError, DuplicateError
from wavesurrogate.oracle import (OracleParams, SimulationTable, format_simulations, generate_simulations,
                                  oracle_surge, oracle_wave, parse_simulations)
from conftest import make_landscape, make_point, make_storm


def reference_surge_wave(storm, msl, pt, lat0=29.5):
    """Straight transcription of the closed-form oracle with default constants."""
    dp = 1013.25 - storm.c_p
    r_km = 1.852 * storm.r_max
    c = math.cos(math.radians(lat0))
    d = 111.0 * math.sqrt((pt.lon - storm.landfall_lon) ** 2 * c ** 2 + (pt.lat - lat0) ** 2)
    rel = 111.0 * (pt.lon - storm.landfall_lon) * c
    asym = 1 + 0.25 * math.tanh(rel / (2 * r_km)) * math.cos(math.radians(storm.heading))
    D = msl - pt.elevation
    S = (0.012 * dp * (1 + 0.015 * storm.v_f) * math.exp(-d / (25 + 3 * r_km))
         * (1 + 0.6 * math.exp(-max(D, 0) / 8)) * math.exp(-8 * pt.manning_n * min(max((2 - D) / 2, 0), 1)) * asym)
    eta = msl + max(S, 0.0)
    h = max(0.0, eta - pt.elevation)
    V = 3.0 * math.sqrt(dp)
    hs0 = (0.0025 * V * V * math.exp(-d / (40 + 3 * r_km)) * math.exp(-2 * pt.z0) * (1 - 0.5 * pt.canopy)
           * (1 + 0.3 * min(max(50 * pt.avg_slope, 0), 1)) * asym)
    return eta, (0.0 if h == 0 else min(hs0, 0.78 * h))


def test_zero_pressure_deficit_leaves_mean_sea_level():
    storm = make_storm(c_p=1013.25 - 1e-9)
    ls = make_landscape([make_point()], msl=0.4)
    assert oracle_surge(storm, ls, ls.points[0]) == pytest.approx(0.4, abs=1e-9)


def test_surge_at_landfall_in_deep_water():
    storm = make_storm(c_p=1013.25 - 148, v_f=10.0, landfall_lon=-90.0)
    pt = make_point(lon=-90.0, lat=29.5, elevation=-20.0, manning_n=0.07)
    ls = make_landscape([pt], msl=0.0)
    # 0.012 * 148 * 1.15 * (1 + 0.6 exp(-2.5)), evaluated by hand
    assert oracle_surge(storm, ls, pt) == pytest.approx(2.1429902407136705, rel=1e-12)


def test_wind_limited_wave_at_landfall():
    storm = make_storm(c_p=1013.25 - 148, landfall_lon=-90.0)
    pt = make_point(lon=-90.0, lat=29.5, elevation=-20.0, z0=0.1, canopy=0.2, avg_slope=0.01)
    ls = make_landscape([pt], msl=0.0)
    # 0.0025 * 9 * 148 * exp(-0.2) * 0.9 * 1.15; gamma * h is about 17 m so the wind branch applies
    assert oracle_wave(storm, ls, pt) == pytest.approx(2.8217964770209183, rel=1e-12)


def test_more_friction_lowers_surge_on_land():
    storm = make_storm()
    a = make_point(elevation=0.5, manning_n=0.05)
    b = make_point(elevation=0.5, manning_n=0.10)
    ls = make_landscape([a], msl=0.0)
    assert oracle_surge(storm, ls, b) < oracle_surge(storm, ls, a)


def test_dry_point_has_no_waves():
    storm = make_storm(c_p=1000.0)
    pt = make_point(elevation=10.0)
    ls = make_landscape([pt], msl=0.0)
    assert oracle_wave(storm, ls, pt) == 0.0


def test_full_canopy_halves_wind_limited_waves():
    storm = make_storm()
    bare = make_point(elevation=-20.0, canopy=0.0)
    forest = make_point(elevation=-20.0, canopy=1.0)
    ls = make_landscape([bare], msl=0.0)
    assert oracle_wave(storm, ls, forest) == pytest.approx(0.5 * oracle_wave(storm, ls, bare), rel=1e-12)


def test_matches_reference_transcription(rng):
    for _ in range(300):
        storm = make_storm(heading=rng.uniform(-180, 180), v_f=rng.uniform(3, 25), r_max=rng.uniform(5, 40),
                           landfall_lon=rng.uniform(-94, -88), c_p=rng.uniform(880, 1010))
        pt = make_point(lon=rng.uniform(-94, -88), lat=rng.uniform(28.8, 30.5), elevation=rng.uniform(-5, 4),
                        avg_slope=rng.uniform(0, 0.05), manning_n=rng.uniform(0.02, 0.12), z0=rng.uniform(0, 0.6),
                        canopy=rng.uniform(0, 1))
        msl = rng.uniform(0, 1.5)
        ls = make_landscape([pt], msl=msl)
        eta, hs = reference_surge_wave(storm, msl, pt)
        assert oracle_surge(storm, ls, pt) == pytest.approx(eta, rel=1e-12, abs=1e-12)
        assert oracle_wave(storm, ls, pt) == pytest.approx(hs, rel=1e-12, abs=1e-12)


def test_mirror_symmetry():
    east = make_point(lon=-89.7, elevation=-2.0)
    west = make_point(lon=-90.3, elevation=-2.0)
    ls = make_landscape([east], msl=0.0)
    a, b = make_storm(heading=30.0), make_storm(heading=150.0)
    assert oracle_surge(a, ls, east) == pytest.approx(oracle_surge(b, ls, west), rel=1e-12)
    assert oracle_wave(a, ls, east) == pytest.approx(oracle_wave(b, ls, west), rel=1e-12)


def test_waves_bounded_by_breaking_limit(tiny_study):
    landscapes, catalog, table = tiny_study
    elev = {ls.key: dict(zip(ls.point_ids, ls.column("elevation"))) for ls in landscapes}
    msl = {ls.key: ls.msl for ls in landscapes}
    for key in table.keys:
        m = table.mask_for(key)
        e = np.array([elev[key][p] for p in table.point_id[m]])
        h = np.maximum(0.0, table.surge[m] - e)
        assert (table.hs[m] <= 0.78 * h + 1e-12).all()
        assert (table.hs[m][h == 0] == 0).all()
        assert (table.surge[m] >= msl[key]).all()


def test_table_size_is_full_catalog_on_baseline_plus_core_elsewhere(tiny_study):
    landscapes, catalog, table = tiny_study
    P = len(landscapes[0].points)
    assert len(table) == len(catalog) * P + 10 * catalog.n_core * P


def test_single_record_table():
    pt = make_point()
    table = generate_simulations(Catalog((make_storm(),)), [make_landscape([pt])])
    assert len(table) == 1


def test_empty_subset_is_configuration_error():
    with pytest.raises(ConfigurationError):
        generate_simulations(Catalog((make_storm(),)), [make_landscape([make_point()])], subset_rule=lambda ls: [])


def test_generation_is_order_independent(tiny_study):
    landscapes, catalog, table = tiny_study
    again = generate_simulations(catalog, list(reversed(landscapes)))
    assert np.array_equal(again.surge, table.surge) and np.array_equal(again.hs, table.hs)


def test_simulation_file_round_trip(tiny_study):
    _, _, table = tiny_study
    key = table.keys[0]
    sub = table.subset(table.mask_for(key))
    back = parse_simulations(format_simulations(table, key), key)
    assert np.array_equal(back.hs, sub.hs) and np.array_equal(back.surge, sub.surge)


def test_duplicate_records_rejected():
    with pytest.raises(DuplicateError):
        SimulationTable([("Baseline", 2020)], [0, 0], [1, 1], [1, 1], [0.1, 0.2], [0.0, 0.0])


def test_params_must_be_positive():
    with pytest.raises(Exception):
        OracleParams(k_s=0.0)
    with pytest.raises(Exception):
        OracleParams(gamma=1.2)
