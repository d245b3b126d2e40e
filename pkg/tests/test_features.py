import numpy as np
import pytest

from wavesurrogate.catalog import Catalog
from wavesurrogate.errors import ConfigurationError, JoinError, StateError
from wavesurrogate.features import (BASE_FEATURES, Dataset, Scaler, apply, assemble, fit_scaler, invert_targets,
                                    schema_for)
from wavesurrogate.oracle import generate_simulations
from conftest import make_landscape, make_point, make_storm


def one_row():
    storm, pt = make_storm(), make_point()
    ls = make_landscape([pt], msl=0.3)
    cat = Catalog((storm,))
    return generate_simulations(cat, [ls]), cat, [ls]


def test_schema_dimensions():
    assert [schema_for(v).input_dim for v in ("M1", "M2", "M3", "M4")] == [13, 14, 14, 13]
    assert [schema_for(v).output_dim for v in ("M1", "M2", "M3", "M4")] == [1, 1, 1, 2]
    assert schema_for("M4").targets == ("surge", "hs")
    assert schema_for("M1", "surge").targets == ("surge",)


def test_single_record_dimensions():
    table, cat, ls = one_row()
    ds = assemble(table, cat, ls, schema_for("M1"))
    assert ds.X.shape == (1, 13) and ds.Y.shape == (1, 1)
    storm, pt = cat.storms[0], ls[0].points[0]
    expected = [storm.heading, storm.v_f, storm.r_max, storm.landfall_lon, storm.c_p, pt.lon, pt.lat,
                pt.elevation, pt.avg_slope, pt.manning_n, pt.z0, pt.canopy, 0.3]
    assert ds.X[0].tolist() == expected


def test_m3_surge_feature_is_simulated_surge(tiny_study):
    landscapes, catalog, table = tiny_study
    ds = assemble(table, catalog, landscapes, schema_for("M3"), "simulated")
    assert np.array_equal(ds.X[:, 13], table.surge)


def test_m4_targets_join_row_by_row(tiny_study):
    landscapes, catalog, table = tiny_study
    ds = assemble(table, catalog, landscapes, schema_for("M4"))
    for i in range(0, len(ds), 37):
        surge, hs = table.get(int(ds.storm_id[i]), ds.keys[ds.landscape[i]], int(ds.point_id[i]))
        assert ds.Y[i].tolist() == [surge, hs]


def test_surge_source_required_for_m2_and_m3(tiny_study):
    landscapes, catalog, table = tiny_study
    with pytest.raises(ConfigurationError):
        assemble(table, catalog, landscapes, schema_for("M3"))
    with pytest.raises(ConfigurationError):
        assemble(table, catalog, landscapes, schema_for("M2"), "simulated")
    with pytest.raises(ConfigurationError):
        assemble(table, catalog, landscapes, schema_for("M1"), "simulated")


def test_predicted_surge_feeds_m2(tiny_study):
    landscapes, catalog, table = tiny_study
    ds = assemble(table, catalog, landscapes, schema_for("M2"), lambda base: np.full(len(base), 0.25))
    assert (ds.X[:, 13] == 0.25).all()


def test_missing_storm_is_join_error(tiny_study):
    landscapes, catalog, table = tiny_study
    smaller = Catalog(catalog.storms[1:])
    with pytest.raises(JoinError):
        assemble(table, smaller, landscapes, schema_for("M1"))


def small_dataset(X, Y):
    n = len(X)
    return Dataset(np.asarray(X, float), np.asarray(Y, float), (("Baseline", 2020),), np.zeros(n, np.int64),
                   np.arange(1, n + 1), np.ones(n, np.int64), schema_for("M1"))


def test_two_value_column_scales_to_unit():
    X = np.zeros((2, 13))
    X[:, 0] = [1.0, 3.0]
    ds = small_dataset(X, [[1.0], [3.0]])
    out = apply(fit_scaler(ds), ds)
    assert out.X[:, 0].tolist() == [-1.0, 1.0]
    assert out.Y[:, 0].tolist() == [-1.0, 1.0]
    assert (out.X[:, 1:] == 0).all()  # constant columns stay finite


def test_target_round_trip(rng):
    ds = small_dataset(rng.normal(size=(50, 13)), rng.normal(3.0, 2.0, size=(50, 1)))
    sc = fit_scaler(ds)
    np.testing.assert_allclose(invert_targets(sc, apply(sc, ds).Y), ds.Y, rtol=1e-9)
    np.testing.assert_allclose(apply(sc, ds).X.mean(axis=0), 0.0, atol=1e-9)


def test_unfitted_scaler_is_state_error():
    ds = small_dataset(np.zeros((1, 13)), [[0.0]])
    with pytest.raises(StateError):
        apply(Scaler(), ds)


def test_base_feature_order_is_frozen():
    assert BASE_FEATURES == ("heading", "v_f", "r_max", "landfall_lon", "c_p", "lon", "lat", "elevation",
                             "avg_slope", "manning_n", "z0", "canopy", "msl")
