"""Per-row feature matrices for the four model variants, and z-score scaling."""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .catalog import Catalog, Landscape
from .errors import ConfigurationError, JoinError, SchemaMismatchError, StateError
from .oracle import LandscapeKey, SimulationTable

STORM_FEATURES = ("heading", "v_f", "r_max", "landfall_lon", "c_p")
POINT_FEATURES = ("lon", "lat", "elevation", "avg_slope", "manning_n", "z0", "canopy")
BASE_FEATURES = STORM_FEATURES + POINT_FEATURES + ("msl",)

VARIANTS = ("M1", "M2", "M3", "M4")
STD_FLOOR = 1e-12


@dataclass(frozen=True)
class FeatureSchema:
    variant: str
    features: tuple[str, ...]
    targets: tuple[str, ...]

    @property
    def input_dim(self) -> int:
        return len(self.features)

    @property
    def output_dim(self) -> int:
        return len(self.targets)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "features": list(self.features), "targets": list(self.targets)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(d["variant"], tuple(d["features"]), tuple(d["targets"]))


def schema_for(variant: str, target: str | None = None) -> FeatureSchema:
    """Schema of a model variant.

    ``target="surge"`` with M1 gives the surge surrogate used to feed M2.
    """
    if variant not in VARIANTS:
        raise ConfigurationError(f"unknown variant {variant!r}")
    if variant in ("M2", "M3"):
        return FeatureSchema(variant, BASE_FEATURES + ("surge",), ("hs",))
    if variant == "M4":
        return FeatureSchema(variant, BASE_FEATURES, ("surge", "hs"))
    return FeatureSchema(variant, BASE_FEATURES, (target or "hs",))


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    keys: tuple[LandscapeKey, ...]
    landscape: np.ndarray
    storm_id: np.ndarray
    point_id: np.ndarray
    schema: FeatureSchema

    def __post_init__(self):
        n = len(self.storm_id)
        if self.X.shape != (n, self.schema.input_dim) or self.Y.shape != (n, self.schema.output_dim):
            raise SchemaMismatchError(
                f"dataset shapes X{self.X.shape} Y{self.Y.shape} do not fit schema {self.schema.variant} with {n} rows")

    def __len__(self) -> int:
        return len(self.storm_id)

    def take(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.Y[idx], self.keys, self.landscape[idx], self.storm_id[idx],
                       self.point_id[idx], self.schema)

    def with_arrays(self, X=None, Y=None) -> "Dataset":
        return Dataset(self.X if X is None else X, self.Y if Y is None else Y, self.keys, self.landscape,
                       self.storm_id, self.point_id, self.schema)

    def to_csv(self) -> str:
        """Debug export: key columns, named features, targets."""
        buf = io.StringIO()
        cols = ["storm_id", "scenario", "year", "point_id", *self.schema.features,
                *(f"target_{t}" for t in self.schema.targets)]
        buf.write(",".join(cols) + "\n")
        for i in range(len(self)):
            sc, yr = self.keys[self.landscape[i]]
            vals = [repr(float(v)) for v in self.X[i]] + [repr(float(v)) for v in self.Y[i]]
            buf.write(f"{self.storm_id[i]},{sc},{yr},{self.point_id[i]}," + ",".join(vals) + "\n")
        return buf.getvalue()


def assemble(table: SimulationTable, catalog: Catalog, landscapes: Sequence[Landscape], schema: FeatureSchema,
             surge_source=None) -> Dataset:
    """Join simulation rows with storm and landscape attributes.

    ``surge_source`` is ``None`` for M1/M4, ``"simulated"`` for M3 (surge from
    the table) and, for M2, a callable mapping an M1-schema dataset of the
    same rows to predicted surge in metres.
    """
    needs_surge = "surge" in schema.features
    if needs_surge:
        if schema.variant == "M3" and surge_source != "simulated":
            raise ConfigurationError("M3 requires surge_source='simulated'")
        if schema.variant == "M2" and not callable(surge_source):
            raise ConfigurationError("M2 requires a surge surrogate as surge_source")
    elif surge_source is not None:
        raise ConfigurationError(f"{schema.variant} takes no surge feature")

    n = len(table)
    cols: dict[str, np.ndarray] = {}

    by_id = catalog.by_id()
    sids = np.unique(table.storm_id) if n else np.zeros(0, np.int64)
    missing = [int(s) for s in sids if int(s) not in by_id]
    if missing:
        raise JoinError(f"storms {missing[:5]} in table are absent from the catalog")
    storm_attr = {f: np.array([getattr(by_id[int(s)], f) for s in sids], np.float64) for f in STORM_FEATURES}
    sidx = np.searchsorted(sids, table.storm_id)
    for f in STORM_FEATURES:
        cols[f] = storm_attr[f][sidx]

    ls_by_key = {ls.key: ls for ls in landscapes}
    for f in POINT_FEATURES + ("msl",):
        cols[f] = np.empty(n, np.float64)
    for li, key in enumerate(table.keys):
        rows = np.flatnonzero(table.landscape == li)
        if len(rows) == 0:
            continue
        if key not in ls_by_key:
            raise JoinError(f"landscape {key} in table is absent from the study")
        ls = ls_by_key[key]
        pids = ls.point_ids
        pidx = np.searchsorted(pids, table.point_id[rows])
        pidx_c = np.minimum(pidx, len(pids) - 1)
        bad = pids[pidx_c] != table.point_id[rows]
        if bad.any():
            raise JoinError(f"point {int(table.point_id[rows][bad][0])} absent from landscape {key}")
        for f in POINT_FEATURES:
            cols[f][rows] = ls.column(f)[pidx_c]
        cols["msl"][rows] = ls.msl

    targets = {"surge": table.surge, "hs": table.hs}
    Y = np.column_stack([targets[t] for t in schema.targets]) if n else np.zeros((0, schema.output_dim))
    base = Dataset(np.column_stack([cols[f] for f in BASE_FEATURES]) if n else np.zeros((0, len(BASE_FEATURES))),
                   np.zeros((n, 1)), tuple(table.keys), table.landscape, table.storm_id, table.point_id,
                   schema_for("M1"))
    if needs_surge:
        if surge_source == "simulated":
            surge = table.surge
        else:
            surge = np.asarray(surge_source(base), np.float64).reshape(n)
        X = np.column_stack([base.X, surge])
    else:
        X = base.X
    return Dataset(X, Y, base.keys, base.landscape, base.storm_id, base.point_id, schema)


@dataclass
class Scaler:
    x_mean: np.ndarray | None = None
    x_std: np.ndarray | None = None
    y_mean: np.ndarray | None = None
    y_std: np.ndarray | None = None

    @property
    def fitted(self) -> bool:
        return self.x_mean is not None

    def _check(self):
        if not self.fitted:
            raise StateError("scaler has not been fitted")

    def to_dict(self) -> dict:
        self._check()
        return {k: [float(v) for v in getattr(self, k)] for k in ("x_mean", "x_std", "y_mean", "y_std")}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(*(np.array(d[k], np.float64) for k in ("x_mean", "x_std", "y_mean", "y_std")))


def _stats(a: np.ndarray):
    mean = a.mean(axis=0)
    std = a.std(axis=0)
    return mean, np.where(std < STD_FLOOR, 1.0, std)


def fit_scaler(train: Dataset) -> Scaler:
    if len(train) == 0:
        raise ConfigurationError("cannot fit a scaler on zero rows")
    xm, xs = _stats(train.X)
    ym, ys = _stats(train.Y)
    return Scaler(xm, xs, ym, ys)


def apply(scaler: Scaler, ds: Dataset) -> Dataset:
    scaler._check()
    return ds.with_arrays(X=(ds.X - scaler.x_mean) / scaler.x_std, Y=(ds.Y - scaler.y_mean) / scaler.y_std)


def transform_inputs(scaler: Scaler, X: np.ndarray) -> np.ndarray:
    scaler._check()
    return (X - scaler.x_mean) / scaler.x_std


def invert_targets(scaler: Scaler, preds: np.ndarray) -> np.ndarray:
    scaler._check()
    return np.asarray(preds) * scaler.y_std + scaler.y_mean
