"""Storm catalogs, landscape grids and derived morphology.

Delimited text is accepted with either comma or tab separators; the separator
is detected from the header row.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DuplicateError, ParseError, ValidationError

LANDFALL_LAT = 29.5
P_FAR = 1013.25

STORM_COLUMNS = ("storm_id", "heading_deg", "vf_kt", "rmax_nmi", "landfall_lon_deg", "cp_mbar")
POINT_COLUMNS = ("point_id", "lon_deg", "lat_deg", "elev_m", "avg_slope", "manning_n", "z0_m", "canopy")

# Column labels as printed in the supplementary storm table.
_STORM_ALIASES = {
    "storm id": "storm_id",
    "heading": "heading_deg",
    "v_f (knots)": "vf_kt",
    "r_{max} (nm)": "rmax_nmi",
    "landfall lon (x)": "landfall_lon_deg",
    "c_p (mbar)": "cp_mbar",
}


@dataclass(frozen=True)
class StormRecord:
    storm_id: int
    heading: float
    v_f: float
    r_max: float
    landfall_lon: float
    c_p: float
    is_core: bool = False

    def validate(self) -> None:
        if self.storm_id <= 0:
            raise ValidationError(f"storm {self.storm_id}: storm_id must be positive")
        if not 800.0 < self.c_p < P_FAR:
            raise ValidationError(f"storm {self.storm_id}: c_p={self.c_p} outside (800, 1013.25)")
        if not self.v_f > 0:
            raise ValidationError(f"storm {self.storm_id}: v_f must be > 0")
        if not self.r_max > 0:
            raise ValidationError(f"storm {self.storm_id}: r_max must be > 0")
        if not -180.0 < self.heading <= 180.0:
            raise ValidationError(f"storm {self.storm_id}: heading {self.heading} outside (-180, 180]")
        if not math.isfinite(self.landfall_lon):
            raise ValidationError(f"storm {self.storm_id}: landfall_lon not finite")

    @property
    def delta_p(self) -> float:
        return P_FAR - self.c_p


@dataclass(frozen=True)
class GridPoint:
    point_id: int
    lon: float
    lat: float
    elevation: float
    avg_slope: float
    manning_n: float
    z0: float
    canopy: float

    def validate(self) -> None:
        pid = self.point_id
        if pid <= 0:
            raise ValidationError(f"point {pid}: point_id must be positive")
        for name in ("lon", "lat", "elevation"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"point {pid}: {name} not finite")
        if not 0.0 <= self.canopy <= 1.0:
            raise ValidationError(f"point {pid}: canopy {self.canopy} outside [0, 1]")
        for name in ("manning_n", "z0", "avg_slope"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ValidationError(f"point {pid}: {name}={value} must be >= 0")


@dataclass(frozen=True)
class Landscape:
    scenario: str
    year: int
    msl: float
    points: tuple[GridPoint, ...]

    @property
    def key(self) -> tuple[str, int]:
        return (self.scenario, self.year)

    @property
    def is_baseline(self) -> bool:
        return self.scenario.lower() == "baseline"

    @property
    def point_ids(self) -> np.ndarray:
        return np.array([p.point_id for p in self.points], dtype=np.int64)

    def column(self, name: str) -> np.ndarray:
        """One point attribute as a float array, in point order."""
        return np.array([getattr(p, name) for p in self.points], dtype=np.float64)


@dataclass(frozen=True)
class Catalog:
    storms: tuple[StormRecord, ...]
    declared_core: int | None = None

    def __post_init__(self):
        ids = [s.storm_id for s in self.storms]
        if len(set(ids)) != len(ids):
            raise DuplicateError("duplicate storm_id in catalog")
        if self.declared_core is not None and self.n_core != self.declared_core:
            raise ValidationError(f"core subset has {self.n_core} storms, declared {self.declared_core}")

    def __len__(self) -> int:
        return len(self.storms)

    @property
    def n_core(self) -> int:
        return sum(s.is_core for s in self.storms)

    @property
    def core_ids(self) -> list[int]:
        return [s.storm_id for s in self.storms if s.is_core]

    @property
    def ids(self) -> list[int]:
        return [s.storm_id for s in self.storms]

    def by_id(self) -> dict[int, StormRecord]:
        return {s.storm_id: s for s in self.storms}


def _sniff_delimiter(header: str) -> str:
    return "\t" if "\t" in header else ","


def _read_rows(text: str) -> tuple[list[str], list[list[str]]]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty input: missing header row")
    delim = _sniff_delimiter(lines[0])
    rows = list(csv.reader(lines, delimiter=delim))
    header = [h.strip() for h in rows[0]]
    return header, [[c.strip() for c in r] for r in rows[1:]]


def _number(raw: str, row: int, column: str, kind=float):
    try:
        value = kind(raw)
    except ValueError:
        raise ParseError(f"row {row}, column {column!r}: cannot parse {raw!r}") from None
    if kind is float and not math.isfinite(value):
        raise ParseError(f"row {row}, column {column!r}: non-finite value {raw!r}")
    return value


def _check_header(header: Sequence[str], expected: Sequence[str], aliases: dict[str, str] | None = None):
    names = [(aliases or {}).get(h.lower(), h) for h in header]
    if tuple(names) != tuple(expected):
        raise ParseError(f"header {list(header)} does not match expected columns {list(expected)}")


def parse_storm_catalog(text: str, core_ids: Iterable[int] = ()) -> Catalog:
    """Parse storm rows (comma or tab separated) into a validated Catalog."""
    header, rows = _read_rows(text)
    _check_header(header, STORM_COLUMNS, _STORM_ALIASES)
    core = set(int(c) for c in core_ids)
    storms = []
    seen = set()
    for i, row in enumerate(rows, start=1):
        if len(row) != len(STORM_COLUMNS):
            raise ParseError(f"row {i}: expected {len(STORM_COLUMNS)} fields, got {len(row)}")
        sid = _number(row[0], i, STORM_COLUMNS[0], int)
        vals = [_number(r, i, c) for r, c in zip(row[1:], STORM_COLUMNS[1:])]
        if sid in seen:
            raise DuplicateError(f"row {i}: duplicate storm_id {sid}")
        seen.add(sid)
        storm = StormRecord(sid, *vals, is_core=sid in core)
        storm.validate()
        storms.append(storm)
    missing = core - seen
    if missing:
        raise ValidationError(f"core ids not in catalog: {sorted(missing)[:10]}")
    return Catalog(tuple(storms), declared_core=len(core) if core else None)


def parse_core_ids(text: str) -> list[int]:
    ids = []
    for i, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if line:
            ids.append(_number(line, i, "storm_id", int))
    if len(set(ids)) != len(ids):
        raise DuplicateError("duplicate storm_id in core list")
    return ids


def parse_landscape(points_text: str, meta: dict) -> Landscape:
    """Parse grid-point rows plus a ``{scenario, year, msl_m}`` record."""
    try:
        scenario = str(meta["scenario"])
        year = int(meta["year"])
        msl = float(meta["msl_m"] if "msl_m" in meta else meta["msl"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad landscape metadata {meta!r}: {exc}") from None
    if not math.isfinite(msl):
        raise ValidationError("msl must be finite")
    header, rows = _read_rows(points_text)
    _check_header(header, POINT_COLUMNS)
    points = []
    seen = set()
    for i, row in enumerate(rows, start=1):
        if len(row) != len(POINT_COLUMNS):
            raise ParseError(f"row {i}: expected {len(POINT_COLUMNS)} fields, got {len(row)}")
        pid = _number(row[0], i, POINT_COLUMNS[0], int)
        vals = [_number(r, i, c) for r, c in zip(row[1:], POINT_COLUMNS[1:])]
        if pid in seen:
            raise DuplicateError(f"row {i}: duplicate point_id {pid}")
        seen.add(pid)
        pt = GridPoint(pid, *vals)
        pt.validate()
        points.append(pt)
    points.sort(key=lambda p: p.point_id)
    return Landscape(scenario, year, msl, tuple(points))


def check_study(landscapes: Sequence[Landscape]) -> None:
    """Landscape keys unique and every landscape on the same point set."""
    keys = [ls.key for ls in landscapes]
    if len(set(keys)) != len(keys):
        raise DuplicateError("duplicate (scenario, year) in study")
    if landscapes:
        ref = landscapes[0].point_ids
        for ls in landscapes[1:]:
            if not np.array_equal(ls.point_ids, ref):
                raise ValidationError(f"landscape {ls.key} is not on the study grid")


def compute_avg_slope(elevations, cell_size: float) -> np.ndarray:
    """Mean absolute gradient to the (up to 8) neighbouring raster cells."""
    z = np.asarray(elevations, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2 or z.shape[1] < 2:
        raise ValidationError(f"raster must be at least 2x2, got shape {z.shape}")
    if not cell_size > 0:
        raise ValidationError("cell_size must be > 0")
    R, C = z.shape
    total = np.zeros_like(z)
    count = np.zeros_like(z)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            dist = cell_size * (math.sqrt(2.0) if dr and dc else 1.0)
            # target cells [r0:r1, c0:c1] see neighbour at (r+dr, c+dc)
            r0, r1 = max(0, -dr), R - max(0, dr)
            c0, c1 = max(0, -dc), C - max(0, dc)
            centre = z[r0:r1, c0:c1]
            nb = z[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
            total[r0:r1, c0:c1] += np.abs(nb - centre) / dist
            count[r0:r1, c0:c1] += 1.0
    return total / count


# --- serialization -------------------------------------------------------

def format_storm_catalog(catalog: Catalog) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STORM_COLUMNS)
    for s in catalog.storms:
        w.writerow([s.storm_id, repr(s.heading), repr(s.v_f), repr(s.r_max), repr(s.landfall_lon), repr(s.c_p)])
    return buf.getvalue()


def format_core_ids(catalog: Catalog) -> str:
    return "".join(f"{sid}\n" for sid in catalog.core_ids)


def format_landscape(ls: Landscape) -> tuple[str, str]:
    """Return (points csv text, metadata json text)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(POINT_COLUMNS)
    for p in ls.points:
        w.writerow([p.point_id] + [repr(float(getattr(p, f))) for f in
                                   ("lon", "lat", "elevation", "avg_slope", "manning_n", "z0", "canopy")])
    meta = json.dumps({"scenario": ls.scenario, "year": ls.year, "msl_m": ls.msl}, sort_keys=True)
    return buf.getvalue(), meta + "\n"


def landscape_stem(key: tuple[str, int]) -> str:
    return f"{key[0]}_{key[1]}"


def write_landscape(ls: Landscape, directory: Path) -> None:
    points, meta = format_landscape(ls)
    stem = landscape_stem(ls.key)
    (directory / f"landscape_{stem}.csv").write_text(points)
    (directory / f"landscape_{stem}.json").write_text(meta)


def read_landscape(csv_path: Path) -> Landscape:
    meta_path = csv_path.with_suffix(".json")
    meta = json.loads(meta_path.read_text())
    return parse_landscape(csv_path.read_text(), meta)


def read_landscapes(directory: Path) -> list[Landscape]:
    paths = sorted(Path(directory).glob("landscape_*.csv"))
    landscapes = sorted((read_landscape(p) for p in paths), key=lambda ls: ls.key)
    check_study(landscapes)
    return landscapes


def bundled_catalog() -> Catalog:
    """The 645-storm catalog shipped with the package, with its 90-storm core subset."""
    data = resources.files("wavesurrogate") / "data"
    core = parse_core_ids((data / "core_storms.txt").read_text())
    return parse_storm_catalog((data / "storm_catalog.tsv").read_text(), core)
