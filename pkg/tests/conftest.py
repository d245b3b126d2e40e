import numpy as np
import pytest

from wavesurrogate import synthetic
from wavesurrogate.catalog import GridPoint, Landscape, StormRecord
from wavesurrogate.oracle import generate_simulations


def make_storm(storm_id=1, heading=0.0, v_f=10.0, r_max=20.0, landfall_lon=-90.0, c_p=900.0, is_core=True):
    return StormRecord(storm_id, heading, v_f, r_max, landfall_lon, c_p, is_core)


def make_point(point_id=1, lon=-90.0, lat=29.5, elevation=-1.0, avg_slope=0.01, manning_n=0.03, z0=0.1,
               canopy=0.2):
    return GridPoint(point_id, lon, lat, elevation, avg_slope, manning_n, z0, canopy)


def make_landscape(points, scenario="Baseline", year=2020, msl=0.0):
    return Landscape(scenario, year, msl, tuple(points))


@pytest.fixture(scope="session")
def tiny_study():
    """3x3 grid, 16 storms (2 core), baseline plus 10 future landscapes."""
    design = synthetic.GridDesign(rows=3, cols=3)
    landscapes = synthetic.make_landscapes(design)
    catalog = synthetic.reduced_catalog(16)
    table = generate_simulations(catalog, landscapes)
    return landscapes, catalog, table


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
