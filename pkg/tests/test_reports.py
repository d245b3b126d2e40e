import numpy as np
import pytest

from wavesurrogate import hazard, reports
from wavesurrogate.errors import AlignmentError
from wavesurrogate.trainer import PredictionSet, make_folds


def reference_prediction(table, fold, variant="M1", seed=1, shift=0.0):
    sub = table.subset(fold.test_mask(table))
    return PredictionSet(variant, fold.held_out, seed, sub.storm_id.copy(), sub.point_id.copy(), sub.hs + shift,
                         sub.surge.copy() if variant == "M4" else None)


def test_perfect_predictions_score_zero(tiny_study):
    landscapes, catalog, table = tiny_study
    fold = make_folds(landscapes, catalog)[2]
    rates = hazard.synthetic_rates(catalog)
    m = reports.cell_metrics(reference_prediction(table, fold), table, rates, hazard.aep_grid())
    assert m.rmse_hs == 0.0 and m.reject_pct == 0.0
    assert (m.aep_rmse == 0).all() and (m.aep_nrmse == 0).all()


def test_constant_offset_shows_in_rmse(tiny_study):
    landscapes, catalog, table = tiny_study
    fold = make_folds(landscapes, catalog)[2]
    m = reports.cell_metrics(reference_prediction(table, fold, shift=0.1), table, hazard.synthetic_rates(catalog),
                             hazard.aep_grid())
    assert m.rmse_hs == pytest.approx(0.1)
    assert m.corr_hs == pytest.approx(1.0)


def test_incomplete_predictions_rejected(tiny_study):
    landscapes, catalog, table = tiny_study
    fold = make_folds(landscapes, catalog)[0]
    p = reference_prediction(table, fold)
    short = PredictionSet(p.variant, p.fold, p.seed, p.storm_id[1:], p.point_id[1:], p.pred_hs[1:])
    with pytest.raises(AlignmentError):
        reports.align(short, table)


def test_bundle_averages_seeds_and_lists_surge_for_m4(tiny_study, tmp_path):
    landscapes, catalog, table = tiny_study
    folds = make_folds(landscapes, catalog)
    preds = [reference_prediction(table, f, v, s, shift=0.05 * s) for f in folds for v in ("M1", "M4") for s in (1, 3)]
    bundle = reports.build_reports(preds, table, hazard.synthetic_rates(catalog))
    rmse = bundle.by_fold("table1", "M1", "rmse_m", "hs")
    assert len(rmse) == 10 and all(v == pytest.approx(0.1) for v in rmse.values())
    assert bundle.by_fold("table1", "M4", "rmse_m", "surge")[("Lower", 2030)] == 0.0
    assert len(bundle.fig2) == 10 * len(landscapes[0].points)
    names = [p.name for p in reports.write_reports(bundle, tmp_path)]
    assert set(names) == set(reports.REPORT_FILES)
