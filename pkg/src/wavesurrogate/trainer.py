"""Model variants and leave-one-landscape-out cross-validation."""
from __future__ import annotations

import io
import json
import logging
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import net
from .catalog import Catalog, Landscape, landscape_stem
from .errors import ConfigurationError, NumericError, ParseError, TrainingDiverged
from .features import Dataset, apply, assemble, fit_scaler, invert_targets, schema_for, transform_inputs
from .oracle import LandscapeKey, SimulationTable

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    profile: str = "small"
    batch_size: int = 256
    max_epochs: int = 100
    patience: int = 10
    steps_per_epoch: int | None = None  # None: one full pass over the training rows
    val_fraction: float = 0.1
    val_max_rows: int | None = None
    lr_initial: float = 0.01
    lr_factor: float = 0.75
    lr_patience: int = 2
    lr_floor: float = 1e-5

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigurationError("batch_size, max_epochs and patience must be positive")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigurationError("val_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class Fold:
    held_out: LandscapeKey
    train_landscapes: tuple[LandscapeKey, ...]
    test_storms: tuple[int, ...]
    train_pairs: int

    @property
    def name(self) -> str:
        return landscape_stem(self.held_out)

    def train_mask(self, table: SimulationTable) -> np.ndarray:
        m = np.zeros(len(table), bool)
        for key in self.train_landscapes:
            m |= table.mask_for(key)
        return m

    def test_mask(self, table: SimulationTable) -> np.ndarray:
        return table.mask_for(self.held_out) & np.isin(table.storm_id, self.test_storms)


def make_folds(landscapes: Sequence[Landscape], catalog: Catalog) -> list[Fold]:
    """One fold per future landscape; the baseline is always trained on."""
    base = [ls for ls in landscapes if ls.is_baseline]
    if len(base) != 1:
        raise ConfigurationError(f"expected exactly one baseline landscape, found {len(base)}")
    future = sorted((ls for ls in landscapes if not ls.is_baseline), key=lambda ls: ls.key)
    core = tuple(catalog.core_ids)
    folds = []
    for held in future:
        train = (base[0].key,) + tuple(ls.key for ls in future if ls.key != held.key)
        pairs = len(catalog) + len(core) * (len(train) - 1)
        folds.append(Fold(held.key, train, core, pairs))
    return folds


# --- deterministic hashing -------------------------------------------------

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64)
    with np.errstate(over="ignore"):
        x = x + np.uint64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def key_code(key: LandscapeKey) -> int:
    return zlib.crc32(f"{key[0]}|{key[1]}".encode())


def row_uniform(storm_id, landscape_codes, point_id, seed: int) -> np.ndarray:
    """A uniform [0, 1) value per row key, fixed by ``seed``."""
    h = _splitmix(np.asarray(storm_id, np.int64).astype(np.uint64) ^ np.uint64(seed & 0xFFFFFFFF) << np.uint64(32))
    h = _splitmix(h ^ np.asarray(landscape_codes, np.int64).astype(np.uint64))
    h = _splitmix(h ^ np.asarray(point_id, np.int64).astype(np.uint64))
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def cell_seed(base_seed: int, variant: str, fold: Fold) -> int:
    return (int(base_seed) ^ zlib.crc32(f"{variant}|{fold.name}".encode())) & 0x7FFFFFFF


def validation_mask(ds: Dataset, fraction: float, seed: int) -> np.ndarray:
    codes = np.array([key_code(k) for k in ds.keys], np.int64)
    lcodes = codes[ds.landscape] if len(ds) else np.zeros(0, np.int64)
    return row_uniform(ds.storm_id, lcodes, ds.point_id, seed) < fraction


# --- training --------------------------------------------------------------

@dataclass
class Model:
    spec: net.NetworkSpec
    weights: net.Weights
    schema: object
    scaler: object
    seed: int
    history: dict = field(default_factory=dict)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Physical-unit predictions for raw (unscaled) feature rows."""
        z = net.predict(self.spec, self.weights, transform_inputs(self.scaler, X))
        return invert_targets(self.scaler, z)

    def document(self) -> str:
        return net.save(self.spec, self.weights, self.schema, self.scaler, rng_seed=self.seed, history=self.history)

    @classmethod
    def from_document(cls, text: str) -> "Model":
        spec, weights, schema, scaler, extras = net.load(text)
        return cls(spec, weights, schema, scaler, extras["rng_seed"], extras["training_history"])


def fit(train: Dataset, config: TrainConfig, seed: int) -> Model:
    """Train one network on raw-unit rows; 10% of rows (by key hash) drive the LR schedule."""
    if len(train) == 0:
        raise ConfigurationError("no training rows")
    val = validation_mask(train, config.val_fraction, seed)
    fit_rows = train.take(np.flatnonzero(~val))
    val_rows = train.take(np.flatnonzero(val))
    scaler = fit_scaler(fit_rows)
    tr = apply(scaler, fit_rows)
    va = apply(scaler, val_rows)
    rng = np.random.default_rng(seed)
    if config.val_max_rows is not None and len(va) > config.val_max_rows:
        va = va.take(np.sort(rng.choice(len(va), config.val_max_rows, replace=False)))
    spec = net.make_spec(config.profile, train.schema.input_dim, train.schema.output_dim)
    weights = net.build(spec, seed)
    sched = net.LrSchedulerState(lr=config.lr_initial, factor=config.lr_factor, patience=config.lr_patience,
                                 floor=config.lr_floor, initial=config.lr_initial)
    n = len(tr)
    steps = config.steps_per_epoch or max(1, -(-n // config.batch_size))
    perm = rng.permutation(n)
    cursor = 0
    best = (np.inf, weights.copy(), 0)
    since = 0
    history = {"train_loss": [], "val_loss": [], "lr": []}
    for epoch in range(1, config.max_epochs + 1):
        losses = []
        try:
            for _ in range(steps):
                if cursor + config.batch_size > n and cursor > 0:
                    perm = rng.permutation(n)
                    cursor = 0
                idx = perm[cursor:cursor + config.batch_size]
                cursor += config.batch_size
                loss, grads, cache = net.loss_and_grads(spec, weights, tr.X[idx], tr.Y[idx], rng, "train")
                if not np.isfinite(loss):
                    raise NumericError("non-finite loss")
                net.update_running_stats(spec, weights, cache)
                net.adam_step(weights, grads, sched.lr)
                losses.append(loss)
            val_loss = net.mse(net.predict(spec, weights, va.X), va.Y) if len(va) else float(np.mean(losses))
        except NumericError as exc:
            raise TrainingDiverged(epoch, sched.lr, str(exc)) from None
        if not np.isfinite(val_loss):
            raise TrainingDiverged(epoch, sched.lr, "non-finite validation loss")
        history["train_loss"].append(float(np.mean(losses)))
        history["val_loss"].append(float(val_loss))
        history["lr"].append(sched.lr)
        if val_loss < best[0]:
            best = (val_loss, weights.copy(), epoch)
            since = 0
        else:
            since += 1
        sched = net.scheduler_step(sched, val_loss)
        if since >= config.patience:
            break
    history["best_epoch"] = best[2]
    return Model(spec, best[1], train.schema, scaler, seed, history)


@dataclass
class PredictionSet:
    variant: str
    fold: LandscapeKey
    seed: int
    storm_id: np.ndarray
    point_id: np.ndarray
    pred_hs: np.ndarray
    pred_surge: np.ndarray | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["storm_id", "point_id", "pred_hs_m"] + (["pred_surge_m"] if self.pred_surge is not None else [])
        buf.write(",".join(cols) + "\n")
        for i in range(len(self.storm_id)):
            row = f"{self.storm_id[i]},{self.point_id[i]},{float(self.pred_hs[i])!r}"
            if self.pred_surge is not None:
                row += f",{float(self.pred_surge[i])!r}"
            buf.write(row + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, variant: str, fold: LandscapeKey, seed: int) -> "PredictionSet":
        lines = text.splitlines()
        if not lines:
            raise ParseError("empty prediction file")
        header = lines[0].split(",")
        if header[:3] != ["storm_id", "point_id", "pred_hs_m"]:
            raise ParseError(f"unexpected prediction header {lines[0]!r}")
        arr = np.array([ln.split(",") for ln in lines[1:] if ln], dtype=np.float64).reshape(-1, len(header))
        surge = arr[:, 3] if len(header) > 3 else None
        return cls(variant, fold, seed, arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2], surge)


def prediction_filename(variant: str, key: LandscapeKey, seed: int) -> str:
    return f"predictions_{variant}_{landscape_stem(key)}_{seed}.csv"


def fit_variant(variant: str, fold: Fold, table: SimulationTable, catalog: Catalog,
                landscapes: Sequence[Landscape], config: TrainConfig, seed: int) -> dict[str, Model]:
    """Train the models of one cell using only the fold's training rows."""
    train_table = table.subset(fold.train_mask(table))
    s = cell_seed(seed, variant, fold)
    if variant == "M2":
        surge_model = fit(assemble(train_table, catalog, landscapes, schema_for("M1", "surge")), config,
                          cell_seed(seed, "M2-surge", fold))
        source = lambda base: surge_model.predict(base.X)[:, 0]
        wave = fit(assemble(train_table, catalog, landscapes, schema_for("M2"), source), config, s)
        return {"wave": wave, "surge": surge_model}
    source = "simulated" if variant == "M3" else None
    return {"wave": fit(assemble(train_table, catalog, landscapes, schema_for(variant), source), config, s)}


def predict_variant(variant: str, models: dict[str, Model], fold: Fold, table: SimulationTable, catalog: Catalog,
                    landscapes: Sequence[Landscape], seed: int) -> PredictionSet:
    test_table = table.subset(fold.test_mask(table))
    if variant == "M2":
        surge_model = models["surge"]
        source = lambda base: surge_model.predict(base.X)[:, 0]
    else:
        source = "simulated" if variant == "M3" else None
    ds = assemble(test_table, catalog, landscapes, schema_for(variant), source)
    pred = models["wave"].predict(ds.X)
    if not np.isfinite(pred).all():
        raise TrainingDiverged(0, 0.0, "non-finite predictions")
    hs_col = models["wave"].schema.targets.index("hs")
    hs = np.maximum(pred[:, hs_col], 0.0)
    surge = pred[:, 0] if variant == "M4" else None
    return PredictionSet(variant, fold.held_out, seed, ds.storm_id.copy(), ds.point_id.copy(), hs, surge)


def train_variant(variant: str, fold: Fold, table: SimulationTable, catalog: Catalog,
                  landscapes: Sequence[Landscape], config: TrainConfig, seed: int):
    """Returns ``(models, PredictionSet)``; models are keyed ``wave`` (and ``surge`` for M2)."""
    models = fit_variant(variant, fold, table, catalog, landscapes, config, seed)
    return models, predict_variant(variant, models, fold, table, catalog, landscapes, seed)


# --- study runner ----------------------------------------------------------

def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def cell_id(variant: str, key: LandscapeKey, seed: int) -> str:
    return f"{variant}_{landscape_stem(key)}_{seed}"


_WORKER: dict = {}


def _init_worker(table, catalog, landscapes, config, out_dir):
    _WORKER.update(table=table, catalog=catalog, landscapes=landscapes, config=config, out_dir=out_dir)


def _run_cell(variant: str, fold: Fold, seed: int) -> dict:
    w = _WORKER
    out_dir: Path = w["out_dir"]
    cid = cell_id(variant, fold.held_out, seed)
    t0 = time.perf_counter()
    entry = {"cell": cid, "variant": variant, "scenario": fold.held_out[0], "year": fold.held_out[1],
             "seed": seed}
    try:
        models, preds = train_variant(variant, fold, w["table"], w["catalog"], w["landscapes"], w["config"], seed)
    except TrainingDiverged as exc:
        entry.update(status="diverged", error=str(exc), epoch=exc.epoch, lr=exc.lr)
        return {"entry": entry, "wall_time_s": time.perf_counter() - t0}
    models_dir = out_dir / "models"
    models_dir.mkdir(exist_ok=True)
    _atomic_write(models_dir / f"model_{cid}.json", models["wave"].document())
    if "surge" in models:
        sid = cell_id("M2surge", fold.held_out, seed)
        _atomic_write(models_dir / f"model_{sid}.json", models["surge"].document())
        entry["surge_model_id"] = sid
    hist = models["wave"].history
    entry.update(status="ok", model_id=cid, epochs=len(hist["val_loss"]), best_epoch=hist["best_epoch"],
                 final_train_loss=hist["train_loss"][-1], final_val_loss=hist["val_loss"][-1],
                 best_val_loss=min(hist["val_loss"]), lr_trace=hist["lr"], rows=int(len(preds.storm_id)))
    _atomic_write(out_dir / prediction_filename(variant, fold.held_out, seed), preds.to_csv())
    return {"entry": entry, "wall_time_s": time.perf_counter() - t0}


def _read_json(path: Path, default):
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        return default


def run_study(landscapes: Sequence[Landscape], catalog: Catalog, table: SimulationTable, variants: Sequence[str],
              config: TrainConfig, seeds: Sequence[int], out_dir, jobs: int = 1) -> dict:
    """Run every (variant, fold, seed) cell, skipping cells already completed in ``out_dir``.

    ``study_summary.json`` holds per-cell status and training traces;
    wall-clock times go to ``study_timing.json`` so the summary stays
    reproducible.
    """
    if not variants or not seeds:
        raise ConfigurationError("variants and seeds must be nonempty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary_path = out_dir / "study_summary.json"
    timing_path = out_dir / "study_timing.json"
    cells = _read_json(summary_path, {"cells": {}})["cells"]
    timing = _read_json(timing_path, {})
    folds = make_folds(landscapes, catalog)
    todo = []
    for fold in folds:
        for variant in variants:
            for seed in seeds:
                cid = cell_id(variant, fold.held_out, seed)
                done = cells.get(cid, {}).get("status")
                if done == "diverged" or (done == "ok" and (out_dir / prediction_filename(variant, fold.held_out, seed)).exists()):
                    continue
                todo.append((variant, fold, seed))

    def record(result):
        entry = result["entry"]
        cells[entry["cell"]] = entry
        timing[entry["cell"]] = round(result["wall_time_s"], 3)
        _atomic_write(summary_path, json.dumps({"cells": dict(sorted(cells.items()))}, indent=1, sort_keys=True) + "\n")
        _atomic_write(timing_path, json.dumps(dict(sorted(timing.items())), indent=1) + "\n")
        log.info("cell %s: %s", entry["cell"], entry["status"])

    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(jobs, initializer=_init_worker,
                                 initargs=(table, catalog, landscapes, config, out_dir)) as pool:
            futures = [pool.submit(_run_cell, *t) for t in todo]
            for fut in futures:
                record(fut.result())
    else:
        _init_worker(table, catalog, landscapes, config, out_dir)
        for t in todo:
            record(_run_cell(*t))
    if not summary_path.exists():
        _atomic_write(summary_path, json.dumps({"cells": dict(sorted(cells.items()))}, indent=1, sort_keys=True) + "\n")
    return {"cells": dict(sorted(cells.items())), "ran": [cell_id(v, f.held_out, s) for v, f, s in todo]}
