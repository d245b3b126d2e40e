"""Command-line pipeline: gen -> simulate -> train -> hazard -> report (and predict).

Every command reads and writes one study directory (``--out``, default from
``$WAVESURROGATE_OUT`` or ``./study``) and prints a single summary line::

    status=ok cmd=train key=... rows=...

Exit codes: 0 ok, 1 usage, 2 validation, 3 numeric/divergence, 4 I/O.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import hazard, reports, synthetic
from .catalog import (Catalog, format_core_ids, format_storm_catalog, landscape_stem,
                      parse_core_ids, parse_storm_catalog, read_landscapes, write_landscape)
from .errors import ArtifactIOError, ConfigurationError, SchemaMismatchError, SurrogateError, ValidationError
from .features import assemble, schema_for
from .oracle import OracleParams, SimulationTable, format_simulations, generate_simulations, parse_simulations, sim_filename
from .trainer import (Model, PredictionSet, TrainConfig, make_folds, prediction_filename, run_study)

log = logging.getLogger("wavesurrogate")

ENV_OUT = "WAVESURROGATE_OUT"

DEFAULT_CONFIG = {
    "study": {"points": 576, "storms": 645, "grid_seed": 2020},
    "oracle": {},
    "train": {"profile": "small", "batch_size": 256, "max_epochs": 20, "patience": 10, "steps_per_epoch": 40,
              "val_fraction": 0.1, "val_max_rows": 4096, "lr_initial": 0.01, "lr_factor": 0.75,
              "lr_patience": 2, "lr_floor": 1e-05},
    "variants": ["M1", "M2", "M3", "M4"],
    "seeds": [7, 8, 9],
    "aep": {"n": 23, "max": 0.5, "min": 0.0005},
    "rates": {"source": "synthetic", "total": 0.35, "file": None},
    "alpha": 0.05,
    "nrmse_normalizer": "mean",
}

ARTIFACT_GLOBS = ("storms.csv", "core_storms.txt", "config.json", "landscape_*", "sims_*.csv", "predictions_*.csv",
                  "predict_*.csv", "hazard_*.csv", "report_*.csv", "study_summary.json", "study_timing.json",
                  "models/model_*.json")


class UsageError(SurrogateError):
    exit_code = 1


# --- configuration -----------------------------------------------------------

def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(config: dict, overrides) -> dict:
    config = copy.deepcopy(config)
    for item in overrides or ():
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        node = config
        parts = key.strip().split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigurationError(f"unknown config section {p!r} in {key!r}")
            node = node[p]
        if parts[-1] not in node and node is not config.get("oracle"):
            raise ConfigurationError(f"unknown config key {key!r}")
        node[parts[-1]] = _parse_value(raw)
    return config


def validate_config(config: dict) -> dict:
    if not config.get("seeds"):
        raise ConfigurationError("seeds must be nonempty")
    if not 0.0 < float(config["alpha"]) < 1.0:
        raise ConfigurationError("alpha must lie in (0, 1)")
    unknown = set(config["variants"]) - {"M1", "M2", "M3", "M4"}
    if unknown or not config["variants"]:
        raise ConfigurationError(f"variants must be a nonempty subset of M1..M4, got {config['variants']}")
    TrainConfig(**config["train"])
    OracleParams(**config["oracle"])
    if config["rates"]["source"] not in ("synthetic", "file"):
        raise ConfigurationError("rates.source must be 'synthetic' or 'file'")
    if config["rates"]["source"] == "file" and not Path(str(config["rates"]["file"])).exists():
        raise ConfigurationError(f"rates file {config['rates']['file']!r} does not exist")
    aep_grid(config)
    return config


def aep_grid(config: dict) -> np.ndarray:
    a = config["aep"]
    return hazard.aep_grid(int(a["n"]), float(a["max"]), float(a["min"]))


def load_config(args, out: Path) -> dict:
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ArtifactIOError(f"config file {path} not found")
        base = json.loads(path.read_text())
    elif (out / "config.json").exists():
        base = json.loads((out / "config.json").read_text())
    else:
        base = DEFAULT_CONFIG
    config = copy.deepcopy(DEFAULT_CONFIG)
    for k, v in base.items():
        if isinstance(v, dict) and isinstance(config.get(k), dict):
            config[k].update(v)
        else:
            config[k] = v
    config = apply_overrides(config, args.set)
    if args.seed:
        config["seeds"] = [int(s) for s in str(args.seed).split(",")]
    return validate_config(config)


# --- study inputs -------------------------------------------------------------

def _require(path: Path, upstream: str) -> Path:
    if not path.exists():
        raise ValidationError(f"missing upstream artifact {path} (run `{upstream}` first)")
    return path


def load_inputs(out: Path) -> tuple[Catalog, list]:
    _require(out / "storms.csv", "gen")
    _require(out / "core_storms.txt", "gen")
    core = parse_core_ids((out / "core_storms.txt").read_text())
    catalog = parse_storm_catalog((out / "storms.csv").read_text(), core)
    landscapes = read_landscapes(out)
    if not landscapes:
        raise ValidationError(f"no landscape files in {out} (run `gen` first)")
    return catalog, landscapes


def load_table(out: Path, landscapes) -> SimulationTable:
    parts = []
    for ls in landscapes:
        path = _require(out / sim_filename(ls.key), "simulate")
        parts.append(parse_simulations(path.read_text(), ls.key))
    return SimulationTable.concat(parts)


def load_rates(config: dict, catalog: Catalog) -> dict[int, float]:
    rc = config["rates"]
    if rc["source"] == "file":
        rates = {}
        for line in Path(rc["file"]).read_text().splitlines()[1:]:
            if line.strip():
                sid, rate = line.split(",")[:2]
                rates[int(sid)] = float(rate)
        if any(r <= 0 for r in rates.values()):
            raise ValidationError("storm rates must be positive")
        return rates
    return hazard.synthetic_rates(catalog, float(rc["total"]))


def load_predictions(out: Path, config: dict, landscapes, catalog) -> list[PredictionSet]:
    preds = []
    for fold in make_folds(landscapes, catalog):
        for variant in config["variants"]:
            for seed in config["seeds"]:
                path = _require(out / prediction_filename(variant, fold.held_out, seed), "train")
                preds.append(PredictionSet.from_csv(path.read_text(), variant, fold.held_out, seed))
    return preds


# --- commands -------------------------------------------------------------------

def cmd_gen(args, out: Path) -> dict:
    config = load_config(args, out)
    if args.points is not None:
        config["study"]["points"] = args.points
    if args.storms is not None:
        config["study"]["storms"] = args.storms
    if args.print_config:
        print(json.dumps(config, indent=2, sort_keys=True))
        return {"status": "ok", "key": "config", "rows": 0}
    if out.exists() and any(out.iterdir()) and not args.force:
        raise ArtifactIOError(f"output directory {out} is not empty (use --force)")
    out.mkdir(parents=True, exist_ok=True)
    for pattern in ARTIFACT_GLOBS:
        for stale in out.glob(pattern):
            stale.unlink()
    st = config["study"]
    rows, cols = synthetic.grid_shape(int(st["points"]))
    design = synthetic.GridDesign(rows=rows, cols=cols, seed=int(st["grid_seed"]))
    landscapes = synthetic.make_landscapes(design)
    catalog = synthetic.reduced_catalog(int(st["storms"]))
    (out / "storms.csv").write_text(format_storm_catalog(catalog))
    (out / "core_storms.txt").write_text(format_core_ids(catalog))
    for ls in landscapes:
        write_landscape(ls, out)
    (out / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    return {"status": "ok", "key": str(out), "rows": len(catalog), "landscapes": len(landscapes),
            "points": rows * cols}


def cmd_simulate(args, out: Path) -> dict:
    config = load_config(args, out)
    catalog, landscapes = load_inputs(out)
    table = generate_simulations(catalog, landscapes, OracleParams(**config["oracle"]))
    for key in table.keys:
        (out / sim_filename(key)).write_text(format_simulations(table, key))
    return {"status": "ok", "key": "simulations", "rows": len(table)}


def cmd_train(args, out: Path) -> dict:
    config = load_config(args, out)
    catalog, landscapes = load_inputs(out)
    table = load_table(out, landscapes)
    result = run_study(landscapes, catalog, table, config["variants"], TrainConfig(**config["train"]),
                       config["seeds"], out, jobs=args.jobs)
    failed = [c for c, e in result["cells"].items() if e["status"] != "ok"]
    summary = {"status": "ok" if not failed else "diverged", "key": "study", "rows": len(result["cells"]),
               "ran": len(result["ran"])}
    if failed:
        summary["failed"] = len(failed)
    return summary


def cmd_predict(args, out: Path) -> dict:
    config = load_config(args, out)
    catalog, landscapes = load_inputs(out)
    model_path = Path(args.model)
    if not model_path.exists():
        raise ArtifactIOError(f"model file {model_path} not found")
    model = Model.from_document(model_path.read_text())
    try:
        scenario, year = args.landscape.rsplit("_", 1)
        key = (scenario, int(year))
    except ValueError:
        raise UsageError("--landscape expects SCENARIO_YEAR, e.g. Higher_2070") from None
    ls = [l for l in landscapes if l.key == key]
    if not ls:
        raise ValidationError(f"landscape {args.landscape} not in study")
    variant = model.schema.variant
    expected = schema_for(variant, model.schema.targets[0] if variant == "M1" else None)
    if model.schema.features != expected.features:
        raise SchemaMismatchError(f"model features {list(model.schema.features)} do not match the "
                                  f"{variant} feature build {list(expected.features)}")
    path = _require(out / sim_filename(key), "simulate")
    table = parse_simulations(path.read_text(), key)
    if variant == "M2":
        if not args.surge_model:
            raise UsageError("M2 models need --surge-model")
        surge_model = Model.from_document(Path(args.surge_model).read_text())
        source = lambda base: surge_model.predict(base.X)[:, 0]
    else:
        source = "simulated" if variant == "M3" else None
    ds = assemble(table, catalog, landscapes, model.schema, source)
    pred = model.predict(ds.X)
    cols = model.schema.targets
    hs = np.maximum(pred[:, cols.index("hs")], 0.0) if "hs" in cols else pred[:, 0]
    surge = pred[:, cols.index("surge")] if variant == "M4" else None
    ps = PredictionSet(variant, key, int(model.seed or 0), ds.storm_id, ds.point_id, hs, surge)
    target = out / f"predict_{model_path.stem}_{landscape_stem(key)}.csv"
    target.write_text(ps.to_csv())
    return {"status": "ok", "key": target.name, "rows": len(ds)}


def cmd_hazard(args, out: Path) -> dict:
    config = load_config(args, out)
    catalog, landscapes = load_inputs(out)
    table = load_table(out, landscapes)
    preds = load_predictions(out, config, landscapes, catalog)
    rates = load_rates(config, catalog)
    grid = aep_grid(config)
    written = 0
    done_ref = set()
    for p in preds:
        m = reports.align(p, table)
        r = np.array([rates[int(s)] for s in m["storms"]])
        if p.fold not in done_ref:
            curves = hazard.curves_matrix(m["ref_hs"].T, r, grid)
            (out / f"hazard_reference_{landscape_stem(p.fold)}.csv").write_text(
                reports.hazard_csv(m["points"], grid, curves))
            done_ref.add(p.fold)
            written += 1
        curves = hazard.curves_matrix(m["pred_hs"].T, r, grid)
        (out / f"hazard_{p.variant}-{p.seed}_{landscape_stem(p.fold)}.csv").write_text(
            reports.hazard_csv(m["points"], grid, curves))
        written += 1
    return {"status": "ok", "key": "hazard", "rows": written}


def cmd_report(args, out: Path) -> dict:
    config = load_config(args, out)
    catalog, landscapes = load_inputs(out)
    table = load_table(out, landscapes)
    preds = load_predictions(out, config, landscapes, catalog)
    bundle = reports.build_reports(preds, table, load_rates(config, catalog), aep_grid(config),
                                   float(config["alpha"]), config["nrmse_normalizer"])
    reports.write_reports(bundle, out)
    return {"status": "ok", "key": "report", "rows": len(bundle.table2)}


COMMANDS = {"gen": cmd_gen, "simulate": cmd_simulate, "train": cmd_train, "predict": cmd_predict,
            "hazard": cmd_hazard, "report": cmd_report}


def _common_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    """Flags accepted both before and after the subcommand name.

    Subcommand copies default to SUPPRESS so they only override what was
    actually given after the subcommand.
    """
    def d(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--out", default=d(None), help=f"study directory (default ${ENV_OUT} or ./study)")
    parser.add_argument("--config", default=d(None), help="JSON config document")
    parser.add_argument("--set", action="append", default=d(None), metavar="KEY=VALUE",
                        help="override a config value, e.g. train.max_epochs=5")
    parser.add_argument("--seed", default=d(None), help="training seed(s), comma separated")
    parser.add_argument("--jobs", type=int, default=d(1), help="parallel worker processes")
    parser.add_argument("--force", action="store_true", default=d(False), help="overwrite a non-empty study directory")
    parser.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _common_flags(common, suppress=True)
    parser = argparse.ArgumentParser(prog="wavesurrogate", description=__doc__.splitlines()[0])
    _common_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    g = sub.add_parser("gen", parents=[common], help="write a synthetic study")
    g.add_argument("--points", type=int, default=None)
    g.add_argument("--storms", type=int, default=None)
    g.add_argument("--print-config", action="store_true")
    sub.add_parser("simulate", parents=[common], help="run the oracle on every landscape")
    sub.add_parser("train", parents=[common], help="cross-validate the model variants")
    p = sub.add_parser("predict", parents=[common], help="apply a saved model to one landscape")
    p.add_argument("--model", required=True)
    p.add_argument("--landscape", required=True, help="SCENARIO_YEAR")
    p.add_argument("--surge-model", default=None)
    sub.add_parser("hazard", parents=[common], help="write hazard curves")
    sub.add_parser("report", parents=[common], help="write report tables")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out or os.environ.get(ENV_OUT, "study"))
    try:
        summary = COMMANDS[args.command](args, out)
    except SurrogateError as exc:
        print(f"status=error cmd={args.command} category={type(exc).__name__} msg={str(exc)!r}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"status=error cmd={args.command} category=IOError msg={str(exc)!r}", file=sys.stderr)
        return ArtifactIOError.exit_code
    if args.command == "gen" and args.print_config:
        return 0
    status = summary.pop("status")
    fields_ = " ".join(f"{k}={v}" for k, v in summary.items())
    print(f"status={status} cmd={args.command} {fields_}")
    return 0 if status == "ok" else 3


if __name__ == "__main__":
    sys.exit(main())
