"""``fairrepair`` command-line interface.

Every subcommand writes its artifacts (models, path dumps, reports) as files
under ``--out`` (default: ``$FAIRREPAIR_OUT`` or ``./fairrepair-out``).
Settings come from built-in defaults, then the ``--config`` JSON file, then
explicit flags.

Exit status: 0 success, 2 some trials failed, 3 configuration error,
1 any other error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from .baselines import reweigh, roc_postprocess, select_margin
from .clustering import build_path_table, dump_split, get_samples_divided, ClusterParams
from .datasets import load_dataset, load_schema, split
from .errors import ConfigError, FairRepairError, SchemaError, SliceParamError
from .experiment import (
    METHODS, PRESETS, ExperimentConfig, emit_table, load_record, resolve_dataset, run_comparison, train_naive,
)
from .metrics import evaluate
from .nn import TrainConfig, load_model, save_model
from .repair import RepairConfig, fairneuron_repair
from .slicing import SliceParams, dump_paths, profile_averages, slice_dataset
from .tuning import GridSpec, save_tuning_report, tune, write_surface_csv

log = logging.getLogger("fairrepair")

EXIT_OK, EXIT_ERROR, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2, 3

DEFAULTS = {
    "dataset": "compas",
    "data": None,
    "schema": None,
    "seed": 0,
    "trials": 10,
    "theta": 0.03,
    "gamma": 0.8,
    "dropout_rate": 0.5,
    "retrain_epochs": 20,
    "learning_rate": 0.01,
    "interleave": "epoch_alternating",
    "naive_epochs": 30,
    "workers": 1,
    "methods": ["naive", "fairneuron"],
    "format": "text",
    "grid": None,
}


def default_out() -> str:
    return os.environ.get("FAIRREPAIR_OUT", "fairrepair-out")


def _settings(args) -> dict:
    """Merge defaults, the JSON config file and explicit flags (in that order)."""
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(doc) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(doc)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    merged["dataset"] = resolve_dataset(merged["dataset"])
    return merged


def _repair_cfg(st) -> RepairConfig:
    return RepairConfig(
        theta=float(st["theta"]), gamma=float(st["gamma"]), dropout_rate=float(st["dropout_rate"]),
        retrain_epochs=int(st["retrain_epochs"]), interleave=st["interleave"],
        train=TrainConfig(learning_rate=float(st["learning_rate"]), seed=int(st["seed"])),
    )


def _grid(st):
    g = st.get("grid")
    if g is None:
        return None
    if not isinstance(g, dict):
        raise ConfigError("grid must be a JSON object of GridSpec fields")
    try:
        return GridSpec(**g)
    except TypeError as exc:
        raise ConfigError(f"bad grid settings: {exc}") from exc


def _data_split(st):
    preset = PRESETS[st["dataset"]]
    path = st["data"] or str(Path(os.environ.get("FAIRREPAIR_DATA", "data")) / preset.filename)
    schema = load_schema(st["schema"] or preset.schema)
    return split(load_dataset(path, schema), int(st["seed"]))


def _out_dir(args) -> Path:
    out = Path(args.out or default_out())
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")
    print(f"wrote {path}", file=sys.stderr)


def _print_report(label, rep) -> None:
    dpr = "inf" if rep.dpr_is_inf else rep.dpr
    print(f"{label}: acc={rep.acc:.4f} dp={rep.dp} eo={rep.eo} dpr={dpr}")


# -- subcommands -------------------------------------------------------------

def cmd_train(args) -> int:
    st = _settings(args)
    ds = _data_split(st)
    net = train_naive(ds, PRESETS[st["dataset"]], int(st["seed"]), int(st["naive_epochs"]))
    out = _out_dir(args)
    save_model(net, out / "model.json")
    print(f"wrote {out / 'model.json'}", file=sys.stderr)
    rep = evaluate(net, ds.test)
    _print_report("test", rep)
    _write_json(out / "train_report.json", {"dataset": st["dataset"], "seed": st["seed"], "test": rep.to_dict()})
    return EXIT_OK


def _load_model_arg(args):
    if not args.model:
        raise ConfigError("--model is required")
    return load_model(args.model)


def cmd_evaluate(args) -> int:
    st = _settings(args)
    net = _load_model_arg(args)
    ds = _data_split(st)
    rep = evaluate(net, ds.test)
    _print_report("test", rep)
    _write_json(_out_dir(args) / "evaluation.json", rep.to_dict())
    return EXIT_OK


def cmd_slice(args) -> int:
    st = _settings(args)
    net = _load_model_arg(args)
    train_part = _data_split(st).train
    params = SliceParams(float(st["gamma"]))
    paths = slice_dataset(net, train_part, params, profile_averages(net, train_part.X), workers=int(st["workers"]))
    out = _out_dir(args)
    dump_paths(paths, out / "paths.jsonl")
    print(f"wrote {out / 'paths.jsonl'} ({len(paths)} paths)", file=sys.stderr)
    split_ = get_samples_divided(build_path_table(paths), ClusterParams(float(st["theta"])))
    dump_split(split_, out / "split.json")
    print(f"wrote {out / 'split.json'} (biased={len(split_.biased)}, M={split_.max_frequency})", file=sys.stderr)
    return EXIT_OK


def cmd_repair(args) -> int:
    st = _settings(args)
    net = _load_model_arg(args)
    ds = _data_split(st)
    cfg = dataclasses.replace(_repair_cfg(st), slice_workers=int(st["workers"]))
    outcome = fairneuron_repair(net, ds.train, cfg, ds.test)
    out = _out_dir(args)
    save_model(outcome.network, out / "repaired_model.json")
    print(f"wrote {out / 'repaired_model.json'}", file=sys.stderr)
    _print_report("before", outcome.before)
    _print_report("after", outcome.after)
    _write_json(out / "repair_report.json", outcome.to_dict())
    return EXIT_OK


def cmd_tune(args) -> int:
    st = _settings(args)
    net = _load_model_arg(args)
    ds = _data_split(st)
    grid = _grid(st) or GridSpec()
    result = tune(net, ds.train, grid, _repair_cfg(st), seed=int(st["seed"]), workers=int(st["workers"]))
    out = _out_dir(args)
    save_tuning_report(result, out / "tuning.json")
    write_surface_csv(result, out / "tuning_surface.csv")
    print(f"best theta={result.theta:g} gamma={result.gamma:g} score={result.score:.4f}")
    if result.failures:
        print(f"{len(result.failures)} trial(s) failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_baseline(args) -> int:
    st = _settings(args)
    ds = _data_split(st)
    preset = PRESETS[st["dataset"]]
    seed = int(st["seed"])
    if args.method == "reweighing":
        w = reweigh(ds.train)
        net = train_naive(ds, preset, seed, int(st["naive_epochs"]), w.weights)
        rep = evaluate(net, ds.test)
        extra = {"cell_weights": {f"s{s}_y{y}": v for (s, y), v in w.cell_weights.items()}}
    else:
        net = _load_model_arg(args) if args.model else train_naive(ds, preset, seed, int(st["naive_epochs"]))
        fav = ds.train.favorable_label
        roc = select_margin(net.positive_score(ds.validation.X), ds.validation.Y, ds.validation.S,
                            favorable_label=fav)
        y_hat = roc_postprocess(net.positive_score(ds.test.X), ds.test.S, roc)
        rep = evaluate(None, ds.test, y_hat=y_hat)
        extra = {"margin": roc.margin}
    _print_report(args.method, rep)
    _write_json(_out_dir(args) / f"baseline_{args.method}.json", {"method": args.method, "test": rep.to_dict(), **extra})
    return EXIT_OK


def cmd_experiment(args) -> int:
    st = _settings(args)
    methods = args.method or st["methods"]
    if isinstance(methods, str):
        methods = [methods]
    cfg = ExperimentConfig(
        dataset=st["dataset"], data_path=st["data"], schema=st["schema"], method=methods[0],
        trials=int(st["trials"]), master_seed=int(st["seed"]), naive_epochs=int(st["naive_epochs"]),
        repair=_repair_cfg(st), grid=_grid(st), workers=int(st["workers"]),
    )
    records = run_comparison(cfg, methods)
    out = _out_dir(args)
    for m, rec in records.items():
        _write_json(out / f"experiment_{cfg.dataset}_{m}.json", rec.to_dict())
    print(emit_table(list(records.values()), st["format"]), end="")
    failed = sum(len(r.failed) for r in records.values())
    if failed:
        print(f"{failed} trial run(s) failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_report(args) -> int:
    st = _settings(args)
    if not args.records:
        raise ConfigError("report needs at least one record file")
    records = [load_record(p) for p in args.records]
    text = emit_table(records, st["format"])
    if args.out:
        out = _out_dir(args)
        path = out / ("table.csv" if st["format"] == "csv" else "table.txt")
        path.write_text(text, encoding="utf-8")
        print(f"wrote {path}", file=sys.stderr)
    print(text, end="")
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dataset", help=f"one of {sorted(PRESETS)} (aliases: adult, german)")
    common.add_argument("--data", help="path to the raw dataset file (default: $FAIRREPAIR_DATA/<file>)")
    common.add_argument("--schema", help="bundled schema name or path to a schema JSON")
    common.add_argument("--seed", type=int, help="split / training seed (master seed for experiments)")
    common.add_argument("--trials", type=int)
    common.add_argument("--theta", type=float)
    common.add_argument("--gamma", type=float)
    common.add_argument("--dropout-rate", dest="dropout_rate", type=float)
    common.add_argument("--retrain-epochs", dest="retrain_epochs", type=int)
    common.add_argument("--learning-rate", dest="learning_rate", type=float)
    common.add_argument("--interleave", choices=["epoch_alternating", "block_sequential"])
    common.add_argument("--naive-epochs", dest="naive_epochs", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--format", choices=["text", "csv"])
    common.add_argument("--out", help="output directory (default: $FAIRREPAIR_OUT or ./fairrepair-out)")
    common.add_argument("--config", help="JSON file of settings; explicit flags take precedence")
    common.add_argument("--model", help="model JSON written by `train`")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="fairrepair", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train the naive model").set_defaults(func=cmd_train)
    sub.add_parser("evaluate", parents=[common], help="fairness report on the test split").set_defaults(
        func=cmd_evaluate)
    sub.add_parser("slice", parents=[common], help="dump activation paths and the biased split").set_defaults(
        func=cmd_slice)
    sub.add_parser("repair", parents=[common], help="run the full repair pipeline").set_defaults(func=cmd_repair)
    sub.add_parser("tune", parents=[common], help="grid search theta and gamma").set_defaults(func=cmd_tune)
    b = sub.add_parser("baseline", parents=[common], help="reweighing or reject-option baseline")
    b.add_argument("method", choices=["reweighing", "roc"])
    b.set_defaults(func=cmd_baseline)
    e = sub.add_parser("experiment", parents=[common], help="multi-trial comparison of methods")
    e.add_argument("--method", action="append", choices=METHODS, help="repeatable; default naive + fairneuron")
    e.set_defaults(func=cmd_experiment)
    r = sub.add_parser("report", parents=[common], help="render experiment records as a table")
    r.add_argument("records", nargs="*")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SchemaError, SliceParamError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FairRepairError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
