"""Command-line entry point: data generation, training, the daily pipeline, serving.

Batch subcommands run locally against a workspace directory; `serve`
exposes the latest published snapshot over HTTP for the dashboard.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from datetime import date
from pathlib import Path

from . import __version__
from .config import load_kv


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noshow", description=__doc__)
    parser.add_argument("--version", action="version", version=f"noshow {__version__}")
    parser.add_argument("--config", type=Path, help="key-value config file for the subcommand")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--workspace", type=Path, default=Path("workspace"), help="working directory")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate a synthetic clinic history")
    gen.add_argument("--out", type=Path, help="records CSV path (default workspace/data/raw.csv)")

    ing = sub.add_parser("ingest", help="parse a raw export into the canonical CSV")
    ing.add_argument("--raw", type=Path, required=True)
    ing.add_argument("--mapping", type=Path, help="vendor column mapping; omit for canonical input")
    ing.add_argument("--out", type=Path, required=True)
    ing.add_argument("--errors-out", type=Path)

    tr = sub.add_parser("train", help="train and freeze the no-show forest")
    tr.add_argument("--data", type=Path, required=True, help="canonical records CSV")
    tr.add_argument("--model-out", type=Path, required=True)
    tr.add_argument("--n-trees", type=int, default=200)
    tr.add_argument("--min-leaf-size", type=int, default=10)
    tr.add_argument("--max-depth", type=int)
    tr.add_argument("--pseudo-count", type=float, default=5.0)
    tr.add_argument("--validation-fraction", type=float, default=0.2)
    tr.add_argument("--tune", action="store_true", help="pick n_trees/min_leaf_size on the documented grid")
    tr.add_argument("--report-out", type=Path, help="write the evaluation report JSON here")

    pred = sub.add_parser("predict", help="score appointments with a frozen model")
    pred.add_argument("--model", type=Path, required=True)
    pred.add_argument("--data", type=Path, required=True, help="canonical records CSV")
    pred.add_argument("--out", type=Path, required=True, help="scored CSV path")

    heat = sub.add_parser("heatmap", help="build heatmap JSON from scored appointments")
    heat.add_argument("--scored", type=Path, required=True)
    heat.add_argument("--week", type=str, help="any date in the target week (default: latest scored week)")
    heat.add_argument("--provider", type=str)
    heat.add_argument("--open-hour", type=int, default=8)
    heat.add_argument("--close-hour", type=int, default=16)
    heat.add_argument("--out", type=Path, required=True)

    sim = sub.add_parser("simulate", help="compare overbooking policies by Monte Carlo")
    sim.add_argument("--policies", type=str, default="no-overbook,baseline-rate-floor,oracle-floor")
    sim.add_argument("--replications", type=int, default=100)
    sim.add_argument("--model", type=Path, help="needed for model-expectation-floor")
    sim.add_argument("--out", type=Path, help="report JSON path")

    runp = sub.add_parser("run", help="run the incremental pipeline end to end")

    srv = sub.add_parser("serve", help="serve the latest published snapshot over HTTP")
    srv.add_argument("--port", type=int, default=8100)
    srv.add_argument("--host", type=str, default="127.0.0.1")
    srv.add_argument("--snapshot-dir", type=Path, help="default workspace/snapshots")
    srv.add_argument("--static-dir", type=Path, help="also serve the dashboard bundle from this directory")

    return parser


def _load_generator_config(args) -> "object":
    from .datagen import config_from_kv, default_config

    if args.config:
        config = config_from_kv(load_kv(args.config))
    else:
        config = default_config()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    return config


def cmd_generate(args) -> int:
    from .datagen import generate_history, write_ground_truth_csv
    from .schema import write_records_csv

    config = _load_generator_config(args)
    out = args.out or (args.workspace / "data" / "raw.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    result = generate_history(config)
    write_records_csv(result.records, out)
    truth_path = out.with_name(out.stem + "-truth.csv")
    write_ground_truth_csv(result.truth, truth_path)
    print(f"wrote {len(result.records)} records to {out}")
    print(f"wrote ground truth to {truth_path}")
    return 0


def cmd_ingest(args) -> int:
    from .ingest import identity_mapping, load_column_mapping, parse_export
    from .schema import write_records_csv

    mapping = load_column_mapping(args.mapping) if args.mapping else identity_mapping()
    report = parse_export(args.raw, mapping)
    records = sorted(report.records, key=lambda r: (r.scheduled_at, r.appointment_id))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_records_csv(records, args.out)
    errors_out = args.errors_out or args.out.with_name(args.out.stem + "-errors.json")
    errors_out.write_text(
        json.dumps({"rows": report.rows_seen, "errors": [e.as_dict() for e in report.errors]}, indent=2)
    )
    print(f"{len(report.records)} records, {len(report.errors)} problem rows (see {errors_out})")
    return 0


def cmd_train(args) -> int:
    from .forest import (
        DEFAULT_TUNING_GRID,
        ForestHyperparams,
        predict_proba,
        save_model,
        temporal_split,
        train_forest,
    )
    from .ingest import engineer_features, global_missed_rate
    from .metrics import evaluate, roc_auc
    from .schema import read_records_csv

    records = read_records_csv(args.data)
    global_rate = global_missed_rate(records)
    features = engineer_features(records, global_rate, args.pseudo_count)
    labeled = [fv for fv in features if fv.label is not None]
    train, validation = temporal_split(labeled, args.validation_fraction)

    seed = args.seed if args.seed is not None else 0
    base = ForestHyperparams(
        n_trees=args.n_trees,
        min_leaf_size=args.min_leaf_size,
        max_depth=args.max_depth,
        seed=seed,
    )
    candidates = [base]
    if args.tune:
        candidates = [replace(base, **g) for g in DEFAULT_TUNING_GRID]

    best = None
    for hp in candidates:
        model = train_forest(train, hp)
        auc = roc_auc(predict_proba(model, validation), [fv.label for fv in validation])
        print(f"candidate {hp.n_trees} trees / min leaf {hp.min_leaf_size}: validation AUC {auc:.4f}")
        if best is None or auc > best[1]:
            best = (model, auc, hp)

    model, validation_auc, hp = best
    report = evaluate(predict_proba(model, validation), [fv.label for fv in validation])
    model.metadata.update(
        {
            "global_rate": global_rate,
            "pseudo_count": args.pseudo_count,
            "train_auc": roc_auc(predict_proba(model, train), [fv.label for fv in train]),
            "validation_auc": validation_auc,
        }
    )
    args.model_out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, args.model_out)
    print(f"froze model to {args.model_out}")
    print(report.to_text())
    if args.report_out:
        args.report_out.write_text(report.to_json())
    return 0


def cmd_predict(args) -> int:
    from .aggregate import ScoredAppointment, write_scored_csv
    from .forest import load_model, predict_proba
    from .ingest import engineer_features
    from .schema import read_records_csv

    model = load_model(args.model)
    records = read_records_csv(args.data)
    records.sort(key=lambda r: (r.scheduled_at, r.appointment_id))
    global_rate = float(model.metadata.get("global_rate", 0.25))
    pseudo_count = float(model.metadata.get("pseudo_count", 5.0))
    features = engineer_features(records, global_rate, pseudo_count)
    probs = predict_proba(model, features)
    scored = [
        ScoredAppointment.from_record(r, float(p)) for r, p in zip(records, probs)
    ]
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_scored_csv(scored, args.out)
    print(f"scored {len(scored)} appointments -> {args.out}")
    return 0


def cmd_heatmap(args) -> int:
    from .aggregate import build_heatmap, read_scored_csv, week_range

    scored = read_scored_csv(args.scored)
    if args.week:
        week = week_range(date.fromisoformat(args.week))[0]
    else:
        week = week_range(max(a.scheduled_at for a in scored).date())[0]
    grid = build_heatmap(
        scored,
        week,
        open_hour=args.open_hour,
        close_hour=args.close_hour,
        provider=args.provider,
    )
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(grid.as_dict(), indent=2))
    print(f"heatmap for week of {week} -> {args.out}")
    return 0


def cmd_simulate(args) -> int:
    from .forest import load_model
    from .simulate import Policy, compare_policies, reports_to_json, reports_to_text

    config = _load_generator_config(args)
    policies = [Policy.parse(p) for p in args.policies.split(",") if p.strip()]
    model = load_model(args.model) if args.model else None
    seed = args.seed if args.seed is not None else 0
    reports = compare_policies(config, policies, model=model, n_replications=args.replications, seed=seed)
    print(reports_to_text(reports))
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(reports_to_json(reports))
    return 0


def cmd_run(args) -> int:
    from .pipeline import STANDARD_COMMANDS, run, standard_tasks

    if not args.config:
        print("run requires --config naming the pipeline config file", file=sys.stderr)
        return 2
    cfg = load_kv(args.config)
    tasks = standard_tasks(cfg, args.workspace)
    result = run(tasks, args.workspace, STANDARD_COMMANDS)
    for task in tasks:
        print(f"{task.name:<12} {result.statuses.get(task.name, '-')}")
    if result.failures:
        for name, diag in result.failures.items():
            print(f"task {name} failed: {diag}", file=sys.stderr)
        return 1
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    snapshot_dir = args.snapshot_dir or (args.workspace / "snapshots")
    app = create_app(snapshot_dir, static_dir=args.static_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


HANDLERS = {
    "generate": cmd_generate,
    "ingest": cmd_ingest,
    "train": cmd_train,
    "predict": cmd_predict,
    "heatmap": cmd_heatmap,
    "simulate": cmd_simulate,
    "run": cmd_run,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return HANDLERS[args.command](args)
    except Exception as exc:  # surface the failing stage, not a stack trace
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
