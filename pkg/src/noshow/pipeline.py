"""Dependency-aware task runner: ingest -> features -> predict -> aggregate -> publish.

Staleness is decided by content hashes of inputs plus a parameter/code
hash, never by timestamps, so a rerun on an unchanged workspace skips
everything and a one-file change re-executes exactly the reachable
descendants. Outputs are written to temp paths and renamed into place on
success; the ledger is persisted after every task, which keeps an
interrupted run safe to resume.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Callable, Mapping, Sequence

from . import __version__ as CODE_VERSION

LEDGER_NAME = "ledger.json"
LOCK_NAME = ".pipeline.lock"


class PipelineError(Exception):
    pass


class CyclicDependency(PipelineError):
    pass


class MissingSource(PipelineError):
    pass


class TaskFailed(PipelineError):
    def __init__(self, task_name: str, diagnostics: str):
        self.task_name = task_name
        self.diagnostics = diagnostics
        super().__init__(f"task {task_name!r} failed: {diagnostics}")


class WorkspaceLocked(PipelineError):
    pass


@dataclass(frozen=True)
class Task:
    name: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    command: str
    params: Mapping[str, object] = field(default_factory=dict)

    def param_hash(self) -> str:
        doc = {
            "command": self.command,
            "params": dict(self.params),
            "outputs": list(self.outputs),
            "code_version": CODE_VERSION,
        }
        return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()


@dataclass
class TaskContext:
    task: Task
    workspace: Path
    _temp_outputs: dict[str, Path]

    def out(self, path: str) -> Path:
        """Temp path to write the given declared output to; renamed on success."""
        return self._temp_outputs[str(path)]


Command = Callable[[TaskContext], None]


def file_sha256(path: Path | str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def build_dag(tasks: Sequence[Task]) -> list[Task]:
    """Topologically ordered tasks; rejects cycles, duplicate outputs, absent sources."""
    by_output: dict[str, Task] = {}
    names = set()
    for task in tasks:
        if task.name in names:
            raise PipelineError(f"duplicate task name {task.name!r}")
        names.add(task.name)
        for out in task.outputs:
            if out in by_output:
                raise PipelineError(f"output {out} produced by two tasks")
            by_output[out] = task

    for task in tasks:
        for inp in task.inputs:
            if inp not in by_output and not Path(inp).exists():
                raise MissingSource(f"task {task.name!r} needs {inp}, which no task produces and is not on disk")

    deps: dict[str, set[str]] = {
        t.name: {by_output[i].name for i in t.inputs if i in by_output} for t in tasks
    }
    dependents: dict[str, list[str]] = {t.name: [] for t in tasks}
    for name, needed in deps.items():
        for upstream in needed:
            dependents[upstream].append(name)
    indegree = {name: len(needed) for name, needed in deps.items()}
    by_name = {t.name: t for t in tasks}
    ready = sorted(name for name, n in indegree.items() if n == 0)
    ordered: list[Task] = []
    while ready:
        name = ready.pop(0)
        ordered.append(by_name[name])
        for follower in sorted(dependents[name]):
            indegree[follower] -= 1
            if indegree[follower] == 0:
                ready.append(follower)
    if len(ordered) != len(tasks):
        stuck = sorted(name for name, n in indegree.items() if n > 0)
        raise CyclicDependency(f"cyclic dependency among tasks: {', '.join(stuck)}")
    return ordered


@dataclass
class LedgerEntry:
    status: str
    input_hashes: dict[str, str]
    param_hash: str
    output_hashes: dict[str, str]
    wall_time: float

    def as_dict(self) -> dict[str, object]:
        return {
            "status": self.status,
            "input_hashes": self.input_hashes,
            "param_hash": self.param_hash,
            "output_hashes": self.output_hashes,
            "wall_time": self.wall_time,
        }


class RunLedger:
    """Persisted record of the last successful execution of each task."""

    def __init__(self, path: Path):
        self.path = path
        self.entries: dict[str, LedgerEntry] = {}
        if path.exists():
            doc = json.loads(path.read_text())
            for name, raw in doc.get("tasks", {}).items():
                self.entries[name] = LedgerEntry(
                    status=raw["status"],
                    input_hashes=raw["input_hashes"],
                    param_hash=raw["param_hash"],
                    output_hashes=raw["output_hashes"],
                    wall_time=raw["wall_time"],
                )

    def save(self) -> None:
        doc = {"code_version": CODE_VERSION, "tasks": {n: e.as_dict() for n, e in self.entries.items()}}
        tmp = self.path.with_name(self.path.name + ".tmp")
        tmp.write_text(json.dumps(doc, indent=2, sort_keys=True))
        os.replace(tmp, self.path)


class workspace_lock:
    """Single-writer lock with stale-lock takeover (dead pid)."""

    def __init__(self, workspace: Path):
        self.path = workspace / LOCK_NAME

    def __enter__(self):
        if self.path.exists():
            try:
                pid = int(json.loads(self.path.read_text())["pid"])
            except (ValueError, KeyError, json.JSONDecodeError):
                pid = -1
            if pid > 0 and _pid_alive(pid):
                raise WorkspaceLocked(f"workspace locked by running pid {pid}")
        self.path.write_text(json.dumps({"pid": os.getpid(), "started": time.time()}))
        return self

    def __exit__(self, *exc_info):
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass
        return False


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


@dataclass
class RunResult:
    statuses: dict[str, str]  # Executed | Skipped | Failed | Blocked
    ledger: RunLedger
    failures: dict[str, str]

    @property
    def ok(self) -> bool:
        return not self.failures and "Blocked" not in self.statuses.values()


def run(
    tasks: Sequence[Task],
    workspace: Path | str,
    commands: Mapping[str, Command],
    ledger_path: Path | str | None = None,
) -> RunResult:
    """Execute the DAG incrementally.

    A task is skipped iff its input hashes and parameter hash match its
    previous successful ledger entry and its recorded outputs are intact.
    A failure blocks descendants but independent branches still run.
    """
    workspace = Path(workspace)
    workspace.mkdir(parents=True, exist_ok=True)
    ordered = build_dag(tasks)
    ledger = RunLedger(Path(ledger_path) if ledger_path else workspace / LEDGER_NAME)

    statuses: dict[str, str] = {}
    failures: dict[str, str] = {}
    producer = {out: t.name for t in tasks for out in t.outputs}

    with workspace_lock(workspace):
        for task in ordered:
            upstream = {producer[i] for i in task.inputs if i in producer}
            if any(statuses.get(u) in ("Failed", "Blocked") for u in upstream):
                statuses[task.name] = "Blocked"
                continue

            input_hashes = {str(i): file_sha256(i) for i in task.inputs}
            param_hash = task.param_hash()
            previous = ledger.entries.get(task.name)
            if previous is not None and _cache_hit(previous, input_hashes, param_hash, task):
                statuses[task.name] = "Skipped"
                continue

            started = time.monotonic()
            temp_outputs = {
                str(out): Path(out).with_name(Path(out).name + f".tmp-{os.getpid()}")
                for out in task.outputs
            }
            ctx = TaskContext(task=task, workspace=workspace, _temp_outputs=temp_outputs)
            try:
                command = commands[task.command]
            except KeyError:
                raise PipelineError(f"task {task.name!r} names unknown command {task.command!r}")
            try:
                for out in task.outputs:
                    Path(out).parent.mkdir(parents=True, exist_ok=True)
                command(ctx)
                missing = [o for o, tmp in temp_outputs.items() if not tmp.exists()]
                if missing:
                    raise PipelineError(f"command did not produce declared outputs: {missing}")
                for out, tmp in temp_outputs.items():
                    os.replace(tmp, out)
            except Exception as exc:
                for tmp in temp_outputs.values():
                    if tmp.exists():
                        tmp.unlink()
                statuses[task.name] = "Failed"
                failures[task.name] = f"{type(exc).__name__}: {exc}"
                continue

            ledger.entries[task.name] = LedgerEntry(
                status="Executed",
                input_hashes=input_hashes,
                param_hash=param_hash,
                output_hashes={str(o): file_sha256(o) for o in task.outputs},
                wall_time=time.monotonic() - started,
            )
            ledger.save()
            statuses[task.name] = "Executed"

    return RunResult(statuses=statuses, ledger=ledger, failures=failures)


def _cache_hit(
    previous: LedgerEntry, input_hashes: dict[str, str], param_hash: str, task: Task
) -> bool:
    if previous.param_hash != param_hash or previous.input_hashes != input_hashes:
        return False
    for out in task.outputs:
        if not Path(out).exists():
            return False
        if file_sha256(out) != previous.output_hashes.get(str(out)):
            return False
    return True


# --- the standard no-show pipeline -------------------------------------------

def standard_tasks(cfg: Mapping[str, str], workspace: Path | str) -> list[Task]:
    """The five-stage daily pipeline over a frozen model."""
    workspace = Path(workspace)
    build = workspace / "build"
    raw = cfg["raw_csv"]
    model = cfg["model"]
    mapping = cfg.get("mapping", "")
    canonical = str(build / "canonical.csv")
    errors = str(build / "ingest_errors.json")
    features = str(build / "features.csv")
    scored = str(build / "scored.csv")
    heat_combined = str(build / "heatmap-combined.json")
    heat_providers = str(build / "heatmap-providers.json")
    pointer = str(workspace / "snapshots" / "current.json")

    agg_params: dict[str, object] = {
        "week": cfg.get("week", ""),
        "open_hour": int(cfg.get("open_hour", 8)),
        "close_hour": int(cfg.get("close_hour", 16)),
    }
    ingest_inputs = [raw] + ([mapping] if mapping else [])
    return [
        Task("ingest", tuple(ingest_inputs), (canonical, errors), "ingest", {"mapping": bool(mapping)}),
        Task("features", (canonical, model), (features,), "features", {}),
        Task("predict", (features, model, canonical), (scored,), "predict", {}),
        Task("aggregate", (scored,), (heat_combined, heat_providers), "aggregate", agg_params),
        Task("publish", (scored, model), (pointer,), "publish", dict(agg_params)),
    ]


def _cmd_ingest(ctx: TaskContext) -> None:
    from .ingest import identity_mapping, load_column_mapping, parse_export
    from .schema import write_records_csv

    inputs = list(ctx.task.inputs)
    mapping = load_column_mapping(inputs[1]) if len(inputs) > 1 else identity_mapping()
    report = parse_export(inputs[0], mapping)
    records = sorted(report.records, key=lambda r: (r.scheduled_at, r.appointment_id))
    write_records_csv(records, ctx.out(ctx.task.outputs[0]))
    ctx.out(ctx.task.outputs[1]).write_text(
        json.dumps({"errors": [e.as_dict() for e in report.errors], "rows": report.rows_seen}, indent=2)
    )


def _cmd_features(ctx: TaskContext) -> None:
    from .forest import load_model
    from .ingest import engineer_features, global_missed_rate, write_features_csv
    from .schema import read_records_csv

    canonical, model_path = ctx.task.inputs
    records = read_records_csv(canonical)
    model = load_model(model_path)
    global_rate = model.metadata.get("global_rate")
    if global_rate is None:
        global_rate = global_missed_rate(records)
    pseudo_count = float(model.metadata.get("pseudo_count", 5.0))
    features = engineer_features(records, float(global_rate), pseudo_count)
    write_features_csv(features, ctx.out(ctx.task.outputs[0]))


def _cmd_predict(ctx: TaskContext) -> None:
    from .aggregate import ScoredAppointment, write_scored_csv
    from .forest import ensure_feature_schema, load_model, predict_proba
    from .ingest import FEATURE_CSV_COLUMNS, read_features_csv
    from .schema import read_records_csv

    features_path, model_path, canonical = ctx.task.inputs
    model = load_model(model_path)
    ensure_feature_schema(model, FEATURE_CSV_COLUMNS)
    features = read_features_csv(features_path)
    records = {r.appointment_id: r for r in read_records_csv(canonical)}
    probs = predict_proba(model, features)
    scored = [
        ScoredAppointment.from_record(records[fv.appointment_id], float(p))
        for fv, p in zip(features, probs)
    ]
    write_scored_csv(scored, ctx.out(ctx.task.outputs[0]))


def _resolve_week(scored, week_param: str) -> date:
    from .aggregate import week_range

    if week_param:
        return week_range(date.fromisoformat(week_param))[0]
    latest = max(a.scheduled_at for a in scored)
    return week_range(latest.date())[0]


def _cmd_aggregate(ctx: TaskContext) -> None:
    from .aggregate import build_heatmap, provider_grids, read_scored_csv

    scored = read_scored_csv(ctx.task.inputs[0])
    params = ctx.task.params
    week = _resolve_week(scored, str(params.get("week", "")))
    open_hour, close_hour = int(params["open_hour"]), int(params["close_hour"])
    combined = build_heatmap(scored, week, open_hour=open_hour, close_hour=close_hour)
    ctx.out(ctx.task.outputs[0]).write_text(json.dumps(combined.as_dict(), indent=2))
    grids = provider_grids(scored, week, open_hour=open_hour, close_hour=close_hour)
    ctx.out(ctx.task.outputs[1]).write_text(
        json.dumps({p: g.as_dict() for p, g in grids.items()}, indent=2)
    )


def _cmd_publish(ctx: TaskContext) -> None:
    from .aggregate import read_scored_csv
    from .forest import load_model
    from .service import publish_snapshot

    scored_path, model_path = ctx.task.inputs
    scored = read_scored_csv(scored_path)
    model = load_model(model_path)
    params = ctx.task.params
    snapshot_id = publish_snapshot(
        scored,
        snapshot_root=ctx.workspace / "snapshots",
        open_hour=int(params["open_hour"]),
        close_hour=int(params["close_hour"]),
        model_metadata={
            "fingerprint": model.fingerprint,
            "n_train": model.metadata.get("n_train"),
            "train_start": model.metadata.get("train_start"),
            "train_end": model.metadata.get("train_end"),
            "train_auc": model.metadata.get("train_auc"),
            "validation_auc": model.metadata.get("validation_auc"),
        },
    )
    ctx.out(ctx.task.outputs[0]).write_text(json.dumps({"snapshot_id": snapshot_id}))


STANDARD_COMMANDS: dict[str, Command] = {
    "ingest": _cmd_ingest,
    "features": _cmd_features,
    "predict": _cmd_predict,
    "aggregate": _cmd_aggregate,
    "publish": _cmd_publish,
}
