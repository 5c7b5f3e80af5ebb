"""Seeded execution of experiments, result files and comparison reports."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from metatune.bc import save_demos
from metatune.config import ExperimentConfig, config_from_dict
from metatune.optimizer import OptimizationResult, optimize, run_comparison

log = logging.getLogger(__name__)

OUT_ENV_VAR = "METATUNE_OUT"
DEFAULT_OUT = "results"
RECORD_FILES = ("records.csv", "summary.json", "dataset.json", "demos.jsonl")
COMPARISON_COLUMNS = ("optimizer", "meta_episode", "mean_best", "ci_low", "ci_high", "mean_reward")


@dataclass
class ExecutionRecord:
    config_hash: str
    optimizer: str
    seed: int
    records: list
    totals: dict
    path: Path | None = None


@dataclass
class ReportResult:
    rows: list[dict]
    included: dict[str, list[Path]]
    excluded: list[tuple[Path, str]] = field(default_factory=list)


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the same directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def resolve_out_root(out=None) -> Path:
    return Path(out if out is not None else os.environ.get(OUT_ENV_VAR, DEFAULT_OUT))


def probe_writable(directory: Path) -> None:
    """Fail early with OSError if results cannot be written under ``directory``."""
    directory.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".probe.")
    os.close(fd)
    os.unlink(tmp)


def run_execution(config: ExperimentConfig, optimizer: str, seed: int,
                  backend=None) -> OptimizationResult:
    if optimizer == "rlopt_bc":
        return optimize(config, seed, backend=backend)
    from metatune.baselines import run_baseline
    return run_baseline("plain_bo" if optimizer == "rlopt" else optimizer, config, seed, backend=backend)


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def records_csv(config: ExperimentConfig, result: OptimizationResult) -> str:
    names = list(config.space.names)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["meta_episode", *names, "y", "best_so_far", "is_new_max",
                "train_steps", "rollout_steps", "wallclock_ms"])
    for r in result.records:
        ms = r.wallclock_ms if config.record_timing else 0.0
        w.writerow([_fmt(v) for v in (r.index, *(float(r.theta[n]) for n in names), r.y,
                                      r.best_so_far, r.is_new_max, r.train_steps,
                                      r.rollout_steps, float(ms))])
    return buf.getvalue()


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def execution_files(config: ExperimentConfig, optimizer: str, seed: int,
                    result: OptimizationResult) -> dict[str, str]:
    recs = result.records
    timing = [r.wallclock_ms if config.record_timing else 0.0 for r in recs]
    best = max(recs, key=lambda r: (r.y, -r.index))
    totals = {"train_steps": sum(r.train_steps for r in recs),
              "rollout_steps": sum(r.rollout_steps for r in recs),
              "wallclock_ms": float(sum(timing))}
    summary = {
        "config_hash": config.config_hash(),
        "optimizer": optimizer,
        "seed": seed,
        "meta_episodes": len(recs),
        "best_theta": best.theta,
        "best_y": best.y,
        "best_meta_episode": best.index,
        "totals": totals,
        "wallclock_ms": timing,
        "diverged": [r.index for r in recs if r.diverged],
        "demo_source_meta_episode": result.psi.source_meta_episode if len(result.psi) else None,
        "demo_refreshes": result.psi_history,
        "acquisition": [r.acquisition_trace for r in recs],
        "config": config.to_dict(),
    }
    dataset = {
        "names": list(config.search_space().names),
        "points": [[float(v) for v in u] for u in result.dataset.points],
        "theta": [dict(r.theta) for r in recs],
        "y": [float(v) for v in result.dataset.outputs],
    }
    return {
        "records.csv": records_csv(config, result),
        "summary.json": _dumps(summary),
        "dataset.json": _dumps(dataset),
        "demos.jsonl": save_demos(result.psi, None, include_features=config.agent_kind == "linear_pg"),
    }


def write_execution(directory: Path, files: dict[str, str]) -> None:
    # summary.json goes last: its presence marks a complete execution.
    for name in sorted(files, key=lambda n: n == "summary.json"):
        atomic_write_text(directory / name, files[name])


def _execute(job):
    cfg_dict, optimizer, seed, directory, backend_name = job
    from metatune.kernels import get_backend
    config = config_from_dict(cfg_dict)
    backend = get_backend(backend_name) if backend_name else None
    result = run_execution(config, optimizer, seed, backend)
    files = execution_files(config, optimizer, seed, result)
    write_execution(Path(directory), files)
    summary = json.loads(files["summary.json"])
    return ExecutionRecord(config.config_hash(), optimizer, seed, result.records,
                           summary["totals"], Path(directory))


def run_experiment(config: ExperimentConfig, out=None, seed_offset: int = 0, jobs: int = 1,
                   backend: str | None = None) -> list[ExecutionRecord]:
    """Run every (optimizer, seed) execution and write its result files.

    Files land in ``<out>/<name>/<optimizer>/seed<k>/``.  The output root
    is checked for writability before any training starts.
    """
    root = resolve_out_root(out) / config.name
    probe_writable(root)
    cfg_dict = config.to_dict()
    jobs_list = []
    for optimizer in config.optimizers:
        for s in config.seeds:
            seed = s + seed_offset
            jobs_list.append((cfg_dict, optimizer, seed, str(root / optimizer / f"seed{seed}"), backend))
    atomic_write_text(root / "config.json", json.dumps(cfg_dict, indent=2) + "\n")
    if jobs > 1 and len(jobs_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_execute, jobs_list))
    return [_execute(job) for job in jobs_list]


def _read_execution(directory: Path):
    """(optimizer, ys) for a complete execution, or raise ValueError."""
    missing = [n for n in RECORD_FILES if not (directory / n).exists()]
    if missing:
        raise ValueError(f"missing {', '.join(missing)}")
    summary = json.loads((directory / "summary.json").read_text(encoding="utf-8"))
    with open(directory / "records.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != summary.get("meta_episodes"):
        raise ValueError(f"{len(rows)} rows, expected {summary.get('meta_episodes')}")
    return summary["optimizer"], [float(r["y"]) for r in rows]


def find_executions(result_dirs) -> list[Path]:
    found = set()
    for d in result_dirs:
        d = Path(d)
        if not d.exists():
            raise FileNotFoundError(d)
        for p in d.rglob("*"):
            if p.is_dir() and p.name.startswith("seed") and p.name[4:].isdigit():
                found.add(p)
        if d.name.startswith("seed") and d.name[4:].isdigit():
            found.add(d)
    return sorted(found)


def comparison_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARISON_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in COMPARISON_COLUMNS])
    return buf.getvalue()


def long_csv(rows: list[dict]) -> str:
    """One row per (optimizer, meta-episode, series) for plotting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["optimizer", "meta_episode", "series", "mean", "ci_low", "ci_high", "executions"])
    for r in rows:
        w.writerow([r["optimizer"], r["meta_episode"], "max_reached", _fmt(r["mean_best"]),
                    _fmt(r["ci_low"]), _fmt(r["ci_high"]), r["executions"]])
        h = r["reward_ci_half"]
        w.writerow([r["optimizer"], r["meta_episode"], "reward", _fmt(r["mean_reward"]),
                    _fmt(r["mean_reward"] - h), _fmt(r["mean_reward"] + h), r["executions"]])
    return buf.getvalue()


def report(result_dirs, out=None) -> ReportResult:
    """Aggregate complete executions under ``result_dirs`` into comparison tables.

    Writes ``comparison.csv`` and ``comparison_long.csv`` to ``out`` when
    given.  Missing or partial executions are skipped and counted in a
    warning.
    """
    groups: dict[str, list] = {}
    included: dict[str, list[Path]] = {}
    excluded = []
    for d in find_executions(result_dirs):
        try:
            optimizer, ys = _read_execution(d)
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            excluded.append((d, str(exc)))
            continue
        groups.setdefault(optimizer, []).append(ys)
        included.setdefault(optimizer, []).append(d)
    if excluded:
        log.warning("excluded %d partial or missing execution(s): %s", len(excluded),
                    ", ".join(f"{p} ({why})" for p, why in excluded))
    if not groups:
        raise ValueError("no complete executions found")
    rows = run_comparison(groups)
    if out is not None:
        out = Path(out)
        atomic_write_text(out / "comparison.csv", comparison_csv(rows))
        atomic_write_text(out / "comparison_long.csv", long_csv(rows))
    return ReportResult(rows, included, excluded)
