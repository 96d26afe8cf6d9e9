"""Experiment orchestration: single operating points, resumable grids over
(c, symbol rate, ROP, M, S), and best-offset selection.

Every results row can be regenerated from its config_hash and seed; the
journal file is append-only and the final results CSV is rewritten in
canonical grid order so output does not depend on worker scheduling.
"""

from __future__ import annotations

import itertools
import json
import os
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .air import AirResult, air_from_posteriors, combine_stage_rates
from .channel import ROLE_EVAL, ROLE_TRAIN, build_dataset
from .config import LinkConfig
from .equalizer import (SicSchedule, mlp_train, save_checkpoint, sic_detect,
                        stage_training_set)

RESULTS_COLUMNS = ("m", "c", "r_sym_baud", "rop_dbm", "s_stages", "stage",
                   "rate_bpcu", "i_s_bpcu", "r_b_bits_per_s", "mc_err_bpcu",
                   "seed", "git_rev", "config_hash", "mode")

WORKERS_ENV = "DDLINK_WORKERS"


def git_revision() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"],
                             capture_output=True, text=True, timeout=10,
                             cwd=os.path.dirname(os.path.abspath(__file__)))
        rev = out.stdout.strip()
        return rev if out.returncode == 0 and rev else "unknown"
    except OSError:
        return "unknown"


def _fmt(x) -> str:
    # repr round-trips floats exactly, so derived columns (net rate = rate x
    # symbol rate) stay consistent identities after parsing
    if isinstance(x, float):
        return repr(x)
    return str(x)


def result_rows(config: LinkConfig, result: AirResult,
                git_rev: str | None = None) -> list[str]:
    """One CSV line per stage; aggregate columns repeat on each line."""
    rev = git_revision() if git_rev is None else git_rev
    rows = []
    for stage, (rate, err) in enumerate(zip(result.stage_rates_bpcu,
                                            result.stage_errors_bpcu), start=1):
        values = (config.modulation_order, config.offset_c,
                  config.symbol_rate_baud, config.frontend.rop_dbm,
                  result.n_stages, stage, rate, result.aggregate_bpcu,
                  result.net_rate_bps, err, config.seed, rev,
                  config.config_hash(), result.mode)
        rows.append(",".join(_fmt(v) for v in values))
    return rows


@dataclass
class PointOutcome:
    config: LinkConfig
    results: list[AirResult]
    train_reports: list = field(default_factory=list)


def train_stage_models(records, config: LinkConfig):
    """One network per stage, genie-conditioned, seeds split per stage."""
    schedule = SicSchedule(config.sic_stages)
    models, reports = [], []
    for stage in range(config.sic_stages):
        feats, labels = stage_training_set(records, schedule, stage,
                                           config.train.window_half_width)
        spec = replace(config.train, seed=config.train.seed + 1000 * stage)
        params, report = mlp_train(feats, labels, config.modulation_order, spec)
        models.append(params)
        reports.append(report)
    return models, reports


def evaluate_models(records, models, config: LinkConfig,
                    modes=("decision", "genie")) -> list[AirResult]:
    schedule = SicSchedule(config.sic_stages)
    n = records.indices.shape[0]
    pos_in_frame = np.arange(n) % records.frame_len
    stage_of = schedule.stage_of(pos_in_frame)
    out = []
    for mode in modes:
        posteriors = sic_detect(records, models, schedule,
                                config.train.window_half_width, conditioning=mode)
        stage_rates = []
        for stage in range(config.sic_stages):
            sel = stage_of == stage
            stage_rates.append(air_from_posteriors(
                records.indices[sel], posteriors[sel], config.modulation_order))
        out.append(combine_stage_rates(stage_rates, config.symbol_rate_baud, mode))
    return out


def run_point(config: LinkConfig, results_path: str | None = None,
              checkpoint_dir: str | None = None,
              modes=("decision", "genie")) -> PointOutcome:
    """Simulate, train every stage, evaluate, and optionally persist."""
    train_records = build_dataset(config, config.train.train_frames, ROLE_TRAIN)
    eval_records = build_dataset(config, config.train.eval_frames, ROLE_EVAL)
    models, reports = train_stage_models(train_records, config)
    results = evaluate_models(eval_records, models, config, modes=modes)
    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
        for stage, params in enumerate(models, start=1):
            save_checkpoint(str(Path(checkpoint_dir) /
                                f"{config.config_hash()}_stage{stage}.ckpt"),
                            params, config.train, dataset_hash=config.config_hash())
    if results_path is not None:
        append_rows(results_path, [row for res in results
                                   for row in result_rows(config, res)])
    return PointOutcome(config, results, reports)


def append_rows(path: str, rows: list[str]) -> None:
    """Append-only journal write; the header goes in with the first row."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    new = not p.exists() or p.stat().st_size == 0
    with open(p, "a") as fh:
        if new:
            fh.write(",".join(RESULTS_COLUMNS) + "\n")
        fh.write("\n".join(rows) + "\n")


def read_results(path: str) -> list[dict]:
    rows = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rows.append(dict(zip(header, line.split(","))))
    return rows


# ---------------------------------------------------------------------------
# Grid sweeps
# ---------------------------------------------------------------------------

_GRID_KEYS = ("offset_c", "symbol_rate_baud", "rop_dbm", "modulation_order",
              "sic_stages")


@dataclass(frozen=True)
class SweepSpec:
    """Cartesian grid over any subset of the sweepable link parameters."""

    base: LinkConfig
    grid: dict
    repetitions: int = 1
    output_dir: str = "sweep_out"

    def __post_init__(self):
        if not self.grid:
            raise ValueError("sweep grid must not be empty")
        for key in self.grid:
            if key not in _GRID_KEYS:
                raise ValueError(f"unsupported grid key {key!r}; "
                                 f"choose from {_GRID_KEYS}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    def points(self) -> list[LinkConfig]:
        keys = sorted(self.grid)
        configs = []
        for combo in itertools.product(*(self.grid[k] for k in keys)):
            overrides = dict(zip(keys, combo))
            if "rop_dbm" in overrides:
                rop = overrides.pop("rop_dbm")
                base = self.base.with_overrides(
                    frontend=replace(self.base.frontend, rop_dbm=rop))
            else:
                base = self.base
            for rep in range(self.repetitions):
                configs.append(base.with_overrides(
                    seed=self.base.seed + rep, **overrides))
        return configs


def _run_point_rows(config_json: str) -> tuple[str, list[str], str]:
    """Worker entry: returns (config_hash, rows, error string)."""
    config = LinkConfig.from_json(config_json)
    try:
        outcome = run_point(config)
        rows = [row for res in outcome.results
                for row in result_rows(config, res)]
        return config.config_hash(), rows, ""
    except Exception as exc:  # point failures must not kill the sweep
        return config.config_hash(), [], f"{type(exc).__name__}: {exc}"


def worker_count() -> int:
    requested = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(requested))
    except ValueError:
        return 1


def run_sweep(spec: SweepSpec) -> list[dict]:
    """Execute the grid, resuming from the completed-point manifest.

    Rows are journaled per point, then the results CSV is rewritten in grid
    order so the file content is independent of completion order.
    """
    outdir = Path(spec.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest_path = outdir / "manifest.jsonl"
    journal_path = outdir / "journal.csv"
    results_path = outdir / "results.csv"

    done: dict[str, list[str]] = {}
    errors: dict[str, str] = {}
    if manifest_path.exists():
        with open(manifest_path) as fh:
            for line in fh:
                entry = json.loads(line)
                if entry.get("error"):
                    errors[entry["config_hash"]] = entry["error"]
                else:
                    done[entry["config_hash"]] = entry["rows"]

    points = spec.points()
    pending = [c for c in points
               if c.config_hash() not in done and c.config_hash() not in errors]

    def record(chash: str, rows: list[str], error: str) -> None:
        entry = {"config_hash": chash, "rows": rows, "error": error}
        with open(manifest_path, "a") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
        if error:
            errors[chash] = error
        else:
            done[chash] = rows
            if rows:
                append_rows(str(journal_path), rows)

    n_workers = worker_count()
    payloads = [c.to_json(indent=None) for c in pending]
    if n_workers == 1 or len(pending) <= 1:
        for payload in payloads:
            record(*_run_point_rows(payload))
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for chash, rows, error in pool.map(_run_point_rows, payloads):
                record(chash, rows, error)

    ordered = [row for c in points for row in done.get(c.config_hash(), [])]
    with open(results_path, "w") as fh:
        fh.write(",".join(RESULTS_COLUMNS) + "\n")
        for row in ordered:
            fh.write(row + "\n")
    return read_results(str(results_path))


def export_best(rows: list[dict]) -> list[dict]:
    """Per (M, S, rop, symbol rate): the offset maximizing the net bit rate.

    Only aggregate information is needed, so stage-1 decision-mode rows are
    used as the per-point representative.  Ties go to the smallest offset.
    """
    candidates = [r for r in rows
                  if r["stage"] == "1" and r.get("mode", "decision") == "decision"]
    groups: dict[tuple, list[dict]] = {}
    for r in candidates:
        key = (r["m"], r["s_stages"], r["rop_dbm"], r["r_sym_baud"])
        groups.setdefault(key, []).append(r)
    best = []
    for key in sorted(groups):
        rows_g = groups[key]
        rows_g.sort(key=lambda r: (-float(r["r_b_bits_per_s"]), float(r["c"])))
        best.append(rows_g[0])
    return best


def write_best_csv(path: str, best: list[dict]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(RESULTS_COLUMNS) + "\n")
        for r in best:
            fh.write(",".join(r[c] for c in RESULTS_COLUMNS) + "\n")
