"""Batch experiment harness: outcome frequencies with Wilson intervals.

Each (regime, initial distance difference, repetition) cell runs one seeded
simulation; the per-run seed is a stable hash of the base seed and the cell
indices, so results are reproducible and independent of execution order or
parallelism.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .config import REGIMES, SimConfig, copy_config
from .simulate import OUTCOME_KINDS, run_simulation


@dataclass
class ConditionGrid:
    regime: str
    delta_d0: tuple
    reps: int = 20

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")


@dataclass
class OutcomeTable:
    """Per-condition outcome counts, proportions and Wilson intervals."""

    regime: str
    conditions: list = field(default_factory=list)   # delta_d0 values
    counts: dict = field(default_factory=dict)       # (dd0, kind) -> int
    n_runs: dict = field(default_factory=dict)       # dd0 -> int
    failures: dict = field(default_factory=dict)     # dd0 -> int

    def proportion(self, dd0, kind) -> float:
        return self.counts.get((dd0, kind), 0) / max(self.n_runs.get(dd0, 0), 1)

    def interval(self, dd0, kind, z: float = 1.96):
        return wilson_interval(self.counts.get((dd0, kind), 0),
                               max(self.n_runs.get(dd0, 0), 1), z)

    def rows(self) -> list[dict]:
        out = []
        for dd0 in self.conditions:
            for kind in OUTCOME_KINDS:
                k = self.counts.get((dd0, kind), 0)
                n = self.n_runs.get(dd0, 0)
                lo, hi = self.interval(dd0, kind)
                out.append({
                    "regime": self.regime, "delta_d0": dd0, "kind": kind,
                    "count": k, "n": n,
                    "prop": k / n if n else 0.0,
                    "wilson_lo": lo, "wilson_hi": hi,
                    "failures": self.failures.get(dd0, 0),
                })
        return out


def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion, clipped to [0, 1]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 <= k <= n:
        raise ValueError("k must lie in [0, n]")
    phat = k / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2.0 * n)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / n + z * z / (4.0 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def derive_seed(base_seed: int, regime: str, cond_index: int, rep: int) -> int:
    """Stable 63-bit run seed from the batch cell coordinates."""
    key = f"{base_seed}|{regime}|{cond_index}|{rep}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(),
                          "big") >> 1


def _run_cell(args) -> dict:
    cfg_dict, regime, dd0, cond_index, rep, seed = args
    from .config import from_dict
    cfg = from_dict(cfg_dict).apply_regime(regime)
    cfg.scenario.d_b0 = cfg.scenario.d_a0 + dd0
    cfg.scenario.seed = seed
    try:
        outcome, log = run_simulation(cfg)
        row = {"regime": regime, "delta_d0": dd0, "rep": rep, "seed": seed,
               "error": None, **outcome.to_dict()}
        row["prompt_to_yield_s"] = _prompt_to_yield_latency(log)
        return row
    except Exception as exc:  # individual failures are recorded, not fatal
        return {"regime": regime, "delta_d0": dd0, "rep": rep, "seed": seed,
                "kind": "error", "error": f"{type(exc).__name__}: {exc}"}


def _prompt_to_yield_latency(log) -> float | None:
    """Shortest delay from any prompt to the other agent's next yield signal."""
    prompts = {"A": [], "B": []}
    yields = {"A": [], "B": []}
    for rec in log:
        if rec.get("record") != "tick":
            continue
        if rec["gamma_a"]:
            prompts[rec["agent"]].append(rec["t"])
        if rec["gamma_y"]:
            yields[rec["agent"]].append(rec["t"])
    best = None
    for agent, other in (("A", "B"), ("B", "A")):
        for tp in prompts[agent]:
            later = [ty - tp for ty in yields[other] if ty > tp]
            if later:
                delay = min(later)
                best = delay if best is None else min(best, delay)
    return best


def run_batch(grid: ConditionGrid, base_seed: int, base_cfg: SimConfig | None = None,
              jobs: int = 1) -> tuple[OutcomeTable, list[dict]]:
    """Run the full grid; returns the aggregate table and raw per-run rows."""
    from .config import to_dict
    cfg = base_cfg if base_cfg is not None else SimConfig()
    cfg_dict = to_dict(copy_config(cfg))
    tasks = []
    for ci, dd0 in enumerate(grid.delta_d0):
        for rep in range(grid.reps):
            seed = derive_seed(base_seed, grid.regime, ci, rep)
            tasks.append((cfg_dict, grid.regime, float(dd0), ci, rep, seed))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            raw = list(pool.map(_run_cell, tasks, chunksize=1))
    else:
        raw = [_run_cell(t) for t in tasks]
    raw.sort(key=lambda r: (r["delta_d0"], r["rep"]))

    table = OutcomeTable(regime=grid.regime,
                         conditions=[float(d) for d in grid.delta_d0])
    for row in raw:
        dd0 = row["delta_d0"]
        if row["kind"] == "error":
            table.failures[dd0] = table.failures.get(dd0, 0) + 1
            continue
        table.n_runs[dd0] = table.n_runs.get(dd0, 0) + 1
        key = (dd0, row["kind"])
        table.counts[key] = table.counts.get(key, 0) + 1
    return table, raw


def emit_outputs(table: OutcomeTable, raw: list[dict], out_dir) -> dict[str, Path]:
    """Write the outcome table CSV, raw outcomes JSONL and plot-ready CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    table_path = out / f"outcomes_{table.regime}.csv"
    rows = table.rows()
    with open(table_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    paths["table"] = table_path

    raw_path = out / f"runs_{table.regime}.jsonl"
    with open(raw_path, "w") as fh:
        for row in raw:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    paths["raw"] = raw_path

    plot_path = out / f"series_{table.regime}.csv"
    with open(plot_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["regime", "delta_d0", "kind", "prop",
                         "wilson_lo", "wilson_hi"])
        for row in rows:
            writer.writerow([row["regime"], row["delta_d0"], row["kind"],
                             row["prop"], row["wilson_lo"], row["wilson_hi"]])
    paths["series"] = plot_path
    return paths


def read_outcome_table(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [dict(r) for r in csv.DictReader(fh)]
