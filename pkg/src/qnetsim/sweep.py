"""Parameter sweeps: cartesian grid of config overrides times seeds."""

from __future__ import annotations

import copy
import itertools
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bundle
from . import config as config_mod
from .scenario import run

METRICS = ("mean_fidelity", "throughput", "skr", "negativity_utility")
METRIC_COLUMNS = {
    "mean_fidelity": "fidelity",
    "throughput": "throughput_per_s",
    "skr": "skr_bits_per_s",
    "negativity_utility": "negativity_utility_per_s",
}


@dataclass
class SweepPoint:
    index: int
    overrides: dict
    seeds: list[int]


@dataclass
class RunOutcome:
    point: int
    seed: int
    ok: bool
    metrics: dict
    error: str = ""


def expand(raw: dict) -> list[SweepPoint]:
    sw = config_mod.resolve(raw)["sweep"]
    grid = sw["grid"]
    names = list(grid)
    seeds = [sw["first_seed"] + i for i in range(int(sw["seeds_per_point"]))]
    return [
        SweepPoint(i, dict(zip(names, values)), seeds)
        for i, values in enumerate(itertools.product(*(grid[n] for n in names)))
    ]


def point_config(raw: dict, overrides: dict) -> dict:
    raw = copy.deepcopy(raw)
    raw.pop("sweep", None)
    for k, v in overrides.items():
        config_mod.set_dotted(raw, k, v)
    return config_mod.resolve(raw)


def run_dir(out_dir: Path, point: int, seed: int) -> Path:
    return out_dir / f"point{point:03d}" / f"seed{seed}"


def _one(args) -> RunOutcome:
    raw, point, seed, out_dir = args
    try:
        cfg = point_config(raw, point.overrides)
        result = run(cfg, seed=seed)
        if out_dir is not None:
            bundle.write_bundle(result, run_dir(Path(out_dir), point.index, seed))
        s = result.summary
        return RunOutcome(point.index, seed, True, {m: getattr(s, m) for m in METRICS})
    except Exception as exc:  # reported per point, never aborts the sweep
        msg = f"{type(exc).__name__}: {exc}"
        recent = getattr(exc, "recent_events", None)
        if recent:
            msg += " | last events: " + " / ".join(recent[-3:])
        if not isinstance(exc, (config_mod.ConfigError, ValueError)):
            msg += " | " + traceback.format_exc(limit=3).strip().splitlines()[-1]
        return RunOutcome(point.index, seed, False, {}, msg)


def run_sweep(raw: dict, out_dir: str | Path | None, jobs: int = 1, progress=None) -> tuple[list[SweepPoint], list[RunOutcome]]:
    points = expand(raw)
    tasks = [(raw, p, s, None if out_dir is None else str(out_dir)) for p in points for s in p.seeds]
    outcomes = []
    if jobs <= 1:
        for t in tasks:
            outcomes.append(_one(t))
            if progress:
                progress(outcomes[-1])
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for o in pool.map(_one, tasks):
                outcomes.append(o)
                if progress:
                    progress(o)
    return points, outcomes


def mean_se(values: list[float]) -> tuple[float, float]:
    """Mean and standard error; the error is NaN for fewer than two values."""
    a = np.asarray(values, dtype=float)
    if a.size == 0:
        return math.nan, math.nan
    se = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else math.nan
    return float(a.mean()), se


def aggregate(points: list[SweepPoint], outcomes: list[RunOutcome]) -> list[dict]:
    rows = []
    for p in points:
        mine = [o for o in outcomes if o.point == p.index]
        failed = [o for o in mine if not o.ok]
        row = {"point": p.index, **p.overrides, "runs": len(mine), "failed_runs": len(failed)}
        row["status"] = "failed" if failed else "ok"
        for m, col in METRIC_COLUMNS.items():
            if failed:
                # a point with any failed seed is excluded, not averaged over survivors
                row[f"{col}_mean"] = row[f"{col}_se"] = None
                continue
            vals = [o.metrics[m] for o in mine if o.metrics[m] is not None]
            row[f"{col}_mean"], row[f"{col}_se"] = mean_se(vals)
        rows.append(row)
    return rows


def write_aggregate(path: str | Path, points: list[SweepPoint], rows: list[dict]) -> None:
    names = list(points[0].overrides) if points else []
    fields = ["point", *names, "runs", "failed_runs", "status"]
    for col in METRIC_COLUMNS.values():
        fields += [f"{col}_mean", f"{col}_se"]
    bundle._write(Path(path), fields, ([r[f] for f in fields] for r in rows))


def write_runs(path: str | Path, points: list[SweepPoint], outcomes: list[RunOutcome]) -> None:
    names = list(points[0].overrides) if points else []
    by_index = {p.index: p for p in points}
    fields = ["point", *names, "seed", "status", *METRIC_COLUMNS.values(), "error"]
    rows = []
    for o in sorted(outcomes, key=lambda o: (o.point, o.seed)):
        ov = by_index[o.point].overrides
        rows.append([
            o.point, *(ov[n] for n in names), o.seed, "ok" if o.ok else "failed",
            *(o.metrics.get(m) for m in METRIC_COLUMNS), o.error,
        ])
    bundle._write(Path(path), fields, rows)
