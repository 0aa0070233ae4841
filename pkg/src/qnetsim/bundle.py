"""Output bundle: raw record CSVs, summary CSV and text, effective config echo.

Floats are written with ``repr`` so values round-trip exactly and repeated
seeded runs produce byte-identical files.  Records before ``warmup_s`` stay
in the raw CSVs with ``warmup=1``.
"""

from __future__ import annotations

import copy
import csv
import math
from pathlib import Path

import numpy as np

from . import config as config_mod
from .metrics import DeliveryRecord, DropRecord, summarize

SCHEMA_VERSION = 1

DELIVERY_FIELDS = [
    "flow_id", "seq", "request_id", "created_at_s", "delivered_at_s", "e2e_latency_s",
    "w_final", "fidelity", "pauli_frame", "congestion_mark", "per_hop_buffering_s", "warmup",
]
DROP_FIELDS = ["flow_id", "seq", "dropping_node", "reason", "dropped_at_s", "warmup"]
WINDOW_FIELDS = ["time_s", "flow_id", "window", "phase", "cause", "warmup"]
AQM_FIELDS = ["time_s", "node", "mark_probability", "mean_buffering_s", "samples", "warmup"]
SUMMARY_FIELDS = [
    "scope", "name", "start_s", "end_s", "deliveries", "drops", "mean_fidelity",
    "fidelity_variance", "throughput_per_s", "loss_fraction", "skr_bits_per_s",
    "negativity_utility_per_s", "mean_buffering_s",
]


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def _write(path: Path, fields: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _hops(per_hop) -> str:
    return ";".join(f"{node}:{d!r}" for node, d in per_hop)


def period_buffering(aqm_trace, start: float, end: float) -> dict[str, float]:
    """Time average of each switch's per-period buffering estimate over ``(start, end]``."""
    acc: dict[str, list[float]] = {}
    for t, node, _p, avg, _n in aqm_trace:
        if start < t <= end:
            acc.setdefault(node, []).append(avg)
    return {k: float(np.mean(v)) for k, v in sorted(acc.items())}


def summary_rows(result) -> list[list]:
    cfg = result.config
    warm = cfg["run"]["warmup_s"]
    end = cfg["run"]["duration_s"]
    s = result.summary
    rows = [[
        "run", "all", warm, end, s.deliveries, sum(s.drops_by_reason.values()), s.mean_fidelity,
        s.fidelity_variance, s.throughput, s.loss_fraction, s.skr, s.negativity_utility, None,
    ]]
    for g in s.regimes:
        rows.append([
            "regime", g.name, g.start, g.end, g.deliveries, g.drops, g.mean_fidelity,
            g.fidelity_variance, g.throughput, g.loss_fraction, None, None, None,
        ])
    for fid, v in s.per_flow.items():
        rows.append([
            "flow", fid, warm, end, v["deliveries"], None, v["mean_fidelity"],
            None, v["throughput"], None, None, None, None,
        ])
    for node, b in result.mean_buffering(warm, end).items():
        rows.append(["switch", node, warm, end, None, None, None, None, None, None, None, None, b])
    return rows


def summary_text(result) -> str:
    cfg = result.config
    s = result.summary
    inj, dlv, drp, inflight = result.conservation

    def num(x, spec):
        return "n/a" if x is None else format(x, spec)

    lines = [
        f"qnetsim output schema {SCHEMA_VERSION}",
        f"seed {cfg['run']['seed']}, duration {cfg['run']['duration_s']} s, warmup {cfg['run']['warmup_s']} s",
        f"events fired: {result.sim.events_fired}",
        f"q-datagrams: injected {inj}, delivered {dlv}, dropped {drp}, in flight {inflight}",
        f"mean fidelity: {num(s.mean_fidelity, '.5f')} (variance {num(s.fidelity_variance, '.3e')})",
        f"throughput: {s.throughput:.1f} pairs/s",
        f"loss fraction: {num(s.loss_fraction, '.4f')}",
        f"BB84 secret key rate: {num(s.skr, '.1f')} bits/s",
        f"negativity utility: {num(s.negativity_utility, '.1f')} /s",
    ]
    if s.drops_by_reason:
        lines.append("drops by reason: " + ", ".join(f"{k} {v}" for k, v in sorted(s.drops_by_reason.items())))
    for g in s.regimes:
        if not g.present:
            lines.append(f"regime {g.name}: absent (no events)")
            continue
        lines.append(
            f"regime {g.name} [{g.start}, {g.end}) s: fidelity {num(g.mean_fidelity, '.4f')}, "
            f"throughput {g.throughput:.0f} /s, loss {g.loss_fraction:.4f}"
        )
    for node, b in result.mean_buffering(cfg["run"]["warmup_s"]).items():
        lines.append(f"switch {node}: mean buffering {'n/a' if b is None else f'{b * 1e3:.3f} ms'}")
    return "\n".join(lines) + "\n"


def effective_config(cfg: dict) -> dict:
    echo = copy.deepcopy(cfg)
    echo.pop("sweep", None)
    return echo


def write_bundle(result, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rec = result.recorder
    warm = result.config["run"]["warmup_s"]
    _write(out / "deliveries.csv", DELIVERY_FIELDS, (
        [d.flow_id, d.seq, d.request_id, d.created_at, d.delivered_at, d.e2e_latency,
         d.w_final, d.fidelity, d.pauli_frame, d.congestion_mark, _hops(d.per_hop_buffering),
         d.delivered_at < warm]
        for d in rec.deliveries
    ))
    _write(out / "drops.csv", DROP_FIELDS, (
        [x.flow_id, x.seq, x.dropping_node, x.reason, x.dropped_at, x.dropped_at < warm]
        for x in rec.drops
    ))
    _write(out / "window_trace.csv", WINDOW_FIELDS, (
        [t, fid, w, phase, cause, t < warm] for t, fid, w, phase, cause in rec.window_trace
    ))
    _write(out / "aqm_trace.csv", AQM_FIELDS, (
        [t, node, p, avg, n, t < warm] for t, node, p, avg, n in rec.aqm_trace
    ))
    _write(out / "summary.csv", SUMMARY_FIELDS, summary_rows(result))
    (out / "summary.txt").write_text(summary_text(result))
    (out / "config.toml").write_text(config_mod.dumps(effective_config(result.config)))
    return out


# -- reading back -------------------------------------------------------------


def read_deliveries(path: str | Path) -> list[DeliveryRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            hops = []
            if row["per_hop_buffering_s"]:
                for part in row["per_hop_buffering_s"].split(";"):
                    node, d = part.rsplit(":", 1)
                    hops.append((node, float(d)))
            out.append(DeliveryRecord(
                int(row["flow_id"]), int(row["seq"]), int(row["request_id"]), float(row["w_final"]),
                float(row["created_at_s"]), float(row["delivered_at_s"]), row["congestion_mark"] == "1",
                int(row["pauli_frame"]), hops,
            ))
    return out


def read_drops(path: str | Path) -> list[DropRecord]:
    with open(path, newline="") as fh:
        return [
            DropRecord(int(r["flow_id"]), int(r["seq"]), r["dropping_node"], r["reason"], float(r["dropped_at_s"]))
            for r in csv.DictReader(fh)
        ]


def summarize_bundle(out_dir: str | Path):
    """Recompute the run summary from a bundle's CSVs and config echo."""
    out = Path(out_dir)
    cfg = config_mod.loads((out / "config.toml").read_text())
    run = cfg["run"]
    regimes = [(r["name"], r["start_s"], r["end_s"]) for r in run.get("regimes", [])]
    return summarize(
        read_deliveries(out / "deliveries.csv"), read_drops(out / "drops.csv"),
        run["warmup_s"], run["duration_s"], regimes=regimes,
    )
