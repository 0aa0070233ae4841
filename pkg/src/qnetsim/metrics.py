"""Delivery records and their reduction into fidelity, throughput and utilities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .physics import werner_to_fidelity

DEFAULT_THROUGHPUT_WINDOW = 10e-3


@dataclass(slots=True)
class DeliveryRecord:
    flow_id: int
    seq: int
    request_id: int
    w_final: float
    created_at: float
    delivered_at: float
    congestion_mark: bool
    pauli_frame: int
    per_hop_buffering: list

    @property
    def fidelity(self) -> float:
        return werner_to_fidelity(self.w_final)

    @property
    def e2e_latency(self) -> float:
        return self.delivered_at - self.created_at


@dataclass(slots=True)
class DropRecord:
    flow_id: int
    seq: int
    dropping_node: str
    reason: str
    dropped_at: float


class Recorder:
    """Streaming collector fed by the network and transport layers."""

    def __init__(self):
        self.deliveries: list[DeliveryRecord] = []
        self.drops: list[DropRecord] = []
        self.injections: list[tuple[float, int]] = []
        self.window_trace: list[tuple[float, int, int, str, str]] = []
        self.aqm_trace: list[tuple[float, str, float, float, int]] = []
        self.buffering: dict[str, list[tuple[float, float]]] = {}
        self.edge_discards: list[tuple[float, int]] = []

    def on_inject(self, dgram) -> None:
        self.injections.append((dgram.created_at, dgram.flow_id))

    def on_deliver(self, dgram, w_final: float, now: float) -> None:
        self.deliveries.append(
            DeliveryRecord(
                dgram.flow_id, dgram.seq, dgram.request_id, w_final, dgram.created_at, now,
                dgram.congestion_mark, dgram.pauli_frame, dgram.per_hop_buffering,
            )
        )

    def on_drop(self, notice) -> None:
        self.drops.append(DropRecord(notice.flow_id, notice.seq, notice.dropping_node, notice.reason, notice.dropped_at))

    def on_buffering(self, node: str, now: float, duration: float) -> None:
        self.buffering.setdefault(node, []).append((now, duration))

    def on_window(self, now: float, flow_id: int, w: int, phase: str, cause: str) -> None:
        self.window_trace.append((now, flow_id, w, phase, cause))

    def on_aqm(self, now: float, node: str, p: float, avg: float, count: int) -> None:
        self.aqm_trace.append((now, node, p, avg, count))

    def on_edge_discard(self, flow_id: int, now: float) -> None:
        self.edge_discards.append((now, flow_id))


# -- reductions -------------------------------------------------------------


def throughput_series(
    delivered_at: Sequence[float] | np.ndarray,
    window: float = DEFAULT_THROUGHPUT_WINDOW,
    sample_times: Sequence[float] | np.ndarray | None = None,
    step: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Trailing-window delivery rate.

    At each sample time ``t`` the rate is the number of deliveries in
    ``(t - window, t]`` divided by ``window``.  Sample times default to a grid
    with spacing ``step`` (default ``window / 10``) over the record span.
    """
    times = np.asarray(delivered_at, dtype=float)
    if sample_times is None:
        step = window / 10 if step is None else step
        end = float(times[-1]) if times.size else window
        sample_times = np.arange(step, end + 0.5 * step, step)
    sample_times = np.asarray(sample_times, dtype=float)
    times = np.sort(times)
    hi = np.searchsorted(times, sample_times, side="right")
    lo = np.searchsorted(times, sample_times - window, side="right")
    return sample_times, (hi - lo) / window


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def qber(fidelity: float) -> float:
    return 2.0 * (1.0 - fidelity) / 3.0


def skr_bb84(fidelity: float, rate: float) -> float:
    """Asymptotic BB84 key rate from Werner pairs delivered at ``rate``."""
    q = qber(fidelity)
    return rate * max(0.0, 1.0 - 2.0 * binary_entropy(q))


def negativity(w: float) -> float:
    return max(0.0, (3.0 * w - 1.0) / 4.0)


def negativity_utility(w: float, rate: float) -> float:
    return rate * math.log2(1.0 + 2.0 * negativity(w))


@dataclass
class RegimeSummary:
    name: str
    start: float
    end: float
    deliveries: int
    drops: int
    mean_fidelity: float | None
    fidelity_variance: float | None
    throughput: float | None
    loss_fraction: float | None

    @property
    def present(self) -> bool:
        return self.deliveries + self.drops > 0


@dataclass
class RunSummary:
    mean_fidelity: float | None
    fidelity_variance: float | None
    mean_werner: float | None
    throughput: float
    deliveries: int
    drops_by_reason: dict
    injected: int
    loss_fraction: float | None
    skr: float | None
    negativity_utility: float | None
    regimes: list[RegimeSummary] = field(default_factory=list)
    per_flow: dict = field(default_factory=dict)


def _window(records: Iterable, start: float, end: float, attr: str):
    return [r for r in records if start <= getattr(r, attr) < end]


def regime_summary(
    deliveries: Sequence[DeliveryRecord],
    drops: Sequence[DropRecord],
    boundaries: Sequence[tuple[str, float, float]],
) -> list[RegimeSummary]:
    """Per-regime means.  A regime with no events is reported with ``None`` statistics."""
    rows = []
    for name, start, end in boundaries:
        d = _window(deliveries, start, end, "delivered_at")
        x = _window(drops, start, end, "dropped_at")
        span = end - start
        if not d and not x:
            rows.append(RegimeSummary(name, start, end, 0, 0, None, None, None, None))
            continue
        fids = np.array([r.fidelity for r in d]) if d else None
        rows.append(
            RegimeSummary(
                name, start, end, len(d), len(x),
                float(fids.mean()) if d else None,
                float(fids.var()) if d else None,
                len(d) / span if span > 0 else None,
                len(x) / (len(d) + len(x)),
            )
        )
    return rows


def summarize(
    deliveries: Sequence[DeliveryRecord],
    drops: Sequence[DropRecord],
    start: float,
    end: float,
    injected: int = 0,
    regimes: Sequence[tuple[str, float, float]] = (),
) -> RunSummary:
    d = _window(deliveries, start, end, "delivered_at")
    x = _window(drops, start, end, "dropped_at")
    span = end - start
    rate = len(d) / span if span > 0 else 0.0
    by_reason: dict[str, int] = {}
    for r in x:
        by_reason[r.reason] = by_reason.get(r.reason, 0) + 1
    per_flow: dict = {}
    for r in d:
        per_flow.setdefault(r.flow_id, []).append(r.fidelity)
    per_flow = {
        k: {"deliveries": len(v), "mean_fidelity": float(np.mean(v)), "throughput": len(v) / span}
        for k, v in sorted(per_flow.items())
    }
    if d:
        ws = np.array([r.w_final for r in d])
        fids = (3 * ws + 1) / 4
        mean_f = float(fids.mean())
        mean_w = float(ws.mean())
        summary = RunSummary(
            mean_f, float(fids.var()), mean_w, rate, len(d), by_reason, injected,
            len(x) / (len(d) + len(x)), skr_bb84(mean_f, rate), negativity_utility(mean_w, rate),
        )
    else:
        summary = RunSummary(None, None, None, rate, 0, by_reason, injected,
                             1.0 if x else None, None, None)
    summary.regimes = regime_summary(deliveries, drops, regimes)
    summary.per_flow = per_flow
    return summary
