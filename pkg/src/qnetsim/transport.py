"""QTCP flows: request admission under an AIMD window.

Congestion signals are drop notices from switches and congestion marks
relayed back in acknowledgments.  Signals landing within one classical
round trip of the previous halving are folded into it.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .simcore import SimulationError, Simulator

if TYPE_CHECKING:
    from .metrics import Recorder
    from .network import DropNotice, Network, QtcpAck

SLOW_START = "slow-start"
CONGESTION_AVOIDANCE = "congestion-avoidance"

CC_OFF = "off"
CC_AIMD = "aimd"
CC_AIMD_AQM = "aimd+aqm"
CC_MODES = (CC_OFF, CC_AIMD, CC_AIMD_AQM)

POISSON = "poisson"
INFINITE = "infinite"
BATCH = "batch"
DEMANDS = (POISSON, INFINITE, BATCH)


@dataclass
class FlowSpec:
    flow_id: int
    source: str
    destination: str
    demand: str = POISSON
    rate_hz: float = 0.0
    # piecewise-constant rate: [(start_time, rate_hz), ...]; overrides rate_hz
    rate_schedule: list[tuple[float, float]] = field(default_factory=list)
    batch_size: int = 0
    start_time: float = 0.0
    cc: str = CC_AIMD

    def __post_init__(self):
        if self.source == self.destination:
            raise ValueError(f"flow {self.flow_id}: source equals destination")
        if self.demand not in DEMANDS:
            raise ValueError(f"flow {self.flow_id}: unknown demand {self.demand!r}")
        if self.cc not in CC_MODES:
            raise ValueError(f"flow {self.flow_id}: unknown congestion control {self.cc!r}")
        if self.rate_hz < 0 or any(r < 0 for _, r in self.rate_schedule):
            raise ValueError(f"flow {self.flow_id}: negative request rate")
        if self.demand == INFINITE and self.cc == CC_OFF:
            raise ValueError(f"flow {self.flow_id}: infinite demand needs congestion control")


class CongestionWindow:
    """AIMD window with slow start.

    ``max_window`` optionally caps growth; ``None`` leaves it unbounded.
    """

    def __init__(self, initial_window: int = 1, ssthresh: int = 64, rtt: float = 0.0, max_window: int | None = None):
        if initial_window < 1 or ssthresh < 1:
            raise ValueError("window and ssthresh must be positive")
        if max_window is not None and max_window < initial_window:
            raise ValueError("max_window is below the initial window")
        self.max_window = max_window
        self.w = initial_window
        self.ssthresh = ssthresh
        self.phase = SLOW_START if initial_window < ssthresh else CONGESTION_AVOIDANCE
        self.in_flight = 0
        self.ack_counter = 0
        self.rtt = rtt
        self._last_cut = -math.inf

    def can_admit(self) -> bool:
        return self.in_flight < self.w

    def on_clean_ack(self) -> bool:
        """Grow by the phase rule; returns True if ``w`` changed."""
        if self.max_window is not None and self.w >= self.max_window:
            return False
        if self.phase == SLOW_START:
            self.w += 1
            if self.w >= self.ssthresh:
                self.phase = CONGESTION_AVOIDANCE
                self.ack_counter = 0
            return True
        self.ack_counter += 1
        if self.ack_counter >= self.w:
            self.w += 1
            self.ack_counter = 0
            return True
        return False

    def on_congestion(self, now: float) -> bool:
        """Halve unless a halving already happened within the last round trip."""
        if now - self._last_cut < self.rtt:
            return False
        self._last_cut = now
        self.w = max(1, self.w // 2)
        self.ssthresh = self.w
        self.phase = CONGESTION_AVOIDANCE
        self.ack_counter = 0
        return True


class Flow:
    def __init__(
        self,
        sim: Simulator,
        network: Network,
        spec: FlowSpec,
        recorder: Recorder,
        initial_window: int = 1,
        ssthresh: int = 64,
        admission_bound: int | None = None,
        max_window: int | None = None,
    ):
        self.sim = sim
        self.network = network
        self.spec = spec
        self.flow_id = spec.flow_id
        self.recorder = recorder
        self.rtt = 2.0 * network.path_delay(spec.source, spec.destination)
        self.window = CongestionWindow(initial_window, ssthresh, rtt=self.rtt, max_window=max_window)
        self.controlled = spec.cc != CC_OFF
        self.admission_bound = admission_bound
        self.pending: deque[int] = deque()
        self.in_flight: dict[int, int] = {}  # seq -> request id
        self.next_seq = 0
        self.next_request = 0
        self.open = False
        self.closed = False
        self.completed = 0
        self.rng = sim.rng(f"arrivals/{spec.flow_id}")
        self._rate = spec.rate_hz
        self._arrival_token = 0
        network.flows[spec.flow_id] = self

    @property
    def trace_id(self) -> str:
        return f"flow{self.flow_id}"

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> None:
        spec = self.spec
        self.sim.schedule(max(spec.start_time, self.sim.now), self.open_handshake)
        if spec.demand == POISSON:
            schedule = spec.rate_schedule or [(spec.start_time, spec.rate_hz)]
            for t, rate in schedule:
                self.sim.schedule(max(t, self.sim.now), self.set_rate, rate)
        elif spec.demand == BATCH:
            for _ in range(spec.batch_size):
                self._enqueue_new()

    def open_handshake(self) -> None:
        # one classical round trip, no negotiation
        self.sim.schedule(self.sim.now + self.rtt, self.transmission_opened)

    def transmission_opened(self) -> None:
        self.open = True
        self.recorder.on_window(self.sim.now, self.flow_id, self.window.w, self.window.phase, "open")
        self.admit_requests()

    def close_handshake(self) -> None:
        self.sim.schedule(self.sim.now + self.rtt, self.transmission_closed)

    def transmission_closed(self) -> None:
        self.closed = True

    # -- demand -------------------------------------------------------------

    def set_rate(self, rate: float) -> None:
        # memoryless arrivals: redraw the next arrival under the new rate
        self._rate = rate
        self._arrival_token += 1
        self._schedule_arrival()

    def _schedule_arrival(self) -> None:
        if self._rate <= 0:
            return
        gap = self.rng.expovariate(self._rate)
        self.sim.schedule(self.sim.now + gap, self.request_arrival, self._arrival_token)

    def request_arrival(self, token: int) -> None:
        if token != self._arrival_token:
            return
        self.on_request_arrival()
        self._schedule_arrival()

    def _enqueue_new(self) -> bool:
        if self.admission_bound is not None and len(self.pending) >= self.admission_bound:
            self.recorder.on_edge_discard(self.flow_id, self.sim.now)
            return False
        self.pending.append(self.next_request)
        self.next_request += 1
        return True

    def on_request_arrival(self) -> None:
        if self._enqueue_new():
            self.admit_requests()

    # -- admission ----------------------------------------------------------

    def admit_requests(self) -> None:
        if not self.open or self.closed:
            return
        win = self.window
        infinite = self.spec.demand == INFINITE
        while (self.pending or infinite) and (not self.controlled or win.in_flight < win.w):
            if self.pending:
                request_id = self.pending.popleft()
            else:
                request_id = self.next_request
                self.next_request += 1
            seq = self.next_seq
            self.next_seq += 1
            self.in_flight[seq] = request_id
            win.in_flight += 1
            self.network.inject_qdatagram(self.spec.source, self.flow_id, seq, self.spec.destination, request_id)

    # -- feedback -----------------------------------------------------------

    def on_ack(self, ack: QtcpAck) -> None:
        if self.in_flight.pop(ack.seq, None) is None:
            raise SimulationError(f"flow {self.flow_id}: ack for unknown seq {ack.seq}")
        win = self.window
        win.in_flight -= 1
        self.completed += 1
        if self.controlled:
            if ack.congestion_mark:
                self.on_congestion("mark")
            elif win.on_clean_ack():
                self.recorder.on_window(self.sim.now, self.flow_id, win.w, win.phase, "ack")
        if self.spec.demand == BATCH and self.completed == self.spec.batch_size:
            self.close_handshake()
            return
        self.admit_requests()

    def on_drop_notice(self, notice: DropNotice) -> None:
        request_id = self.in_flight.pop(notice.seq, None)
        if request_id is None:
            raise SimulationError(f"flow {self.flow_id}: drop notice for unknown seq {notice.seq}")
        self.window.in_flight -= 1
        if self.controlled:
            # retry at the head of the admission queue
            self.pending.appendleft(request_id)
            self.on_congestion("drop")
            self.admit_requests()

    def on_congestion(self, cause: str) -> None:
        win = self.window
        if win.on_congestion(self.sim.now):
            self.recorder.on_window(self.sim.now, self.flow_id, win.w, win.phase, cause)
