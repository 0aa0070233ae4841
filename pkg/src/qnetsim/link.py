"""Link controllers sitting at the midpoint of each quantum link.

A controller collects pair requests from both attached nodes, runs one LLEG
process at a time and hands every generated pair either to a pending
request (chosen by policy) or, in continuous mode, to a per-link cache.
"""

from __future__ import annotations

from collections import deque
from typing import Callable, Hashable, NamedTuple

from .physics import LinkParams, sample_attempts
from .simcore import SimulationError, Simulator

ON_DEMAND = "on-demand"
CONTINUOUS = "continuous"
YOUNGEST = "youngest-largest-backlog"
OLDEST = "oldest-largest-backlog"
MODES = (ON_DEMAND, CONTINUOUS)
POLICIES = (YOUNGEST, OLDEST)


class LinkLevelLabel(NamedTuple):
    link_id: int
    pair_counter: int


class LinkRequest(NamedTuple):
    requester: str
    seq: Hashable
    arrival_time: float


class LinkLevelPair:
    """A generated Bell pair; endpoint storage times live in the memory banks."""

    __slots__ = ("label", "w", "generated_at", "request")

    def __init__(self, label: LinkLevelLabel, w: float, generated_at: float):
        self.label = label
        self.w = w
        self.generated_at = generated_at
        self.request: LinkRequest | None = None

    @property
    def trace_id(self) -> str:
        return f"pair{self.label.link_id}.{self.label.pair_counter}"


# notify(controller, pair, request_or_None, from_cache)
NotifyFn = Callable[["LinkController", LinkLevelPair, "LinkRequest | None", bool], None]


class LinkController:
    def __init__(
        self,
        sim: Simulator,
        link_id: int,
        ends: tuple[str, str],
        params: LinkParams,
        initial_werner: float,
        half_delay: float,
        notify: NotifyFn,
        mode: str = ON_DEMAND,
        policy: str = YOUNGEST,
        addresses: dict[str, int] | None = None,
    ):
        if mode not in MODES:
            raise ValueError(f"unknown link mode {mode!r}")
        if policy not in POLICIES:
            raise ValueError(f"unknown link policy {policy!r}")
        self.sim = sim
        self.link_id = link_id
        self.ends = ends
        self.params = params
        self.q = params.success_prob
        self.f_a = params.attempt_freq_hz
        self.initial_werner = initial_werner
        self.half_delay = half_delay
        self.notify = notify
        # set by the network layer; binds slots of a cached pair to a request
        self.reserve_cached: Callable[[LinkLevelPair, LinkRequest], None] | None = None
        self.mode = mode
        self.policy = policy
        self.addresses = addresses or {n: i for i, n in enumerate(sorted(ends))}
        self.rng = sim.rng(f"lleg/{link_id}")
        self.pending: dict[str, list[LinkRequest]] = {n: [] for n in ends}
        self._outstanding: set[tuple[str, Hashable]] = set()
        self.generation_active = False
        self.cache: deque[LinkLevelPair] = deque()
        self._counter = 0
        # accounting
        self.generated = 0
        self.assigned = 0
        self.cached = 0
        self.last_success_time: float | None = None

    @property
    def trace_id(self) -> str:
        return f"link{self.link_id}"

    def other_end(self, node: str) -> str:
        a, b = self.ends
        return b if node == a else a

    def backlog(self) -> int:
        return sum(len(v) for v in self.pending.values())

    def start(self) -> None:
        if self.mode == CONTINUOUS and not self.generation_active:
            self._start_generation()

    # -- requests -----------------------------------------------------------

    def request_pair(self, requester: str, seq: Hashable) -> None:
        """Send a request from ``requester``; it reaches the midpoint after one half-link delay."""
        if requester not in self.pending:
            raise SimulationError(f"{requester} is not attached to link {self.link_id}")
        key = (requester, seq)
        if key in self._outstanding:
            raise SimulationError(f"duplicate link request {key} on link {self.link_id}")
        self._outstanding.add(key)
        self.sim.schedule(self.sim.now + self.half_delay, self.request_arrived, requester, seq)

    def request_arrived(self, requester: str, seq: Hashable) -> None:
        req = LinkRequest(requester, seq, self.sim.now)
        self.pending[requester].append(req)
        if self.cache:
            self._serve_from_cache()
        elif not self.generation_active:
            self._start_generation()

    def select_request(self) -> LinkRequest:
        """Pick a request from the node with the largest backlog.

        Ties go to the lower node address.  The youngest or oldest request of
        that node is chosen according to the policy.
        """
        best_node = None
        best_len = 0
        for node, queue in self.pending.items():
            n = len(queue)
            if n > best_len or (
                n == best_len and n > 0 and self.addresses[node] < self.addresses[best_node]
            ):
                best_node, best_len = node, n
        if best_node is None:
            raise SimulationError(f"select_request on link {self.link_id} with no pending requests")
        queue = self.pending[best_node]
        return queue[-1] if self.policy == YOUNGEST else queue[0]

    def _take(self, req: LinkRequest) -> None:
        queue = self.pending[req.requester]
        if queue and queue[-1] is req:
            queue.pop()
        elif queue and queue[0] is req:
            queue.pop(0)
        else:
            queue.remove(req)
        self._outstanding.discard((req.requester, req.seq))

    # -- generation ---------------------------------------------------------

    def _start_generation(self) -> None:
        self.generation_active = True
        k = sample_attempts(self.q, self.rng)
        self.sim.schedule(self.sim.now + k / self.f_a, self.generation_success)

    def generation_success(self) -> None:
        now = self.sim.now
        self.generated += 1
        self.last_success_time = now
        pair = LinkLevelPair(LinkLevelLabel(self.link_id, self._counter), self.initial_werner, now)
        self._counter += 1
        if self.backlog():
            req = self.select_request()
            self._take(req)
            pair.request = req
            self.assigned += 1
            self.sim.schedule(now + self.half_delay, self.notify, self, pair, req, False)
        else:
            # only reachable in continuous mode
            self.cached += 1
            self.sim.schedule(now + self.half_delay, self.notify, self, pair, None, False)
        if self.mode == CONTINUOUS or self.backlog():
            self._start_generation()
        else:
            self.generation_active = False

    # -- continuous-mode cache ---------------------------------------------

    def add_cached(self, pair: LinkLevelPair) -> None:
        """Called once both endpoints have stored a cached pair."""
        self.cache.append(pair)
        if self.backlog():
            self._serve_from_cache()

    def drop_cached(self, pair: LinkLevelPair) -> bool:
        try:
            self.cache.remove(pair)
        except ValueError:
            return False
        return True

    def _serve_from_cache(self) -> None:
        while self.cache and self.backlog():
            req = self.select_request()
            self._take(req)
            # the freshest cached pair has decohered the least
            pair = self.cache.pop()
            pair.request = req
            self.assigned += 1
            if self.reserve_cached is not None:
                self.reserve_cached(pair, req)
            self.sim.schedule(self.sim.now + self.half_delay, self.notify, self, pair, req, True)
