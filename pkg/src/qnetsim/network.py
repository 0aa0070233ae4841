"""Packet-switched forwarding of q-datagrams with sequential swapping.

A q-datagram stands for the Bell pair shared between its source end node and
the node currently holding the other half.  Switches buffer it until the
next link delivers a pair tagged with the q-datagram's key, swap, and pass
the classical part downstream.  Overflowing memory banks evict their oldest
occupant and notify the affected flow source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Hashable, NamedTuple

import networkx as nx

from .aqm import PIController
from .link import LinkController, LinkLevelLabel, LinkLevelPair, LinkRequest
from .physics import LinkParams, NoiseParams, pauli_accumulate, swap
from .simcore import SimulationError, Simulator

if TYPE_CHECKING:
    from .metrics import Recorder

OVERFLOW = "overflow"
CUTOFF = "cutoff"


class Slot:
    __slots__ = ("index", "owner", "stored_at", "pair")

    def __init__(self, index: int, owner: Hashable | None, stored_at: float, pair: LinkLevelPair):
        self.index = index
        self.owner = owner
        self.stored_at = stored_at
        self.pair = pair


class MemoryBank:
    """Memory qubits of one node interface.

    ``slots`` maps link-level labels to occupied slots in occupation order,
    which is also the eviction order.
    """

    def __init__(self, node: str, link_id: int, capacity: int):
        if capacity < 1:
            raise ValueError("memory capacity must be at least 1")
        self.node = node
        self.link_id = link_id
        self.capacity = capacity
        self.slots: dict[LinkLevelLabel, Slot] = {}
        self._free = list(range(capacity - 1, -1, -1))

    def __len__(self) -> int:
        return len(self.slots)

    def __contains__(self, label) -> bool:
        return label in self.slots

    @property
    def full(self) -> bool:
        return not self._free

    def insert(self, label: LinkLevelLabel, owner, stored_at: float, pair: LinkLevelPair) -> Slot:
        if not self._free:
            raise SimulationError(f"insert into full bank {self.node}/{self.link_id}")
        if label in self.slots:
            raise SimulationError(f"label {label} already stored at {self.node}")
        slot = Slot(self._free.pop(), owner, stored_at, pair)
        self.slots[label] = slot
        return slot

    def release(self, label: LinkLevelLabel) -> Slot | None:
        slot = self.slots.pop(label, None)
        if slot is not None:
            self._free.append(slot.index)
        return slot

    def oldest(self) -> tuple[LinkLevelLabel, Slot]:
        label = next(iter(self.slots))
        return label, self.slots[label]

    def check(self) -> None:
        indices = [s.index for s in self.slots.values()]
        if len(self.slots) > self.capacity:
            raise SimulationError(f"bank {self.node}/{self.link_id} over capacity")
        if len(set(indices)) != len(indices) or len(indices) + len(self._free) != self.capacity:
            raise SimulationError(f"bank {self.node}/{self.link_id} label-slot map is not a bijection")
        if set(indices) & set(self._free):
            raise SimulationError(f"bank {self.node}/{self.link_id} frees an occupied slot")


class QDatagram:
    __slots__ = (
        "source", "destination", "seq", "flow_id", "link_label", "pauli_frame",
        "congestion_mark", "created_at", "per_hop_buffering", "key", "request_id",
        "w", "holder", "holder_stored_at", "source_label", "buffer_start", "dropped",
    )

    def __init__(self, source: str, destination: str, flow_id, seq: int, created_at: float, request_id=None):
        self.source = source
        self.destination = destination
        self.flow_id = flow_id
        self.seq = seq
        self.key = (flow_id, seq)
        self.request_id = request_id
        self.created_at = created_at
        self.link_label: LinkLevelLabel | None = None
        self.pauli_frame = 0
        self.congestion_mark = False
        self.per_hop_buffering: list[tuple[str, float]] = []
        self.w = 1.0
        self.holder: str | None = None
        self.holder_stored_at = created_at
        self.source_label: LinkLevelLabel | None = None
        self.buffer_start = created_at
        self.dropped = False

    @property
    def trace_id(self) -> str:
        return f"dg{self.flow_id}.{self.seq}"


class DropNotice(NamedTuple):
    flow_id: object
    seq: int
    dropping_node: str
    reason: str
    dropped_at: float


class QtcpAck(NamedTuple):
    flow_id: object
    seq: int
    congestion_mark: bool
    delivery_time: float


@dataclass
class NodeState:
    name: str
    address: int
    is_end: bool
    banks: dict  # link_id -> MemoryBank
    buffered: dict  # dgram key -> QDatagram waiting for the next pair
    aqm: PIController | None = None
    max_age: float | None = None


class RoutingTable:
    """Static next-hop table from shortest paths weighted by link length."""

    def __init__(self, graph: nx.Graph):
        self.next_hop: dict[str, dict[str, str]] = {}
        self.distance_km: dict[str, dict[str, float]] = {}
        for src in graph.nodes:
            dist, paths = nx.single_source_dijkstra(graph, src, weight="length_km")
            self.distance_km[src] = dist
            self.next_hop[src] = {dst: p[1] for dst, p in paths.items() if len(p) > 1}

    def lookup(self, node: str, destination: str) -> str:
        try:
            return self.next_hop[node][destination]
        except KeyError:
            raise SimulationError(f"no route from {node} to {destination}") from None


class Network:
    """Nodes, links and the switching procedure of one scenario."""

    def __init__(
        self,
        sim: Simulator,
        nodes: list[str],
        end_nodes: set[str],
        links: list[tuple[str, str, float]],
        memory_per_interface: int | dict[str, int],
        physics: dict,
        noise: NoiseParams,
        recorder: Recorder,
        link_mode: str = "on-demand",
        link_policy: str = "youngest-largest-backlog",
        light_speed_km_s: float = 2.0e5,
        max_age: float | None = None,
    ):
        self.sim = sim
        self.recorder = recorder
        self.noise = noise
        self.coherence_time = noise.coherence_time_s
        self.light_speed = light_speed_km_s
        self.addresses = {n: i for i, n in enumerate(nodes)}
        self.graph = nx.Graph()
        self.graph.add_nodes_from(nodes)
        self.controllers: dict[int, LinkController] = {}
        self.link_between: dict[tuple[str, str], LinkController] = {}
        self.link_length: dict[int, float] = {}
        self.nodes: dict[str, NodeState] = {}
        for n in nodes:
            self.nodes[n] = NodeState(n, self.addresses[n], n in end_nodes, {}, {}, max_age=None if n in end_nodes else max_age)
        w0 = noise.initial_werner
        for link_id, (a, b, length) in enumerate(links):
            params = LinkParams(length_km=length, **physics)
            ctrl = LinkController(
                sim, link_id, (a, b), params, w0,
                half_delay=0.5 * length / light_speed_km_s,
                notify=self.pair_notified,
                mode=link_mode, policy=link_policy, addresses=self.addresses,
            )
            ctrl.reserve_cached = self._reserve_cached
            self.controllers[link_id] = ctrl
            self.link_between[(a, b)] = self.link_between[(b, a)] = ctrl
            self.link_length[link_id] = length
            self.graph.add_edge(a, b, length_km=length, link_id=link_id)
            for n in (a, b):
                cap = memory_per_interface[n] if isinstance(memory_per_interface, dict) else memory_per_interface
                self.nodes[n].banks[link_id] = MemoryBank(n, link_id, cap)
        if not nx.is_connected(self.graph):
            raise ValueError("topology is not connected")
        self.routes = RoutingTable(self.graph)
        self.delay = {
            s: {d: km / light_speed_km_s for d, km in row.items()}
            for s, row in self.routes.distance_km.items()
        }
        self.bsm_rng = sim.rng("bsm")
        # flow_id -> object exposing on_ack(ack) and on_drop_notice(notice)
        self.flows: dict = {}
        self.registry: dict[tuple, QDatagram] = {}
        self.injected = 0
        self.invariant_checks = 0
        self.delivered = 0
        self.dropped = 0
        self.pairs_discarded = 0
        self.cache_overflow = 0

    def start(self) -> None:
        for ctrl in self.controllers.values():
            ctrl.start()

    # -- helpers ------------------------------------------------------------

    def path_delay(self, a: str, b: str) -> float:
        return self.delay[a][b]

    def next_link(self, node: str, destination: str) -> LinkController:
        return self.link_between[(node, self.routes.lookup(node, destination))]

    def in_flight(self) -> int:
        return sum(1 for d in self.registry.values() if not d.dropped)

    def enable_aqm(self, make_controller: Callable[[str], PIController]) -> None:
        for node in self.nodes.values():
            if not node.is_end:
                node.aqm = make_controller(node.name)

    def qmmu_insert(self, node: NodeState, link_id: int, pair: LinkLevelPair, owner) -> Slot:
        """Store a pair half, evicting the oldest occupant when the bank is full."""
        bank = node.banks[link_id]
        if bank.full:
            label, slot = bank.oldest()
            self._evict(node, bank, label, slot, OVERFLOW)
        return bank.insert(pair.label, owner, self.sim.now, pair)

    # -- injection ----------------------------------------------------------

    def inject_qdatagram(self, source: str, flow_id, seq: int, destination: str, request_id=None) -> QDatagram:
        if source == destination:
            raise SimulationError("q-datagram source equals destination")
        dgram = QDatagram(source, destination, flow_id, seq, self.sim.now, request_id)
        if dgram.key in self.registry:
            raise SimulationError(f"q-datagram {dgram.key} injected twice")
        self.registry[dgram.key] = dgram
        self.injected += 1
        self.recorder.on_inject(dgram)
        self.next_link(source, destination).request_pair(source, dgram.key)
        return dgram

    # -- link-layer notifications ------------------------------------------

    def pair_notified(self, ctrl: LinkController, pair: LinkLevelPair, req: LinkRequest | None, from_cache: bool) -> None:
        """Both endpoints learn (label, served seq) of a new pair."""
        if req is None:
            self._store_cached(ctrl, pair)
            return
        requester = req.requester
        other = ctrl.other_end(requester)
        link_id = ctrl.link_id
        dgram = self.registry.get(req.seq)
        if dgram is None or dgram.dropped:
            self._discard_pair(ctrl, pair, dgram)
            return
        up = self.nodes[requester]
        down = self.nodes[other]
        if from_cache:
            down_slot = down.banks[link_id].slots[pair.label]
            up_slot = up.banks[link_id].slots[pair.label]
        else:
            down_slot = self.qmmu_insert(down, link_id, pair, dgram.key)
            up_slot = self.qmmu_insert(up, link_id, pair, dgram.key)
        if dgram.dropped:
            # an insertion above evicted one of this q-datagram's own halves
            self._discard_pair(ctrl, pair, dgram)
            return
        now = self.sim.now
        if dgram.link_label is None:
            # first hop: the source keeps its half until delivery
            dgram.source_label = pair.label
            dgram.w = pair.w * math.exp(-(now - up_slot.stored_at) / self.coherence_time)
            # the source half's decay is applied at delivery from now on
            up_slot.stored_at = now
        else:
            self._swap_at(up, dgram, pair, up_slot)
        dgram.link_label = pair.label
        dgram.holder = other
        dgram.holder_stored_at = down_slot.stored_at
        self.sim.schedule(now + 2.0 * ctrl.half_delay, self.receive_qdatagram, other, dgram)

    def _swap_at(self, node: NodeState, dgram: QDatagram, pair: LinkLevelPair, new_slot: Slot) -> None:
        now = self.sim.now
        T = self.coherence_time
        held = node.banks[dgram.link_label.link_id].release(dgram.link_label)
        if held is None:
            raise SimulationError(f"{dgram.trace_id} lost its qubit at {node.name}")
        node.banks[pair.label.link_id].release(pair.label)
        w_held = dgram.w * math.exp(-(now - held.stored_at) / T)
        w_link = pair.w * math.exp(-(now - new_slot.stored_at) / T)
        dgram.w, outcome = swap(w_held, w_link, self.bsm_rng)
        dgram.pauli_frame = pauli_accumulate(dgram.pauli_frame, outcome)
        duration = now - dgram.buffer_start
        dgram.per_hop_buffering.append((node.name, duration))
        del node.buffered[dgram.key]
        if node.aqm is not None:
            node.aqm.record(duration)
        self.recorder.on_buffering(node.name, now, duration)

    def _discard_pair(self, ctrl: LinkController, pair: LinkLevelPair, dgram: QDatagram | None) -> None:
        """Release a pair whose q-datagram no longer exists, plus that q-datagram's leftover qubit."""
        self.pairs_discarded += 1
        for n in ctrl.ends:
            self.nodes[n].banks[ctrl.link_id].release(pair.label)
        if dgram is not None and dgram.link_label is not None and dgram.holder is not None:
            holder = self.nodes[dgram.holder]
            holder.banks[dgram.link_label.link_id].release(dgram.link_label)
            holder.buffered.pop(dgram.key, None)

    # -- continuous-mode cache ---------------------------------------------

    def _store_cached(self, ctrl: LinkController, pair: LinkLevelPair) -> None:
        banks = [self.nodes[n].banks[ctrl.link_id] for n in ctrl.ends]
        if any(b.full for b in banks):
            self.cache_overflow += 1
            return
        for b in banks:
            b.insert(pair.label, None, self.sim.now, pair)
        ctrl.add_cached(pair)

    def _reserve_cached(self, pair: LinkLevelPair, req: LinkRequest) -> None:
        ctrl = self.controllers[pair.label.link_id]
        for n in ctrl.ends:
            self.nodes[n].banks[ctrl.link_id].slots[pair.label].owner = req.seq

    # -- switching ----------------------------------------------------------

    def receive_qdatagram(self, name: str, dgram: QDatagram) -> None:
        node = self.nodes[name]
        label = dgram.link_label
        bank = node.banks[label.link_id]
        if dgram.dropped:
            bank.release(label)
            return
        if label not in bank.slots:
            raise SimulationError(f"{dgram.trace_id}: label {label} does not resolve at {name}")
        if name == dgram.destination:
            self.deliver(node, dgram)
            return
        ctrl = self.next_link(name, dgram.destination)
        if node.aqm is not None and node.aqm.mark_decision():
            dgram.congestion_mark = True
        dgram.buffer_start = self.sim.now
        node.buffered[dgram.key] = dgram
        if node.max_age is not None:
            self.sim.schedule(self.sim.now + node.max_age, self._cutoff, name, dgram, label)
        ctrl.request_pair(name, dgram.key)

    def _cutoff(self, name: str, dgram: QDatagram, label: LinkLevelLabel) -> None:
        node = self.nodes[name]
        if dgram.dropped or dgram.link_label != label or dgram.key not in node.buffered:
            return
        bank = node.banks[label.link_id]
        self._evict(node, bank, label, bank.slots[label], CUTOFF)

    def _evict(self, node: NodeState, bank: MemoryBank, label: LinkLevelLabel, slot: Slot, reason: str) -> None:
        bank.release(label)
        owner = slot.owner
        if owner is None:
            # cached pair: free the partner half too
            ctrl = self.controllers[label.link_id]
            ctrl.drop_cached(slot.pair)
            for n in ctrl.ends:
                self.nodes[n].banks[label.link_id].release(label)
            self.cache_overflow += 1
            return
        dgram = self.registry.get(owner)
        if dgram is None or dgram.dropped:
            return
        now = self.sim.now
        dgram.dropped = True
        self.dropped += 1
        node.buffered.pop(owner, None)
        if dgram.holder is not None:
            # evicted at the source while buffered downstream
            self.nodes[dgram.holder].buffered.pop(owner, None)
        if dgram.source_label == label and node.name == dgram.source:
            dgram.source_label = None
        notice = DropNotice(dgram.flow_id, dgram.seq, node.name, reason, now)
        self.recorder.on_drop(notice)
        self.sim.schedule(now + self.delay[node.name][dgram.source], self.drop_notice_arrived, notice, dgram)

    def drop_notice_arrived(self, notice: DropNotice, dgram: QDatagram) -> None:
        if dgram.source_label is not None:
            self.nodes[dgram.source].banks[dgram.source_label.link_id].release(dgram.source_label)
            dgram.source_label = None
        flow = self.flows.get(notice.flow_id)
        if flow is not None:
            flow.on_drop_notice(notice)

    # -- delivery -----------------------------------------------------------

    def deliver(self, node: NodeState, dgram: QDatagram) -> None:
        now = self.sim.now
        T = self.coherence_time
        held = node.banks[dgram.link_label.link_id].release(dgram.link_label)
        src = self.nodes[dgram.source].banks[dgram.source_label.link_id].release(dgram.source_label)
        if src is None:
            raise SimulationError(f"{dgram.trace_id}: source half missing at delivery")
        storage = (now - held.stored_at) + (now - src.stored_at)
        w_final = dgram.w * math.exp(-storage / T)
        dgram.source_label = None
        del self.registry[dgram.key]
        self.delivered += 1
        self.recorder.on_deliver(dgram, w_final, now)
        ack = QtcpAck(dgram.flow_id, dgram.seq, dgram.congestion_mark, now)
        flow = self.flows.get(dgram.flow_id)
        if flow is not None:
            self.sim.schedule(now + self.delay[node.name][dgram.source], flow.on_ack, ack)

    # -- invariants ---------------------------------------------------------

    def check_invariants(self, *_):
        """Memory conservation: every occupied slot is accounted for."""
        self.invariant_checks += 1
        live_keys = self.registry
        for node in self.nodes.values():
            for bank in node.banks.values():
                bank.check()
                for label, slot in bank.slots.items():
                    if slot.owner is None:
                        continue
                    if slot.owner not in live_keys:
                        raise SimulationError(
                            f"slot {label} at {node.name} owned by finished q-datagram {slot.owner}"
                        )
            for key, d in node.buffered.items():
                if d.dropped or d.holder != node.name:
                    raise SimulationError(f"stale buffered q-datagram {key} at {node.name}")
                if d.link_label not in node.banks[d.link_label.link_id].slots:
                    raise SimulationError(f"buffered {key} at {node.name} has no qubit")
