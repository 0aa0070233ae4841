"""Build a simulation from an effective configuration and run it."""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .aqm import PIController
from .metrics import Recorder, RunSummary, summarize
from .network import Network
from .physics import LinkParams, NoiseParams
from .simcore import Simulator
from .transport import BATCH, INFINITE, Flow, FlowSpec


@dataclass
class RunResult:
    config: dict
    sim: Simulator
    network: Network
    flows: list[Flow]
    recorder: Recorder
    summary: RunSummary

    @property
    def conservation(self) -> tuple[int, int, int, int]:
        net = self.network
        return net.injected, net.delivered, net.dropped, net.in_flight()

    def mean_buffering(self, start: float, end: float | None = None) -> dict[str, float | None]:
        """Mean completed buffering time per switch over ``[start, end)``."""
        end = self.config["run"]["duration_s"] if end is None else end
        out = {}
        for name, node in self.network.nodes.items():
            if node.is_end:
                continue
            samples = [d for t, d in self.recorder.buffering.get(name, ()) if start <= t < end]
            out[name] = float(np.mean(samples)) if samples else None
        return out


def bottleneck_rate(cfg: dict, network: Network, source: str, destination: str) -> float:
    """Mean LLEG rate of the slowest link on the route."""
    rates = []
    node = source
    while node != destination:
        ctrl = network.next_link(node, destination)
        rates.append(ctrl.params.mean_rate)
        node = ctrl.other_end(node)
    return min(rates)


def build(cfg: dict, seed: int | None = None, trace: bool = False):
    cfg = copy.deepcopy(cfg)
    if seed is not None:
        cfg["run"]["seed"] = int(seed)
    sim = Simulator(cfg["run"]["seed"], trace=trace)
    recorder = Recorder()
    ph = cfg["physics"]
    topo = cfg["topology"]
    noise = NoiseParams(ph["coherence_time_s"], ph["initial_fidelity"])
    physics = {k: ph[k] for k in ("eta", "attempt_freq_hz", "attenuation_length_km")}
    links = [(l["a"], l["b"], float(l["length_km"])) for l in topo["links"]]
    network = Network(
        sim, topo["nodes"], set(topo["end_nodes"]), links, topo["memory_per_interface"],
        physics, noise, recorder,
        link_mode=cfg["link"]["mode"], link_policy=cfg["link"]["policy"],
        light_speed_km_s=ph["light_speed_km_s"],
        max_age=cfg["network"].get("max_age_s"),
    )
    for l, ctrl in zip(topo["links"], network.controllers.values()):
        ctrl.mode = l.get("mode", ctrl.mode)
        ctrl.policy = l.get("policy", ctrl.policy)

    aqm = cfg["aqm"]
    if aqm["enabled"]:
        def make(name):
            return PIController(
                aqm["target_buffering_s"], aqm["alpha"], aqm["beta"], aqm["sample_period_s"],
                rng=sim.rng(f"aqm/{name}"),
            )
        network.enable_aqm(make)

    tr = cfg["transport"]
    flows = []
    for f in cfg["flows"]:
        mu = bottleneck_rate(cfg, network, f["source"], f["destination"])
        schedule = []
        rate = f.get("rate_hz", 0.0)
        if "load" in f:
            rate = f["load"] * mu
        if "load_schedule" in f:
            schedule = [(float(t), rho * mu) for t, rho in f["load_schedule"]]
        spec = FlowSpec(
            flow_id=f["id"], source=f["source"], destination=f["destination"], demand=f["demand"],
            rate_hz=rate, rate_schedule=schedule, batch_size=int(f.get("batch_size", 0)),
            start_time=float(f["start_s"]), cc=f["cc"],
        )
        flows.append(Flow(
            sim, network, spec, recorder,
            initial_window=tr["initial_window"], ssthresh=tr["initial_ssthresh"],
            admission_bound=tr.get("admission_bound"), max_window=tr.get("max_window"),
        ))
    return cfg, sim, network, flows, recorder


def _aqm_tick(sim: Simulator, network: Network, recorder: Recorder, name: str) -> None:
    ctrl = network.nodes[name].aqm
    avg, count = ctrl.update()
    recorder.on_aqm(sim.now, name, ctrl.p, avg, count)
    sim.schedule(sim.now + ctrl.sample_period, _aqm_tick, sim, network, recorder, name)


def run(cfg: dict, seed: int | None = None, trace: bool = False, check_invariants: bool | None = None) -> RunResult:
    cfg, sim, network, flows, recorder = build(cfg, seed, trace)
    if check_invariants is None:
        check_invariants = cfg["run"].get("check_invariants", False)
    if check_invariants:
        sim.post_event_hooks.append(network.check_invariants)
    network.start()
    for node in network.nodes.values():
        if node.aqm is not None:
            sim.schedule(node.aqm.sample_period, _aqm_tick, sim, network, recorder, node.name)
    for flow in flows:
        flow.start()
    duration = cfg["run"]["duration_s"]
    sim.run_until(duration)
    regimes = [(r["name"], r["start_s"], r["end_s"]) for r in cfg["run"]["regimes"]]
    summary = summarize(
        recorder.deliveries, recorder.drops, cfg["run"]["warmup_s"], duration,
        injected=network.injected, regimes=regimes,
    )
    return RunResult(cfg, sim, network, flows, recorder, summary)


def is_finite_batch(cfg: dict) -> bool:
    return all(f["demand"] == BATCH for f in cfg["flows"])


def has_infinite_demand(cfg: dict) -> bool:
    return any(f["demand"] == INFINITE for f in cfg["flows"])
