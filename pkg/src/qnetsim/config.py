"""Scenario configuration: TOML in, validated plain dict out.

The effective configuration is a nested dict with every default filled in.
It is echoed next to the outputs and can be fed back unchanged.
"""

from __future__ import annotations

import copy
import re
import sys
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import tomli_w

from .link import MODES, POLICIES
from .transport import CC_AIMD_AQM, CC_MODES, DEMANDS, INFINITE, POISSON

DEFAULTS: dict[str, Any] = {
    "run": {"duration_s": 1.0, "seed": 1, "warmup_s": 0.0, "regimes": [], "check_invariants": False},
    "physics": {
        "eta": 0.4,
        "attempt_freq_hz": 1.0e5,
        "coherence_time_s": 0.1,
        "initial_fidelity": 0.99,
        "attenuation_length_km": 44.0,
        "light_speed_km_s": 2.0e5,
    },
    "topology": {"memory_per_interface": 50},
    "link": {"mode": "on-demand", "policy": "youngest-largest-backlog"},
    "network": {},
    "aqm": {"target_buffering_s": 0.5e-3, "alpha": 6.0, "beta": 5.4, "sample_period_s": 1.0e-3},
    "transport": {"cc": "aimd", "initial_window": 1, "initial_ssthresh": 64},
    "flows": [],
}


class ConfigError(ValueError):
    """Invalid scenario; ``line`` points into the source file when known."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path:
            where = f"{path}:{line}: " if line else f"{path}: "
        super().__init__(where + message)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _line_of(text: str | None, key: str) -> int | None:
    if not text:
        return None
    leaf = key.split(".")[-1]
    pattern = re.compile(rf'^\s*"?{re.escape(leaf)}"?\s*=|[{{,]\s*{re.escape(leaf)}\s*=', re.M)
    m = pattern.search(text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def set_dotted(cfg: dict, dotted: str, value) -> None:
    node = cfg
    parts = dotted.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def get_dotted(cfg: dict, dotted: str, default=None):
    node = cfg
    for p in dotted.split("."):
        if not isinstance(node, dict) or p not in node:
            return default
        node = node[p]
    return node


def load_text(path: str | Path) -> tuple[dict, str]:
    path = Path(path)
    text = path.read_text()
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed TOML: {exc}", str(path), int(m.group(1)) if m else None) from None
    return raw, text


def load(path: str | Path, overrides: dict | None = None) -> dict:
    raw, text = load_text(path)
    if overrides:
        raw = copy.deepcopy(raw)
        for k, v in overrides.items():
            set_dotted(raw, k, v)
    return resolve(raw, source=str(path), text=text)


def resolve(raw: dict, source: str | None = None, text: str | None = None) -> dict:
    """Fill defaults, expand shorthands and validate."""
    try:
        return _resolve(raw, source, text)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError, AttributeError) as exc:
        # wrong value types surface here, e.g. a string where a number belongs
        raise ConfigError(f"invalid value: {type(exc).__name__}: {exc}", source) from None


def _resolve(raw: dict, source: str | None, text: str | None) -> dict:
    def fail(msg, key=""):
        # key may list alternatives separated by "|"; the first found wins
        lines = [_line_of(text, k) for k in key.split("|") if k]
        raise ConfigError(msg, source, next((n for n in lines if n), None))

    known = set(DEFAULTS) | {"traffic", "sweep"}
    for k in raw:
        if k not in known:
            fail(f"unknown section [{k}]", k)
    cfg = _merge(DEFAULTS, {k: v for k, v in raw.items() if k != "traffic"})

    topo = cfg["topology"]
    chain = topo.pop("chain", None)
    if chain is not None:
        n_sw = int(chain.get("switches", 3))
        length = chain.get("link_length_km", 40.0)
        names = ["A"] + [f"s{i + 1}" for i in range(n_sw)] + ["B"]
        topo.setdefault("nodes", names)
        topo.setdefault("end_nodes", [names[0], names[-1]])
        topo.setdefault("links", [{"a": a, "b": b, "length_km": length} for a, b in zip(names, names[1:])])
    for key in ("nodes", "end_nodes", "links"):
        if key not in topo:
            fail(f"topology.{key} is required (or use [topology.chain])")
    nodes = topo["nodes"]
    if len(set(nodes)) != len(nodes):
        fail("duplicate node names", "nodes")
    for n in topo["end_nodes"]:
        if n not in nodes:
            fail(f"end node {n!r} is not a declared node", "end_nodes")
    cap = topo["memory_per_interface"]
    caps = cap.values() if isinstance(cap, dict) else [cap]
    for c in caps:
        if not isinstance(c, int) or c < 1:
            fail("memory_per_interface must be an integer >= 1", "memory_per_interface")
    seen = set()
    for link in topo["links"]:
        a, b = link.get("a"), link.get("b")
        if a not in nodes or b not in nodes:
            fail(f"link {a}-{b} references an unknown node", "links")
        if a == b or frozenset((a, b)) in seen:
            fail(f"link {a}-{b} is a self-loop or duplicate", "links")
        seen.add(frozenset((a, b)))
        if not float(link.get("length_km", 0)) > 0:
            fail(f"link {a}-{b} must have a positive length_km", "length_km|link_length_km")
        if link.get("mode", cfg["link"]["mode"]) not in MODES:
            fail(f"link mode must be one of {MODES}", "mode")
        if link.get("policy", cfg["link"]["policy"]) not in POLICIES:
            fail(f"link policy must be one of {POLICIES}", "policy")

    ph = cfg["physics"]
    if not 0 < ph["eta"] <= 1:
        fail("physics.eta must be in (0, 1]", "eta")
    for key in ("attempt_freq_hz", "coherence_time_s", "attenuation_length_km", "light_speed_km_s"):
        if not ph[key] > 0:
            fail(f"physics.{key} must be positive", key)
    if not 0.25 < ph["initial_fidelity"] <= 1:
        fail("physics.initial_fidelity must be in (1/4, 1]", "initial_fidelity")

    run = cfg["run"]
    if not run["duration_s"] > 0:
        fail("run.duration_s must be positive", "duration_s")
    if not 0 <= run["warmup_s"] < run["duration_s"]:
        fail("run.warmup_s must be in [0, duration_s)", "warmup_s")

    tr = cfg["transport"]
    if tr["cc"] not in CC_MODES:
        fail(f"transport.cc must be one of {CC_MODES}", "cc")
    if tr["initial_window"] < 1 or tr["initial_ssthresh"] < 1:
        fail("initial window and ssthresh must be >= 1", "initial_window")
    if "max_window" in tr and not tr["max_window"] >= tr["initial_window"]:
        fail("transport.max_window must be >= initial_window", "max_window")
    if "admission_bound" in tr and tr["admission_bound"] < 1:
        fail("transport.admission_bound must be >= 1 (omit it for unbounded)", "admission_bound")

    traffic = raw.get("traffic")
    if traffic is not None:
        cfg["traffic"] = copy.deepcopy(traffic)
        flows = list(cfg["flows"])
        count = int(traffic.get("flow_count", 1))
        if count < 1:
            fail("traffic.flow_count must be >= 1", "flow_count")
        for i in range(count):
            f = {k: v for k, v in traffic.items() if k != "flow_count"}
            # traffic-level load is aggregate; each flow carries an equal share
            if "load" in f:
                f["load"] = f["load"] / count
            if "load_schedule" in f:
                f["load_schedule"] = [[t, rho / count] for t, rho in f["load_schedule"]]
            flows.append(f)
        cfg["flows"] = flows
    if not cfg["flows"]:
        fail("no flows configured ([[flows]] or [traffic])")
    for i, f in enumerate(cfg["flows"]):
        f.setdefault("id", i)
        f.setdefault("source", topo["end_nodes"][0])
        f.setdefault("destination", topo["end_nodes"][-1])
        f.setdefault("demand", POISSON)
        f.setdefault("cc", tr["cc"])
        f.setdefault("start_s", 0.0)
        if not isinstance(f["id"], int) or isinstance(f["id"], bool):
            fail("flow ids must be integers", "id")
        for end in (f["source"], f["destination"]):
            if end not in topo["end_nodes"]:
                fail(f"flow endpoint {end!r} is not an end node", "source")
        if f["source"] == f["destination"]:
            fail("flow source equals destination", "destination")
        if f["demand"] not in DEMANDS:
            fail(f"flow demand must be one of {DEMANDS}", "demand")
        if f["cc"] not in CC_MODES:
            fail(f"flow cc must be one of {CC_MODES}", "cc")
        if f["demand"] == POISSON and not any(k in f for k in ("rate_hz", "load", "load_schedule")):
            fail("poisson flows need rate_hz, load or load_schedule", "demand")
        if f.get("rate_hz", 0) < 0 or f.get("load", 0) < 0 or any(r < 0 for _, r in f.get("load_schedule", ())):
            fail("request rates and loads must be non-negative", "load")
        if f["demand"] == "batch" and not int(f.get("batch_size", 0)) >= 1:
            fail("batch flows need batch_size >= 1", "batch_size")
        if f["demand"] == INFINITE and f["cc"] == "off":
            fail("infinite demand requires congestion control", "demand")
    if len({f["id"] for f in cfg["flows"]}) != len(cfg["flows"]):
        fail("duplicate flow ids", "id")
    if traffic is not None:
        # ids are assigned, so the expanded list is the effective form
        cfg.pop("traffic")

    aqm = cfg["aqm"]
    aqm.setdefault("enabled", any(f["cc"] == CC_AIMD_AQM for f in cfg["flows"]))
    if not aqm["alpha"] > aqm["beta"] > 0:
        fail("aqm gains need alpha > beta > 0", "alpha")
    if not aqm["target_buffering_s"] > 0 or not aqm["sample_period_s"] > 0:
        fail("aqm target and sample period must be positive", "target_buffering_s")
    for r in run["regimes"]:
        if not {"name", "start_s", "end_s"} <= set(r):
            fail("each regime needs name, start_s, end_s", "regimes")
    if "sweep" in cfg:
        sw = cfg["sweep"]
        if "parameter" in sw:
            sw.setdefault("grid", {})[sw.pop("parameter")] = sw.pop("values")
        sw.setdefault("seeds_per_point", 1)
        sw.setdefault("first_seed", 1)
        if not sw.get("grid"):
            fail("sweep needs parameter/values or a [sweep.grid] table", "sweep")
    return cfg


def dumps(cfg: dict) -> str:
    return tomli_w.dumps(cfg)


def loads(text: str) -> dict:
    return tomllib.loads(text)
