import pytest

from qnetsim import config
from qnetsim.config import ConfigError

from conftest import CHAIN, chain_config

GOOD = """\
[run]
duration_s = 0.1

[topology.chain]
switches = 2
link_length_km = 40.0

[traffic]
flow_count = 3
demand = "poisson"
load = 0.9
cc = "aimd"
"""


def write(tmp_path, text, name="s.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_defaults_are_filled(tmp_path):
    cfg = config.load(write(tmp_path, GOOD))
    assert cfg["physics"]["eta"] == 0.4
    assert cfg["topology"]["nodes"] == ["A", "s1", "s2", "B"]
    assert [f["id"] for f in cfg["flows"]] == [0, 1, 2]
    assert cfg["flows"][0]["load"] == pytest.approx(0.3)
    assert cfg["aqm"]["enabled"] is False


def test_effective_config_round_trips():
    cfg = chain_config(traffic={"flow_count": 2, "demand": "infinite", "cc": "aimd+aqm"})
    again = config.resolve(config.loads(config.dumps(cfg)))
    assert again == cfg


def test_zero_length_link_is_rejected_with_line(tmp_path):
    text = GOOD.replace("link_length_km = 40.0", "link_length_km = 0.0")
    with pytest.raises(ConfigError, match="positive length_km") as info:
        config.load(write(tmp_path, text))
    assert info.value.line == 6
    assert ":6:" in str(info.value)


def test_malformed_toml_reports_line(tmp_path):
    text = GOOD.replace("switches = 2", "switches = = 2")
    with pytest.raises(ConfigError, match="malformed TOML") as info:
        config.load(write(tmp_path, text))
    assert info.value.line == 5


@pytest.mark.parametrize("key,value,match", [
    ("bogus.x", 1, "unknown section"),
    ("topology.memory_per_interface", 0, "memory_per_interface"),
    ("physics.eta", 1.5, "eta"),
    ("physics.initial_fidelity", 0.2, "initial_fidelity"),
    ("run.warmup_s", 5.0, "warmup_s"),
    ("transport.cc", "reno", "transport.cc"),
    ("aqm.alpha", 1.0, "alpha > beta"),
    ("physics.coherence_time_s", "long", "invalid value"),
])
def test_invalid_values(key, value, match):
    with pytest.raises(ConfigError, match=match):
        chain_config({key: value}, traffic={"flow_count": 1, "demand": "infinite"})


def test_unknown_node_in_link():
    raw = {"topology": {"nodes": ["A", "B"], "end_nodes": ["A", "B"],
                        "links": [{"a": "A", "b": "C", "length_km": 1.0}]},
           "traffic": {"demand": "infinite"}}
    with pytest.raises(ConfigError, match="unknown node"):
        config.resolve(raw)


def test_flow_endpoint_must_be_end_node():
    with pytest.raises(ConfigError, match="end node"):
        chain_config(flows=[{"source": "s1", "demand": "infinite"}])


def test_infinite_demand_needs_congestion_control():
    with pytest.raises(ConfigError, match="congestion control"):
        chain_config(traffic={"demand": "infinite", "cc": "off"})


def test_missing_flows():
    with pytest.raises(ConfigError, match="no flows"):
        config.resolve(dict(CHAIN))


def test_sweep_parameter_shorthand():
    cfg = chain_config(traffic={"demand": "infinite"},
                       sweep={"parameter": "aqm.target_buffering_s", "values": [1e-3, 2e-3]})
    assert cfg["sweep"]["grid"] == {"aqm.target_buffering_s": [1e-3, 2e-3]}
    assert cfg["sweep"]["seeds_per_point"] == 1


def test_presets_validate():
    from importlib import resources

    from qnetsim.cli import preset_names

    assert set(preset_names()) >= {"fig4_chain", "fig5_sweep"}
    for name in preset_names():
        text = resources.files("qnetsim.presets").joinpath(f"{name}.toml").read_text()
        cfg = config.resolve(config.loads(text), source=name, text=text)
        assert len(cfg["flows"]) >= 6
