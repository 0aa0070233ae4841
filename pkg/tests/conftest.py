import copy

import pytest
from hypothesis import settings

from qnetsim import config

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


CHAIN = {
    "run": {"duration_s": 0.2},
    "topology": {"chain": {"switches": 3, "link_length_km": 40.0}},
}


def chain_config(overrides: dict | None = None, **sections) -> dict:
    """Resolved config for the 5-node chain; ``overrides`` uses dotted keys."""
    raw = copy.deepcopy(CHAIN)
    for name, table in sections.items():
        raw[name] = table
    for k, v in (overrides or {}).items():
        config.set_dotted(raw, k, v)
    return config.resolve(raw)


@pytest.fixture
def make_config():
    return chain_config


# (criterion number, passed, detail) rows from the acceptance suite
ACCEPTANCE: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}: {detail}")
