import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qnetsim.aqm import DEFAULT_ALPHA, DEFAULT_BETA, PIController
from qnetsim.scenario import run

from conftest import chain_config

TGT = 0.5e-3


def test_zero_error_is_a_fixed_point():
    c = PIController(TGT, 2000, 1000, p=0.3)
    c.record(TGT)
    c.update()
    assert c.p == pytest.approx(0.3)


def test_clamp_example():
    c = PIController(TGT, 2000, 1000, p=0.10)
    c.record(1.0e-3)
    t_new, n = c.update()
    assert (t_new, n) == (1.0e-3, 1)
    assert c.p == 1.0


def test_constant_error_ramps_by_alpha_minus_beta():
    c = PIController(TGT, 200, 150, p=0.0)
    e = 0.2e-3
    ps = []
    for _ in range(5):
        c.record(TGT + e)
        c.update()
        ps.append(c.p)
    steps = [b - a for a, b in zip(ps, ps[1:])]
    assert ps[0] == pytest.approx(200 * e)
    assert steps == pytest.approx([(200 - 150) * e] * 4)


def test_empty_period_carries_previous_average():
    c = PIController(TGT, 200, 150)
    c.record(0.8e-3)
    c.update()
    p = c.p
    t_new, n = c.update()
    assert n == 0 and t_new == 0.8e-3
    # carried error e keeps ramping by (alpha - beta) e
    assert c.p == pytest.approx(p + 50 * 0.3e-3)


def test_period_average():
    c = PIController(TGT, 2, 1)
    for d in (1e-3, 2e-3, 3e-3):
        c.record(d)
    assert c.update() == (pytest.approx(2e-3), 3)


@pytest.mark.parametrize("alpha,beta", [(1, 1), (1, 2), (1, 0), (0, -1)])
def test_gain_ordering_enforced(alpha, beta):
    with pytest.raises(ValueError):
        PIController(TGT, alpha, beta)


def test_defaults_satisfy_gain_ordering():
    assert DEFAULT_ALPHA > DEFAULT_BETA > 0


@given(st.lists(st.floats(0, 0.05, allow_nan=False), max_size=100),
       st.floats(1, 1e4), st.floats(0.01, 0.99))
def test_probability_stays_in_unit_interval(durations, alpha, ratio):
    c = PIController(TGT, alpha, alpha * ratio)
    for d in durations:
        c.record(d)
        c.update()
        assert 0.0 <= c.p <= 1.0


def test_mark_decision_extremes():
    rng = random.Random(0)
    c = PIController(TGT, 2, 1, rng=rng, p=0.0)
    assert not any(c.mark_decision() for _ in range(1000))
    c.p = 1.0
    assert all(c.mark_decision() for _ in range(1000))


def test_mark_rate():
    c = PIController(TGT, 2, 1, rng=random.Random(4), p=0.3)
    n = 100_000
    hits = sum(c.mark_decision() for _ in range(n))
    assert abs(hits / n - 0.3) < 3 * math.sqrt(0.3 * 0.7 / n)


def test_pinned_zero_probability_matches_disabled_aqm():
    base = {"run.duration_s": 0.15}
    traffic = {"flow_count": 6, "demand": "infinite"}
    off = run(chain_config(base, traffic={**traffic, "cc": "aimd"}))
    # a huge target keeps p at 0 forever
    pinned = run(chain_config({**base, "aqm.target_buffering_s": 1e3}, traffic={**traffic, "cc": "aimd+aqm"}))
    assert pinned.network.nodes["s1"].aqm is not None
    assert all(p == 0.0 for _, _, p, _, _ in pinned.recorder.aqm_trace)

    def key(r):
        return [(d.flow_id, d.seq, d.w_final, d.delivered_at, d.pauli_frame) for d in r.recorder.deliveries]

    assert key(off) == key(pinned)
    assert off.recorder.window_trace == pinned.recorder.window_trace
