import pytest

from qnetsim.link import (
    CONTINUOUS,
    OLDEST,
    YOUNGEST,
    LinkController,
    LinkLevelLabel,
    LinkLevelPair,
)
from qnetsim.physics import LinkParams, sample_attempts
from qnetsim.simcore import RngStream, SimulationError, Simulator

HALF = 0.1e-3
W0 = 2.96 / 3


def make(mode="on-demand", policy=YOUNGEST, seed=1):
    sim = Simulator(seed)
    notes = []

    def notify(ctrl, pair, req, from_cache):
        notes.append((sim.now, pair, req, from_cache))

    ctrl = LinkController(sim, 0, ("A", "B"), LinkParams(40.0), W0, HALF, notify,
                          mode=mode, policy=policy, addresses={"A": 0, "B": 1})
    return sim, ctrl, notes


def kinds(sim):
    return [ev.kind for ev in sim._queue]


def test_first_request_schedules_success_after_signalling_and_attempts():
    sim, ctrl, _ = make(seed=9)
    ctrl.request_pair("A", 1)
    sim.run_until(HALF)
    k = sample_attempts(ctrl.q, RngStream(9, "lleg/0"))
    assert kinds(sim) == ["generation_success"]
    assert sim.peek_time() == pytest.approx(HALF + k / 1e5)
    assert ctrl.generation_active


def test_request_on_active_link_is_only_queued():
    sim, ctrl, _ = make()
    ctrl.request_pair("A", 1)
    sim.run_until(HALF)
    ctrl.request_pair("B", 2)
    sim.run_until(2 * HALF)
    assert kinds(sim).count("generation_success") == 1
    assert ctrl.backlog() == 2


def test_duplicate_request_is_an_error():
    sim, ctrl, _ = make()
    ctrl.request_pair("A", 1)
    with pytest.raises(SimulationError, match="duplicate"):
        ctrl.request_pair("A", 1)


def test_unattached_requester_is_an_error():
    sim, ctrl, _ = make()
    with pytest.raises(SimulationError):
        ctrl.request_pair("C", 1)


def _fill(ctrl, sim, reqs):
    for node, seq in reqs:
        ctrl.request_arrived(node, seq)
        sim.now += 1e-6


def test_select_youngest_from_largest_backlog():
    sim, ctrl, _ = make()
    _fill(ctrl, sim, [("A", 1), ("B", 10), ("A", 2), ("A", 3)])
    assert ctrl.select_request().seq == 3


def test_select_oldest_from_largest_backlog():
    sim, ctrl, _ = make(policy=OLDEST)
    _fill(ctrl, sim, [("B", 10), ("A", 1), ("A", 2), ("A", 3)])
    assert ctrl.select_request().seq == 1


def test_equal_backlogs_go_to_lower_address():
    for policy in (YOUNGEST, OLDEST):
        sim, ctrl, _ = make(policy=policy)
        _fill(ctrl, sim, [("B", 10), ("B", 11), ("A", 1), ("A", 2)])
        assert ctrl.select_request().requester == "A"


def test_single_request_selected_under_both_policies():
    for policy in (YOUNGEST, OLDEST):
        sim, ctrl, _ = make(policy=policy)
        _fill(ctrl, sim, [("B", 7)])
        assert ctrl.select_request().seq == 7


def test_select_with_nothing_pending_is_an_error():
    _, ctrl, _ = make()
    with pytest.raises(SimulationError):
        ctrl.select_request()


def test_success_notifies_after_half_delay_and_goes_idle():
    sim, ctrl, notes = make()
    ctrl.request_pair("A", 1)
    sim.run_until(1.0)
    assert len(notes) == 1
    t, pair, req, from_cache = notes[0]
    assert t == pytest.approx(ctrl.last_success_time + HALF)
    assert req.seq == 1 and not from_cache
    assert pair.w == W0
    assert pair.label == LinkLevelLabel(0, 0)
    assert not ctrl.generation_active
    assert ctrl.backlog() == 0


def test_labels_are_never_reused():
    sim, ctrl, notes = make()
    for i in range(30):
        ctrl.request_pair("A" if i % 2 else "B", i)
    sim.run_until(1.0)
    labels = [n[1].label for n in notes]
    assert len(labels) == len(set(labels)) == 30
    assert [n[2].seq for n in notes] != []


def test_continuous_mode_caches_without_requests():
    sim, ctrl, notes = make(mode=CONTINUOUS)
    ctrl.start()
    sim.run_until(2e-3)
    assert notes and all(req is None for _, _, req, _ in notes)
    assert ctrl.generation_active
    assert ctrl.generated == ctrl.cached


def test_cached_pair_serves_request_immediately():
    sim, ctrl, notes = make(mode=CONTINUOUS)
    reserved = []
    ctrl.reserve_cached = lambda pair, req: reserved.append((pair, req))
    pair = LinkLevelPair(LinkLevelLabel(0, 99), W0, 0.0)
    ctrl.add_cached(pair)
    ctrl.request_pair("B", 5)
    sim.run_until(HALF)
    assert reserved and reserved[0][1].seq == 5
    assert not ctrl.cache
    sim.run_until(2 * HALF)
    assert any(n[3] and n[1] is pair for n in notes)


def test_on_demand_without_requests_never_generates():
    sim, ctrl, notes = make()
    ctrl.start()
    sim.run_until(1.0)
    assert ctrl.generated == 0 and not notes and sim.events_fired == 0


def test_every_generated_pair_is_accounted_for():
    sim, ctrl, notes = make(mode=CONTINUOUS)
    ctrl.start()
    for i in range(40):
        sim.schedule(i * 1e-4, ctrl.request_pair, "A", i)
    sim.run_until(0.05)
    assert ctrl.generated == ctrl.assigned + ctrl.cached
    in_transit = sum(1 for ev in sim._queue if ev.kind == "notify")
    assert ctrl.generated == len(notes) + in_transit


def test_saturated_interval_mean():
    sim, ctrl, _ = make(seed=3)
    n = 20_000
    times = []
    orig = ctrl.generation_success

    def spy():
        times.append(sim.now)
        orig()

    ctrl.generation_success = spy
    for i in range(n):
        ctrl.request_arrived("A", i)
    sim.run_until(10.0)
    gaps = [b - a for a, b in zip(times, times[1:])]
    assert len(times) == n
    assert sum(gaps) / len(gaps) == pytest.approx(1 / ctrl.q / 1e5, rel=0.02)
