import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from qnetsim.physics import (
    ConfigurationError,
    LinkParams,
    NoiseParams,
    classical_delay,
    decohere,
    fidelity_to_werner,
    link_success_prob,
    pauli_accumulate,
    sample_attempts,
    sample_lleg_interval,
    swap,
    werner_to_fidelity,
)

unit = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)
W0 = 2.96 / 3


def test_transmission_probability_40km():
    assert LinkParams(40.0).transmission_prob == pytest.approx(0.4029, abs=5e-5)


def test_success_probability_and_rate_40km():
    p = LinkParams(40.0, eta=0.4)
    assert p.success_prob == pytest.approx(0.06493, abs=5e-6)
    assert p.mean_rate == pytest.approx(6493, abs=0.5)


def test_lossless_limit():
    assert link_success_prob(LinkParams(1e-12, eta=1.0)) == pytest.approx(1.0)


@pytest.mark.parametrize("kw", [{"length_km": 0}, {"length_km": 1, "eta": 0}, {"length_km": 1, "eta": 1.5},
                                {"length_km": 1, "attempt_freq_hz": 0}])
def test_link_params_validation(kw):
    with pytest.raises(ConfigurationError):
        LinkParams(**kw)


def test_certain_success_gives_one_attempt():
    rng = random.Random(0)
    assert all(sample_attempts(1.0, rng) == 1 for _ in range(100))
    assert sample_lleg_interval(1.0, 1e5, rng) == pytest.approx(10e-6)


@pytest.mark.parametrize("q", [0.0, -0.1, 1.5])
def test_invalid_success_probability(q):
    with pytest.raises(ConfigurationError):
        sample_attempts(q, random.Random(0))


@pytest.fixture(scope="module")
def geometric_samples():
    rng = random.Random(2024)
    q = LinkParams(40.0).success_prob
    return q, np.fromiter((sample_attempts(q, rng) for _ in range(1_000_000)), dtype=np.int64)


def test_geometric_mean(geometric_samples):
    q, k = geometric_samples
    assert k.min() >= 1
    assert k.mean() == pytest.approx(1 / q, rel=0.01)


def test_geometric_first_attempt_mass(geometric_samples):
    q, k = geometric_samples
    n = k.size
    sigma = math.sqrt(q * (1 - q) / n)
    assert abs(np.mean(k == 1) - q) < 3 * sigma


def test_geometric_chi_squared(geometric_samples):
    q, k = geometric_samples
    kmax = 80
    observed = np.bincount(np.minimum(k, kmax), minlength=kmax + 1)[1:]
    pmf = stats.geom.pmf(np.arange(1, kmax), q)
    expected = np.append(pmf, 1 - pmf.sum()) * k.size
    assert stats.chisquare(observed, expected).pvalue > 0.01


def test_werner_conversions():
    assert fidelity_to_werner(1.0) == 1.0
    assert fidelity_to_werner(0.25) == 0.0
    assert fidelity_to_werner(0.99) == pytest.approx(0.986667, abs=5e-7)


@pytest.mark.parametrize("f", [0.2, 1.01, -1.0])
def test_fidelity_out_of_range(f):
    with pytest.raises(ConfigurationError):
        fidelity_to_werner(f)


@given(st.floats(min_value=0.25, max_value=1.0))
def test_werner_round_trip(f):
    assert werner_to_fidelity(fidelity_to_werner(f)) == pytest.approx(f, abs=1e-15)


def test_decohere_examples():
    assert decohere(0.7, 0.0, 0.1) == 0.7
    assert decohere(0.7, 0.1, 0.1) == pytest.approx(0.7 / math.e)
    assert decohere(W0, 1e-3, 0.1) == pytest.approx(0.97685, abs=5e-6)
    with pytest.raises(ValueError):
        decohere(0.5, -1e-9, 0.1)


@given(unit, st.floats(0, 1), st.floats(0, 1), st.floats(1e-3, 10))
def test_decoherence_composes(w, a, b, T):
    assert decohere(w, a + b, T) == pytest.approx(decohere(decohere(w, a, T), b, T), abs=1e-12)


@given(unit, st.floats(0, 100), st.floats(1e-3, 10))
def test_decoherence_stays_in_range(w, t, T):
    out = decohere(w, t, T)
    assert 0.0 <= out <= w
    assert 0.25 <= werner_to_fidelity(out) <= 1.0


def test_swap_examples():
    rng = random.Random(1)
    assert swap(0.8, 1.0, rng)[0] == 0.8
    assert swap(W0, W0, rng)[0] == pytest.approx(0.97351, abs=5e-6)
    w = W0
    for _ in range(3):
        w, _ = swap(w, W0, rng)
    # exact oracle; the hand-rounded figures are 0.94776 and 0.96082
    assert w == pytest.approx((2.96 / 3) ** 4, abs=1e-15)
    assert w == pytest.approx(0.947724, abs=5e-7)
    assert werner_to_fidelity(w) == pytest.approx(0.960793, abs=5e-7)


@given(st.lists(unit, min_size=1, max_size=8), st.randoms(use_true_random=False))
def test_swap_order_does_not_matter(ws, shuffler):
    rng = random.Random(0)

    def chain(order):
        w = 1.0
        for x in order:
            w, _ = swap(w, x, rng)
        return w

    other = list(ws)
    shuffler.shuffle(other)
    assert chain(ws) == pytest.approx(chain(other), abs=1e-12)
    assert 0.0 <= chain(ws) <= 1.0


def test_bsm_outcomes_uniform():
    rng = random.Random(5)
    n = 1_000_000
    counts = np.bincount([swap(1.0, 1.0, rng)[1] for _ in range(n)], minlength=4)
    sigma = math.sqrt(n * 0.25 * 0.75)
    assert counts.size == 4
    assert np.all(np.abs(counts - n / 4) < 3 * sigma)


def test_pauli_examples():
    assert pauli_accumulate(0b00, 0b11) == 0b11
    for order in itertools.permutations([0b01, 0b10, 0b01]):
        frame = 0
        for o in order:
            frame = pauli_accumulate(frame, o)
        assert frame == 0b10
    assert pauli_accumulate(pauli_accumulate(0b01, 0b11), 0b11) == 0b01


def test_pauli_order_independence_exhaustive():
    outcomes = range(4)
    for n in range(1, 5):
        for multiset in itertools.product(outcomes, repeat=n):
            results = set()
            for order in itertools.permutations(multiset):
                frame = 0
                for o in order:
                    frame = pauli_accumulate(frame, o)
                results.add(frame)
            assert len(results) == 1


def test_noise_params():
    assert NoiseParams().initial_werner == pytest.approx(W0)
    with pytest.raises(ConfigurationError):
        NoiseParams(coherence_time_s=0)
    with pytest.raises(ConfigurationError):
        NoiseParams(initial_fidelity=0.25)


def test_classical_delay():
    assert classical_delay(20.0) == pytest.approx(0.1e-3)
    assert classical_delay(160.0) == pytest.approx(0.8e-3)
