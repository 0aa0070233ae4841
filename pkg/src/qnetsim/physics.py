"""Werner-state bookkeeping, memory decoherence and the LLEG success model.

Fidelity is tracked through the Werner parameter ``w`` with
``F = (3w + 1) / 4``.  Under ideal swaps and independent single-qubit
depolarizing noise every operation acts multiplicatively on ``w``, so a
delivered pair's state is a product of link parameters and per-qubit decay
factors.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

FIBER_LIGHT_SPEED_KM_S = 2.0e5
DEFAULT_ATTENUATION_LENGTH_KM = 44.0


class ConfigurationError(ValueError):
    """Invalid physical or scenario parameter."""


@dataclass(frozen=True)
class LinkParams:
    length_km: float
    eta: float = 0.4
    attempt_freq_hz: float = 1.0e5
    attenuation_length_km: float = DEFAULT_ATTENUATION_LENGTH_KM

    def __post_init__(self):
        if not self.length_km > 0:
            raise ConfigurationError(f"link length must be positive, got {self.length_km}")
        if not 0 < self.eta <= 1:
            raise ConfigurationError(f"eta must be in (0, 1], got {self.eta}")
        if not self.attempt_freq_hz > 0:
            raise ConfigurationError("attempt frequency must be positive")
        if not self.attenuation_length_km > 0:
            raise ConfigurationError("attenuation length must be positive")

    @property
    def transmission_prob(self) -> float:
        return math.exp(-self.length_km / self.attenuation_length_km)

    @property
    def success_prob(self) -> float:
        return link_success_prob(self)

    @property
    def mean_rate(self) -> float:
        """Mean pair generation rate in pairs per second."""
        return self.success_prob * self.attempt_freq_hz


@dataclass(frozen=True)
class NoiseParams:
    coherence_time_s: float = 0.1
    initial_fidelity: float = 0.99

    def __post_init__(self):
        if not self.coherence_time_s > 0:
            raise ConfigurationError("coherence time must be positive")
        if not 0.25 < self.initial_fidelity <= 1:
            raise ConfigurationError(
                f"initial fidelity must be in (1/4, 1], got {self.initial_fidelity}"
            )

    @property
    def initial_werner(self) -> float:
        return fidelity_to_werner(self.initial_fidelity)


def link_success_prob(params: LinkParams) -> float:
    """Per-attempt success probability ``eta * exp(-L/L_att)**2``."""
    q_l = math.exp(-params.length_km / params.attenuation_length_km)
    return params.eta * q_l * q_l


def sample_attempts(q: float, rng: random.Random) -> int:
    """Number of attempts up to and including the first success.

    Inverse CDF of Geometric(q) on a single uniform draw.
    """
    if not 0 < q <= 1:
        raise ConfigurationError(f"success probability must be in (0, 1], got {q}")
    u = rng.random()
    if q == 1.0:
        return 1
    # 1 - u lies in (0, 1], so the log is finite.
    return int(math.log(1.0 - u) / math.log1p(-q)) + 1


def sample_lleg_interval(q: float, f_a: float, rng: random.Random) -> float:
    return sample_attempts(q, rng) / f_a


def fidelity_to_werner(fidelity: float) -> float:
    if not 0.25 <= fidelity <= 1.0:
        raise ConfigurationError(f"fidelity must be in [1/4, 1], got {fidelity}")
    return (4.0 * fidelity - 1.0) / 3.0


def werner_to_fidelity(w: float) -> float:
    return (3.0 * w + 1.0) / 4.0


def decohere(w: float, storage_time: float, coherence_time: float) -> float:
    """Depolarize one stored qubit for ``storage_time`` seconds."""
    if storage_time < 0:
        raise ValueError(f"negative storage time {storage_time}")
    return w * math.exp(-storage_time / coherence_time)


def swap(w1: float, w2: float, rng: random.Random) -> tuple[float, int]:
    """Ideal entanglement swap: Werner product and a uniform 2-bit BSM outcome."""
    return w1 * w2, rng.getrandbits(2)


def pauli_accumulate(frame: int, outcome: int) -> int:
    return (frame ^ outcome) & 0b11


def classical_delay(distance_km: float, light_speed_km_s: float = FIBER_LIGHT_SPEED_KM_S) -> float:
    return distance_km / light_speed_km_s
