"""Proportional-integral marking controller for quantum switches."""

from __future__ import annotations

import random

# Calibrated on the 12-flow chain scenario; units are probability per
# second of buffering-time error.
DEFAULT_ALPHA = 6.0
DEFAULT_BETA = 5.4
DEFAULT_SAMPLE_PERIOD = 1.0e-3


class PIController:
    """Keeps the mean q-datagram buffering time near ``target``.

    Buffering durations are reported with :meth:`record` when a q-datagram
    leaves the switch; :meth:`update` closes a sampling period.
    """

    def __init__(
        self,
        target: float,
        alpha: float = DEFAULT_ALPHA,
        beta: float = DEFAULT_BETA,
        sample_period: float = DEFAULT_SAMPLE_PERIOD,
        rng: random.Random | None = None,
        p: float = 0.0,
    ):
        if not alpha > beta > 0:
            raise ValueError(f"PI gains need alpha > beta > 0, got alpha={alpha}, beta={beta}")
        if not target > 0:
            raise ValueError("target buffering time must be positive")
        if not sample_period > 0:
            raise ValueError("sample period must be positive")
        self.target = target
        self.alpha = alpha
        self.beta = beta
        self.sample_period = sample_period
        self.rng = rng if rng is not None else random.Random(0)
        self.p = min(1.0, max(0.0, p))
        self.t_prev = target
        self._sum = 0.0
        self._count = 0

    def record(self, duration: float) -> None:
        self._sum += duration
        self._count += 1

    def update(self) -> tuple[float, int]:
        """Advance one period; returns the period's mean buffering time and sample count."""
        count = self._count
        t_new = self._sum / count if count else self.t_prev
        p = self.p + self.alpha * (t_new - self.target) - self.beta * (self.t_prev - self.target)
        self.p = 1.0 if p > 1.0 else (0.0 if p < 0.0 else p)
        self.t_prev = t_new
        self._sum = 0.0
        self._count = 0
        return t_new, count

    def mark_decision(self) -> bool:
        # one draw per decision keeps the stream position independent of p
        return self.rng.random() < self.p
