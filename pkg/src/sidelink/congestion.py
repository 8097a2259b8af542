"""Density-adaptive message rate control.

Each vehicle tracks how many distinct neighbours it has actually heard
within a radius over the last second, smooths that count, and stretches its
message generation interval linearly with the smoothed density once it
passes a breakpoint.  A message is only handed to the scheduler when the
generation clock fires, so a stretched interval simply means fewer
transmissions; scheduler counters are untouched in between.
"""

from __future__ import annotations

from dataclasses import dataclass

from .scenario import ScenarioConfig

BASE_INTERVAL_MS = 100.0


def smooth_density(n_smoothed: float, n_current: int, weight: float) -> float:
    """One EWMA step of the perceived vehicle density."""
    return weight * n_current + (1.0 - weight) * n_smoothed


def generation_interval_ms(n_smoothed: float, sc: ScenarioConfig) -> float:
    """Interval between generated messages for a smoothed neighbour count.

    Base interval below the breakpoint, then a linear ramp, capped at the
    configured maximum.
    """
    b = sc.cc_density_coeff
    if n_smoothed < b:
        return BASE_INTERVAL_MS
    interval = BASE_INTERVAL_MS * n_smoothed / b
    return min(interval, sc.cc_interval_max_ms)


@dataclass
class CongestionState:
    """Per-vehicle rate-control state between 100 ms updates."""

    n_smoothed: float = 0.0
    interval_ms: float = BASE_INTERVAL_MS

    def update(self, n_current: int, sc: ScenarioConfig) -> float:
        """Fold in a fresh heard-neighbour count; returns the new interval."""
        self.n_smoothed = smooth_density(self.n_smoothed, n_current, sc.cc_smoothing)
        self.interval_ms = generation_interval_ms(self.n_smoothed, sc)
        return self.interval_ms
