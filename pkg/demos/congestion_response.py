"""
Density-driven message rate adaptation
======================================

Every 100 ms each vehicle smooths its heard-neighbour count and maps the
result to a generation interval: 100 ms below the density coefficient,
then a linear ramp, capped at 600 ms.
"""

from sidelink.congestion import CongestionState, generation_interval_ms, smooth_density
from sidelink.scenario import ScenarioConfig

sc = ScenarioConfig()

# The static mapping first.
print("smoothed density -> interval")
for n in (10, 24.999, 25, 50, 77.5, 150, 400):
    print(f"  {n:7.3f} -> {generation_interval_ms(n, sc):6.1f} ms")

# Convergence of the smoothing filter from an empty start, at three loads.
# The 5 % weight gives a time constant of roughly two seconds.
print("\nupdates    40 /km   100 /km   400 /km")
states = {40: CongestionState(), 100: CongestionState(), 400: CongestionState()}
raw = {40: 8, 100: 20, 400: 80}   # neighbours heard within coverage
for step in range(1, 101):
    for density, state in states.items():
        state.update(raw[density], sc)
    if step in (1, 5, 10, 25, 50, 100):
        row = "".join(f"{states[d].interval_ms:9.1f}" for d in (40, 100, 400))
        print(f"  {step:4d}  {row}")

print("\nfinal smoothed densities:",
      {d: round(s.n_smoothed, 2) for d, s in states.items()})
print("a fixed raw count is also the filter's fixed point:",
      smooth_density(80.0, 80, 0.05) == 80.0)
