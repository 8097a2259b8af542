"""
Closed-form gap-tail curves
===========================

The probability that a link stays silent for k generation intervals has a
closed form built from the counter reselection probability per opportunity,
the chance that a reselection actually unblocks the pair, and, when the
interval is not a whole number of cycles, a phase-drift term that splits
colliding transmitters by itself.
"""

import numpy as np

from sidelink.tailmodel import (
    TailModelParams,
    expected_reselection_spacing,
    fit_log_slope,
    q_k,
    slippage_prob,
    tail_no_slippage,
    tail_with_slippage,
)

# Per-opportunity reselection probability: zero while the counter cannot
# have expired, then decaying towards 2p/(sigma+rho).
k = np.arange(1, 31)
q = q_k(k, 5, 15, 0.2)
print("q_k for k = 1..10:", np.round(q[:10], 4))
print("asymptote 2p/(sigma+rho):", 2 * 0.2 / 20)
print("mean transmissions between reselections:",
      expected_reselection_spacing(5, 15, 0.2))

# A 310 ms interval drifts 10 ms per cycle.  The drift probability is
# piecewise in k: large while the phases close in, then a small constant.
p310 = TailModelParams(interval_ms=310.0)
drift = slippage_prob(np.arange(1, 21), p310)
print("\ndrift term at 310 ms, k = 1..20:")
print(np.round(drift, 5))

# Tail curves with and without the drift term, and the one-shot effect.
for label, params in [
    ("310 ms, persistent only", p310),
    ("310 ms, one-shot [2,6]", TailModelParams(interval_ms=310.0, oneshot=(2, 6))),
    ("600 ms, persistent only", TailModelParams(interval_ms=600.0)),
]:
    plain = tail_no_slippage(params)
    combined = tail_with_slippage(params)
    s_plain = fit_log_slope(plain.t_ms, plain.exceed)
    s_comb = fit_log_slope(combined.t_ms, combined.exceed)
    print(f"\n{label}")
    print(f"  P(gap > 3 s)  counters only {np.interp(3000, plain.t_ms, plain.exceed):.2e}"
          f", with drift {np.interp(3000, combined.t_ms, combined.exceed):.2e}")
    print(f"  log-slope     counters only {s_plain:.3f} 1/s, with drift {s_comb:.3f} 1/s")

# At whole-cycle intervals the drift term vanishes identically.
p600 = TailModelParams(interval_ms=600.0)
assert np.all(slippage_prob(np.arange(1, 50), p600) == 0.0)
print("\ndrift term at 600 ms is identically zero")
