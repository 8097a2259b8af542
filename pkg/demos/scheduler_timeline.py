"""
Grant reuse, drift, and reselection
===================================

A grant is a (phase, resource pair) claim.  Messages arriving a whole
number of cycles apart reuse it at a constant latency; any other spacing
makes the send offset drift and eventually wrap a full cycle.

The second half drives the scheduler state machine itself: counters count
transmissions down, expiry flips a keep-or-reselect coin, and an optional
one-shot window interleaves single-use grants between persistent ones.
"""

import numpy as np

from sidelink.mac import (
    CandidateList,
    Grant,
    GrantOrigin,
    SchedulerState,
    grant_to_subframe,
    sps_transmit_tick,
)
from sidelink.scenario import SpsConfig

# 1. Reuse at a 300 ms spacing: constant 40 ms arrival-to-send offset.
g = Grant(phase=60, pair=0, origin=GrantOrigin.SPS, selected_subframe=60)
arrivals = [20, 320, 620, 920]
print("300 ms arrivals:", [grant_to_subframe(g, a, t1=4) for a in arrivals])

# 2. The same grant at 310 ms arrivals: the offset shrinks by 10 ms per
#    message until it wraps, which shows up as one extra-late send.
arrivals = np.arange(20, 20 + 10 * 310, 310)
sends = [grant_to_subframe(g, int(a), t1=4) for a in arrivals]
print("310 ms arrivals, delays:", [int(s - a) for s, a in zip(sends, arrivals)])

# 3. The state machine over 60 messages.  Candidates come from a scripted
#    quiet grid here; in the full engine they come from the sensing history.
rng = np.random.default_rng(8)


def quiet_candidates():
    return CandidateList(subframes=rng.integers(4, 1000, size=87),
                         pairs=rng.integers(0, 5, size=87),
                         threshold_dbm=-110.0, window_size=435)


state = SchedulerState()
sps = SpsConfig(oneshot=(2, 6))
print("\n tick  origin   phase pair   c_s  c_o")
for tick in range(60):
    grant = sps_transmit_tick(state, sps, rng, quiet_candidates)
    marker = "" if grant.origin is GrantOrigin.SPS else "  <-"
    print(f"  {tick:3d}  {grant.origin.name:8s}  {grant.phase:3d}  {grant.pair}"
          f"   {state.c_s:3d}  {state.c_o if state.c_o is not None else '-':>3}"
          f"{marker}")
