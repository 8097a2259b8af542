"""Grant timing, candidate filtering, and the scheduler state machine."""

import numpy as np
import pytest

from sidelink.mac import (
    CYCLE_MS,
    CandidateList,
    Grant,
    GrantOrigin,
    SchedulerState,
    SensingHistory,
    grant_to_subframe,
    select_candidates,
    sps_transmit_tick,
)
from sidelink.scenario import SpsConfig


class ScriptRng:
    """Replays scripted uniform/integer draws and counts consumption."""

    def __init__(self, uniforms=(), ints=()):
        self.uniforms = list(uniforms)
        self.ints = list(ints)
        self.n_uniform = 0
        self.n_int = 0

    def random(self):
        self.n_uniform += 1
        return self.uniforms.pop(0)

    def integers(self, lo, hi=None):
        self.n_int += 1
        return self.ints.pop(0)


def one_candidate(subframe=60, pair=0):
    return lambda: CandidateList(subframes=np.array([subframe]),
                                 pairs=np.array([pair]),
                                 threshold_dbm=-110.0, window_size=435)


# -- grant timing -----------------------------------------------------------

def test_grant_to_subframe_basic():
    g = Grant(phase=60, pair=0, origin=GrantOrigin.SPS, selected_subframe=60)
    assert grant_to_subframe(g, arrival=20, t1=4) == 60


def test_grant_reuse_interval_multiple_of_cycle():
    # arrivals 300 ms apart keep a constant arrival-to-send offset
    g = Grant(phase=60, pair=0, origin=GrantOrigin.SPS, selected_subframe=60)
    sends = [grant_to_subframe(g, a, 4) for a in (20, 330, 640, 950)]
    assert sends == [60, 360, 660, 960]


def test_grant_reuse_interval_drifts_and_wraps():
    # 310 ms arrivals: the offset shrinks each time and wraps a full cycle
    g = Grant(phase=60, pair=0, origin=GrantOrigin.SPS, selected_subframe=60)
    sends = [grant_to_subframe(g, a, 4) for a in (45, 355, 665, 975)]
    assert sends == [60, 360, 760, 1060]
    delays = [s - a for s, a in zip(sends, (45, 355, 665, 975))]
    assert delays == [15, 5, 95, 85]


def test_grant_delay_bounds():
    t1 = 4
    for phase in range(CYCLE_MS):
        g = Grant(phase=phase, pair=0, origin=GrantOrigin.SPS,
                  selected_subframe=phase)
        for arrival in range(0, 500, 7):
            delay = grant_to_subframe(g, arrival, t1) - arrival
            assert t1 <= delay <= t1 + 99


def test_vrb_start_mapping():
    assert Grant(phase=0, pair=3, origin=GrantOrigin.SPS,
                 selected_subframe=0).vrb_start == 6


# -- candidate selection ----------------------------------------------------

def quiet_world(n_pairs=5):
    rssi = np.zeros((CYCLE_MS, n_pairs))
    rsrp = np.zeros((CYCLE_MS, n_pairs))
    return rssi, rsrp


def test_candidates_cold_start_takes_window_order():
    rssi, rsrp = quiet_world()
    sps = SpsConfig()
    cl = select_candidates(1000, rssi, rsrp, sps, n_pairs=5)
    # window is 87 sub-frames x 5 pairs; 20 % of it, rounded up
    assert cl.window_size == 435
    assert len(cl) == 87
    # all-equal RSSI: stable sort keeps (sub-frame, pair) order
    assert cl.subframes[0] == 1004
    assert cl.subframes[-1] == 1021
    key = cl.subframes * 8 + cl.pairs
    assert np.all(np.diff(key) > 0)
    assert cl.threshold_dbm == sps.rsrp_exclude_init_dbm


def test_candidate_unit_is_the_pair():
    rssi, rsrp = quiet_world(n_pairs=5)
    cl = select_candidates(0, rssi, rsrp, SpsConfig(), n_pairs=5)
    assert cl.window_size == 87 * 5
    assert set(np.unique(cl.pairs)) <= set(range(5))


def test_candidates_prefer_quiet_slots():
    rssi, rsrp = quiet_world()
    rssi[:] = 1e-9
    rssi[44, 2] = 1e-13            # one very quiet slot
    cl = select_candidates(1000, rssi, rsrp, SpsConfig(), n_pairs=5)
    # phase 44 occurs at sub-frame 1044 inside [1004, 1090]
    assert cl.subframes[0] == 1044
    assert cl.pairs[0] == 2


def test_candidates_exclude_reserved_slots():
    rssi, rsrp = quiet_world()
    rsrp[50, 1] = 10.0             # far above -110 dBm
    cl = select_candidates(1000, rssi, rsrp, SpsConfig(), n_pairs=5)
    hit = (cl.subframes % CYCLE_MS == 50) & (cl.pairs == 1)
    assert not hit.any()
    assert cl.threshold_dbm == -110.0


def test_candidates_raise_threshold_until_enough_remain():
    rssi, rsrp = quiet_world()
    rsrp[:] = 1e-8                 # every slot reserved at -80 dBm
    cl = select_candidates(1000, rssi, rsrp, SpsConfig(), n_pairs=5)
    assert len(cl) == 87
    # -110 dBm stepped up by 3 until -80 dBm reservations get through
    assert cl.threshold_dbm == -80.0


# -- sensing history --------------------------------------------------------

def test_sensing_ring_replaces_old_cycle():
    h = SensingHistory(n_vrb=4, window_ms=1000)
    h.record_rssi(0, np.array([5.0, 0, 0, 0]))
    assert h.phase_sum[0, 0] == 5.0
    h.record_rssi(1000, np.array([2.0, 0, 0, 0]))   # same ring slot
    assert h.phase_sum[0, 0] == 2.0


def test_sensing_phase_average_cold_start():
    h = SensingHistory(n_vrb=2, window_ms=1000)
    h.record_rssi(30, np.array([6.0, 0]))
    h.record_rssi(130, np.array([0.0, 0]))
    # only 2 cycles could have been observed by t=199
    avg = h.rssi_phase_average(now=199)
    assert avg[30, 0] == pytest.approx(3.0)
    # a third cycle has started by t=250, so the divisor grows
    assert h.rssi_phase_average(now=250)[30, 0] == pytest.approx(2.0)
    # after a full window the divisor saturates at 10 cycles
    assert h.rssi_phase_average(now=5000)[30, 0] == pytest.approx(0.6)


def test_sensing_pair_average():
    h = SensingHistory(n_vrb=4, window_ms=1000)
    h.record_rssi(7, np.array([2.0, 4.0, 0.0, 0.0]))
    pair = h.pair_rssi_average(now=50, n_pairs=2)
    assert pair[7, 0] == pytest.approx(3.0)
    assert pair[7, 1] == 0.0


def test_reservation_grid_expiry():
    h = SensingHistory(n_vrb=4)
    h.record_reservation(sender=9, phase=20, pair=1, rsrp_mw=1e-9,
                         expires_at=500)
    assert h.reservation_grid(now=499, n_pairs=2)[20, 1] == 1e-9
    assert h.reservation_grid(now=500, n_pairs=2)[20, 1] == 0.0


def test_reservation_grid_keeps_strongest():
    h = SensingHistory(n_vrb=4)
    h.record_reservation(1, 20, 1, 1e-9, 500)
    h.record_reservation(2, 20, 1, 5e-9, 500)
    assert h.reservation_grid(now=100, n_pairs=2)[20, 1] == 5e-9


# -- scheduler state machine ------------------------------------------------

def test_initial_tick_burns_keep_uniform():
    sps = SpsConfig()
    state = SchedulerState()
    rng = ScriptRng(uniforms=[0.7], ints=[0, 8])   # pick idx 0, draw C_s = 8
    grant = sps_transmit_tick(state, sps, rng, one_candidate(subframe=60))
    assert grant.origin is GrantOrigin.INITIAL
    assert grant.phase == 60 and grant.selected_subframe == 60
    assert state.c_s == 7            # post-decrement: 8 draws gives 8 sends
    assert rng.n_uniform == 1        # forced reselection still consumes it


def test_counter_decrements_without_touching_grant():
    sps = SpsConfig()
    g = Grant(phase=10, pair=2, origin=GrantOrigin.SPS, selected_subframe=10)
    state = SchedulerState(grant=g, c_s=3)
    rng = ScriptRng()
    out = sps_transmit_tick(state, sps, rng, lambda: pytest.fail("no reselect"))
    assert out is g
    assert state.c_s == 2
    assert rng.n_uniform == 0 and rng.n_int == 0


def test_keep_on_expiry_redraws_counter_only():
    sps = SpsConfig(keep_prob=0.8)
    g = Grant(phase=10, pair=2, origin=GrantOrigin.SPS, selected_subframe=10)
    state = SchedulerState(grant=g, c_s=0)
    rng = ScriptRng(uniforms=[0.95], ints=[12])
    out = sps_transmit_tick(state, sps, rng, lambda: pytest.fail("kept"))
    assert out is g
    assert state.c_s == 11
    assert state.esps_intervals_used == 1


def test_reselect_on_expiry_picks_new_resource():
    sps = SpsConfig(keep_prob=0.8)
    g = Grant(phase=10, pair=2, origin=GrantOrigin.SPS, selected_subframe=10)
    state = SchedulerState(grant=g, c_s=0, esps_intervals_used=3)
    rng = ScriptRng(uniforms=[0.05], ints=[0, 9])
    out = sps_transmit_tick(state, sps, rng, one_candidate(subframe=133, pair=4))
    assert out.origin is GrantOrigin.SPS
    assert (out.phase, out.pair) == (33, 4)
    assert state.grant is out
    assert state.c_s == 8
    assert state.esps_intervals_used == 0


def test_esps_cap_forces_reselection_but_consumes_uniform():
    sps = SpsConfig(keep_prob=0.8, esps_max_intervals=1)
    g = Grant(phase=10, pair=2, origin=GrantOrigin.SPS, selected_subframe=10)
    state = SchedulerState(grant=g, c_s=0)
    # uniform says keep (0.99 > 0.2) but the cap overrides it
    rng = ScriptRng(uniforms=[0.99], ints=[0, 7])
    from_cap = sps_transmit_tick(
        state, sps, rng,
        one_candidate(subframe=250, pair=1))
    assert from_cap.pair == 1
    assert rng.n_uniform == 1


def test_oneshot_expiry_interleaves_single_transmission():
    sps = SpsConfig(oneshot=(2, 6))
    g = Grant(phase=10, pair=2, origin=GrantOrigin.SPS, selected_subframe=10)
    state = SchedulerState(grant=g, c_s=5, c_o=0)
    rng = ScriptRng(ints=[4, 0])     # redraw C_o = 4, pick candidate 0
    out = sps_transmit_tick(state, sps, rng, one_candidate(subframe=77, pair=3))
    assert out.origin is GrantOrigin.ONESHOT
    assert (out.phase, out.pair) == (77, 3)
    assert state.last_was_oneshot
    assert state.grant is g          # persistent grant survives underneath
    assert state.c_s == 4
    assert state.c_o == 3

    # next tick returns to the stashed persistent grant
    back = sps_transmit_tick(state, sps, ScriptRng(), lambda: None)
    assert back is g
    assert not state.last_was_oneshot


def test_both_counters_expire_with_keep():
    sps = SpsConfig(oneshot=(2, 6), keep_prob=0.8)
    g = Grant(phase=10, pair=2, origin=GrantOrigin.SPS, selected_subframe=10)
    state = SchedulerState(grant=g, c_s=0, c_o=0)
    # keep the VRBs, redraw both counters, send this one on a one-shot
    rng = ScriptRng(uniforms=[0.9], ints=[11, 3, 0])
    out = sps_transmit_tick(state, sps, rng, one_candidate(subframe=42, pair=1))
    assert out.origin is GrantOrigin.ONESHOT
    assert state.grant is g
    assert state.c_s == 10
    assert state.c_o == 2
    assert state.last_was_oneshot


def test_both_counters_expire_with_reselect():
    sps = SpsConfig(oneshot=(2, 6), keep_prob=0.8)
    g = Grant(phase=10, pair=2, origin=GrantOrigin.SPS, selected_subframe=10)
    state = SchedulerState(grant=g, c_s=0, c_o=0)
    rng = ScriptRng(uniforms=[0.1], ints=[0, 9, 4])
    out = sps_transmit_tick(state, sps, rng, one_candidate(subframe=61, pair=0))
    # fresh persistent grant; both counters redrawn; no one-shot interleave
    assert out.origin is GrantOrigin.SPS
    assert state.grant is out
    assert state.c_s == 8
    assert state.c_o == 3
    assert not state.last_was_oneshot


def test_counter_draw_yields_that_many_grant_uses():
    # a counter drawn as 3 keeps the grant for sends 1..3; expiry handling
    # runs at send 4
    sps = SpsConfig(keep_prob=0.0)    # always reselect at expiry
    state = SchedulerState()
    calls = []

    def fn():
        calls.append(True)
        return one_candidate(subframe=60)()

    rng = ScriptRng(uniforms=[0.5, 0.5], ints=[0, 3, 0, 5])
    for _ in range(4):
        sps_transmit_tick(state, sps, rng, fn)
    assert len(calls) == 2            # initial pick + expiry at the 4th send


def test_counter_statistics_match_expected_spacing():
    sps = SpsConfig(keep_prob=0.8)
    state = SchedulerState()
    rng = np.random.default_rng(41)
    fn = one_candidate(subframe=60)
    reselect_ticks = []
    prev_grant = None
    for t in range(400_000):
        grant = sps_transmit_tick(state, sps, rng, fn)
        if state.grant is not prev_grant:
            reselect_ticks.append(t)
            prev_grant = state.grant
    spacing = np.diff(reselect_ticks)
    # E[C] / reselect_prob = 10 / 0.2
    assert spacing.mean() == pytest.approx(50.0, rel=0.02)
    assert len(spacing) > 5000


def test_keep_prob_zero_equals_esps_one():
    # forcing reselection through the keep probability or through the
    # interval cap must consume identical randomness
    def run(sps):
        state = SchedulerState()
        rng = np.random.default_rng(99)
        fn = one_candidate(subframe=60)
        return [sps_transmit_tick(state, sps, rng, fn) for _ in range(10_000)]

    a = run(SpsConfig(keep_prob=0.0))
    b = run(SpsConfig(keep_prob=0.8, esps_max_intervals=1))
    assert a == b
