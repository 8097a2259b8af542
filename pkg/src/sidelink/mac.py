"""Sensing-based semi-persistent scheduling with optional one-shot grants.

A grant is a 2-sub-channel pair plus a sub-frame phase.  The phase is the
sub-frame index modulo the 100 ms scheduling cycle: a kept grant is reused at
the next sub-frame matching that phase at or after ``arrival + t1``.  When the
generation interval is a multiple of 100 ms the offset between arrival and
transmission is constant; otherwise it drifts and occasionally wraps by a
full cycle, which is what desynchronises two colliding transmitters over
time ("slippage").

Counter semantics: every transmission decrements the active counters, a
fresh draw included, so a counter drawn as C yields C transmissions before
the expiry handling runs at the following opportunity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .scenario import SpsConfig

CYCLE_MS = 100   # scheduling cycle; phases live on [0, 100)


class GrantOrigin(Enum):
    SPS = "sps"
    ONESHOT = "oneshot"
    INITIAL = "initial"


@dataclass(frozen=True)
class Grant:
    """One reserved resource: 2-VRB pair at a fixed sub-frame phase."""

    phase: int                 # sub-frame index mod 100
    pair: int                  # pair slot index (vrb_start = 2 * pair)
    origin: GrantOrigin
    selected_subframe: int     # absolute sub-frame picked at selection time

    @property
    def vrb_start(self) -> int:
        return 2 * self.pair


def grant_to_subframe(grant: Grant, arrival: int, t1: int) -> int:
    """First usable sub-frame for a message arriving at ``arrival``.

    Earliest sub-frame at or after ``arrival + t1`` whose index matches the
    grant phase.  The result lies within [arrival + t1, arrival + t1 + 99].
    """
    base = arrival + t1
    return base + (grant.phase - base) % CYCLE_MS


# -- candidate selection ----------------------------------------------------

@dataclass
class CandidateList:
    """Ranked selection-window resources: absolute sub-frames and pair slots."""

    subframes: np.ndarray      # (k,) absolute sub-frame of each candidate
    pairs: np.ndarray          # (k,) pair slot of each candidate
    threshold_dbm: float       # exclusion threshold after any raising
    window_size: int           # total resources in the window

    def __len__(self) -> int:
        return len(self.subframes)


def select_candidates(arrival: int,
                      rssi_avg_mw: np.ndarray,
                      reserved_rsrp_mw: np.ndarray,
                      sps: SpsConfig,
                      n_pairs: int) -> CandidateList:
    """Three-stage resource filter over the window [arrival+t1, arrival+t2].

    ``rssi_avg_mw``      (100, n_pairs): per-phase mean received power of each
                         pair over the sensing window; unheard slots are 0.
    ``reserved_rsrp_mw`` (100, n_pairs): strongest advertised reservation per
                         slot, 0 where nothing is reserved.

    Stage 1 excludes slots reserved at an RSRP above the threshold; stage 2
    raises the threshold 3 dB at a time until at least the candidate fraction
    of the window survives; stage 3 ranks survivors by average RSSI and keeps
    the quietest fraction (of the whole window), ties broken by (sub-frame,
    pair) order.
    """
    offsets = np.arange(sps.t1_ms, sps.t2_ms + 1)
    phases = (arrival + offsets) % CYCLE_MS
    n_window = len(offsets) * n_pairs
    n_keep = int(np.ceil(sps.candidate_fraction * n_window))

    rsrp = reserved_rsrp_mw[phases]          # (w, n_pairs), window order
    rssi = rssi_avg_mw[phases]
    thr_dbm = sps.rsrp_exclude_init_dbm
    while True:
        admitted = rsrp <= 10.0 ** (thr_dbm / 10.0)
        if admitted.sum() >= n_keep:
            break
        thr_dbm += sps.rsrp_step_db

    # flatten in (sub-frame, pair) order so a stable sort keeps that as the
    # tie-break, then keep the quietest n_keep admitted slots
    flat_ok = admitted.ravel()
    flat_rssi = rssi.ravel()[flat_ok]
    flat_idx = np.nonzero(flat_ok)[0]
    order = np.argsort(flat_rssi, kind="stable")[:n_keep]
    chosen = flat_idx[order]
    w_idx, p_idx = np.divmod(chosen, n_pairs)
    return CandidateList(subframes=arrival + offsets[w_idx],
                         pairs=p_idx,
                         threshold_dbm=thr_dbm,
                         window_size=n_window)


class SensingHistory:
    """Per-vehicle sensing state over the trailing 1000 sub-frames.

    Keeps a ring of per-(sub-frame, VRB) received powers plus the latest
    decoded reservation per remote sender.  Slots never heard (cold start, or
    sub-frames spent transmitting) count as silent, which biases early
    selections toward never-heard resources.
    """

    def __init__(self, n_vrb: int, window_ms: int = 1000):
        if window_ms % CYCLE_MS:
            raise ValueError("sensing window must be a whole number of cycles")
        self.n_vrb = n_vrb
        self.window = window_ms
        self.cycles = window_ms // CYCLE_MS
        self.ring = np.zeros((window_ms, n_vrb))
        self.phase_sum = np.zeros((CYCLE_MS, n_vrb))
        # sender id -> (phase, pair, rsrp_mw, expires_at_subframe)
        self.reservations: dict[int, tuple[int, int, float, int]] = {}

    def record_rssi(self, subframe: int, rssi_mw: np.ndarray) -> None:
        slot = subframe % self.window
        phase = subframe % CYCLE_MS
        self.phase_sum[phase] += rssi_mw - self.ring[slot]
        self.ring[slot] = rssi_mw

    def record_reservation(self, sender: int, phase: int, pair: int,
                           rsrp_mw: float, expires_at: int) -> None:
        self.reservations[sender] = (phase, pair, rsrp_mw, expires_at)

    def rssi_phase_average(self, now: int) -> np.ndarray:
        """(100, n_vrb) mean power per phase over the stored cycles."""
        filled = np.minimum(now // CYCLE_MS + 1, self.cycles)
        return self.phase_sum / max(filled, 1)

    def pair_rssi_average(self, now: int, n_pairs: int) -> np.ndarray:
        """(100, n_pairs) candidate ranking metric: mean over the pair VRBs."""
        per_vrb = self.rssi_phase_average(now)
        return per_vrb[:, : 2 * n_pairs].reshape(CYCLE_MS, n_pairs, 2).mean(axis=2)

    def reservation_grid(self, now: int, n_pairs: int) -> np.ndarray:
        """(100, n_pairs) strongest live reservation per slot, in mW."""
        grid = np.zeros((CYCLE_MS, n_pairs))
        for phase, pair, rsrp, expires in self.reservations.values():
            if expires > now and rsrp > grid[phase, pair]:
                grid[phase, pair] = rsrp
        return grid


# -- scheduler state machine ------------------------------------------------

@dataclass
class SchedulerState:
    """Counters and current grant of one vehicle's scheduler."""

    grant: Grant | None = None        # persistent (SPS) grant
    c_s: int = 0                      # SPS counter, post-decrement
    c_o: int = 0                      # one-shot counter, post-decrement
    esps_intervals_used: int = 0      # completed intervals on the current VRBs
    last_was_oneshot: bool = False

    @property
    def saved_sps_grant(self) -> Grant | None:
        """The stashed persistent grant while the last send was a one-shot."""
        return self.grant if self.last_was_oneshot else None


def _draw_counter(rng: np.random.Generator, lo: int, hi: int) -> int:
    return int(rng.integers(lo, hi + 1))


def _pick_grant(candidates: CandidateList, rng: np.random.Generator,
                origin: GrantOrigin) -> Grant:
    idx = int(rng.integers(len(candidates)))
    t = int(candidates.subframes[idx])
    return Grant(phase=t % CYCLE_MS, pair=int(candidates.pairs[idx]),
                 origin=origin, selected_subframe=t)


def sps_transmit_tick(state: SchedulerState,
                      sps: SpsConfig,
                      rng: np.random.Generator,
                      candidates_fn) -> Grant:
    """Advance the scheduler for one transmission and return the grant to use.

    ``candidates_fn`` is called only when a fresh resource is actually needed
    and must return a CandidateList for the current selection window.

    Expiry handling runs before the send; afterwards every active counter has
    been decremented for this transmission (fresh draws included).  The
    keep/reselect uniform is always consumed at an SPS expiry, even when
    reselection is forced (first use, or the interval cap), so configurations
    that force reselection through different mechanisms consume identical
    randomness and stay trace-comparable.
    """
    oneshot = sps.oneshot is not None

    if state.grant is None:
        # first transmission: behave like a forced reselection
        rng.random()
        grant = _pick_grant(candidates_fn(), rng, GrantOrigin.INITIAL)
        state.grant = grant
        state.c_s = _draw_counter(rng, sps.cs_min, sps.cs_max) - 1
        state.c_o = (_draw_counter(rng, *sps.oneshot) - 1) if oneshot else 0
        state.esps_intervals_used = 0
        state.last_was_oneshot = False
        return grant

    sps_expired = state.c_s == 0
    oneshot_expired = oneshot and state.c_o == 0

    if sps_expired:
        u = rng.random()
        state.esps_intervals_used += 1
        forced = (sps.esps_max_intervals is not None
                  and state.esps_intervals_used >= sps.esps_max_intervals)
        reselect = forced or u < sps.reselect_prob
        if reselect:
            state.grant = _pick_grant(candidates_fn(), rng, GrantOrigin.SPS)
            state.esps_intervals_used = 0
            state.c_s = _draw_counter(rng, sps.cs_min, sps.cs_max) - 1
            if oneshot:
                state.c_o = _draw_counter(rng, *sps.oneshot) - 1
        else:
            state.c_s = _draw_counter(rng, sps.cs_min, sps.cs_max) - 1
            if oneshot_expired:
                # both counters ran out and the VRBs are kept: send this one
                # on a fresh one-shot resource, return to the kept grant next
                state.c_o = _draw_counter(rng, *sps.oneshot) - 1
                state.last_was_oneshot = True
                return _pick_grant(candidates_fn(), rng, GrantOrigin.ONESHOT)
            if oneshot:
                state.c_o -= 1
        state.last_was_oneshot = False
        return state.grant

    if oneshot_expired:
        # one-shot expiry alone: single transmission on a fresh resource,
        # the persistent grant stays stashed for the next opportunity
        state.c_o = _draw_counter(rng, *sps.oneshot) - 1
        state.c_s -= 1
        state.last_was_oneshot = True
        return _pick_grant(candidates_fn(), rng, GrantOrigin.ONESHOT)

    state.c_s -= 1
    if oneshot:
        state.c_o -= 1
    state.last_was_oneshot = False
    return state.grant
