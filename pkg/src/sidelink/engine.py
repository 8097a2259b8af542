"""Sub-frame-level network simulation.

Each 1 ms sub-frame: density estimates refresh on their per-vehicle 100 ms
clocks, due message generations run the scheduler and book a future
transmission, and all transmissions booked for this sub-frame are evaluated
against every receiver at once (interference is summed highway-wide; fading
is drawn per link, sub-frame, and antenna).  Sensing, reservations,
congestion inputs, and reception statistics all derive from those decode
outcomes, so there is no side channel: a vehicle only knows what its radio
heard.

Everything is deterministic given (configs, master seed): per-vehicle
scheduler draws come from substreams indexed by vehicle id, channel draws
from one stream consumed in a fixed order.
"""

from __future__ import annotations

import struct
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from . import channel as ch
from . import mac
from .congestion import generation_interval_ms, smooth_density
from .mac import CYCLE_MS, GrantOrigin, SchedulerState
from .metrics import (BETTER_CONDITIONS, COLLISION, FADING, HD, MetricStore,
                      NOISE_FLOOR, RESELECTION, SLIPPAGE)
from .scenario import World

# binary event log record: subframe, tx, rx, outcome (0 rx / 1 lost),
# loss cause (255 for received), combined data SINR in dB
EVENT_RECORD = struct.Struct("<IHHBBf")

_ORIGIN_CODE = {GrantOrigin.INITIAL: 0, GrantOrigin.SPS: 1, GrantOrigin.ONESHOT: 2}


@dataclass
class TxRec:
    """One booked transmission."""

    vid: int
    pair: int
    origin: GrantOrigin
    gen_sub: int          # generation sub-frame of the carried message
    adv_counter: int      # counter value advertised in the control part
    res_interval: float   # generation interval advertised for projection


class Simulation:
    """One deterministic run over a built world."""

    def __init__(self, world: World, chan: ch.ChannelConfig | None = None,
                 store: MetricStore | None = None,
                 trace_vids: tuple[int, ...] = (),
                 event_log=None):
        self.world = world
        self.chan = chan if chan is not None else ch.ChannelConfig()
        self.chan.validate()
        sc = world.scenario
        self.sc, self.sps = sc, world.sps
        n = world.n_vehicles
        self.n = n
        self.n_vrb = sc.subchannels_per_subframe
        self.n_pairs = sc.n_pairs
        self.n_ant = sc.n_rx_antennas
        self.store = store if store is not None else MetricStore(sc.eval_radius_m)
        self.trace_vids = set(trace_vids)
        self.trace_rows: list[tuple] = []
        self.event_log = event_log

        # static geometry and link tables
        pos = world.positions
        self.dist = np.abs(pos[:, None] - pos[None, :])
        table = (ch.PathlossTable.load(self.chan.pathloss_table)
                 if self.chan.pathloss_model == "table" else None)
        self.plin = ch.db_to_lin(-ch.pathloss_db(self.dist, self.chan, table))
        self.m_shape = ch.nakagami_m(self.dist)
        self.prr_bins = self.store.prr_bin(self.dist)
        self.wide_bins = self.store.wide_bin(self.dist)
        lo, hi = world.stats_bounds
        tx_gated = (pos >= lo) & (pos <= hi)
        self.tx_gated = tx_gated
        eye = np.eye(n, dtype=bool)
        self.gated = (tx_gated[:, None] & (self.dist <= sc.eval_radius_m) & ~eye)
        self.neigh = (self.dist <= sc.cc_radius_m) & ~eye
        center = sc.highway_length_m / 2.0
        self.central_ids = np.nonzero(np.abs(pos - center) <= 25.0)[0]

        # link budget constants (linear mW)
        powers = ch.LinkPowers.from_scenario(sc)
        self.p_data_mw = powers.data_mw
        self.p_sci_mw = powers.sci_mw
        self.noise_data = ch.noise_power_mw(sc, sc.data_prbs)
        self.noise_sci = ch.noise_power_mw(sc, sc.sci_prbs)
        self.thr_data = float(ch.db_to_lin(sc.sinr_threshold_data_db)) * (1 - 1e-12)
        self.thr_sci = float(ch.db_to_lin(sc.sinr_threshold_sci_db)) * (1 - 1e-12)
        self.bler_data = (ch.BlerTable.load(self.chan.bler_data)
                          if self.chan.bler_data else None)
        self.bler_sci = (ch.BlerTable.load(self.chan.bler_sci)
                         if self.chan.bler_sci else None)

        # pair-to-pair leakage and pair-to-VRB sensing profile
        p = self.n_pairs
        starts = 2 * np.arange(p)
        gap = np.abs(starts[:, None] - starts[None, :]) - 1   # closest-VRB gap
        off = np.where(np.eye(p, dtype=bool), 0, np.maximum(gap, 1))
        self.ibe_pair = ch.db_to_lin(ch.ibe_attenuation_db(off, self.chan))
        vrb = np.arange(self.n_vrb)
        vrb_gap = np.minimum(np.abs(vrb[None, :] - starts[:, None]),
                             np.abs(vrb[None, :] - (starts + 1)[:, None]))
        in_pair = vrb_gap == 0
        leak = ch.db_to_lin(ch.ibe_attenuation_db(np.maximum(vrb_gap, 1), self.chan))
        self.leak_profile = np.where(in_pair, 0.5, leak)      # share of total power

        # sensing state
        self.window = self.sps.sensing_window_ms
        self.ring = np.zeros((n, self.window, self.n_vrb))
        self.phase_sum = np.zeros((n, CYCLE_MS, self.n_vrb))
        self.busy_cnt = np.zeros(n, dtype=np.int64)
        self.busy_thr10 = ch.dbm_to_mw(self.sps.cbr_rssi_threshold_dbm) \
            * (self.window // CYCLE_MS)
        self._busy_live = False

        # reservations, indexed [listener, sender]
        self.res_phase = np.full((n, n), -1, dtype=np.int16)
        self.res_pair = np.zeros((n, n), dtype=np.int8)
        self.res_rsrp = np.zeros((n, n))
        self.res_expiry = np.zeros((n, n), dtype=np.int64)
        self.last_heard = np.full((n, n), -(10 ** 9), dtype=np.int64)

        # schedulers and congestion
        self.states = [SchedulerState() for _ in range(n)]
        self.rngs = [world.vehicle_rng(v) for v in range(n)]
        self.chan_rng = world.channel_rng()
        self.ns_smoothed = np.zeros(n)
        self.interval_ms = np.full(n, 100.0)
        self.cur_phase = np.full(n, -1, dtype=np.int16)
        self.cur_pair = np.zeros(n, dtype=np.int8)

        # generation clocks: first message at a uniform offset in [0, 100) ms
        self.gen_clock = np.empty(n)
        for v in range(n):
            self.gen_clock[v] = self.rngs[v].uniform(0.0, CYCLE_MS)
        self.cc_phase = (np.ceil(self.gen_clock).astype(np.int64)) % CYCLE_MS
        self.gen_bucket: dict[int, list[int]] = defaultdict(list)
        for v in range(n):
            self.gen_bucket[int(np.ceil(self.gen_clock[v]))].append(v)
        self.tx_bucket: dict[int, list[TxRec]] = defaultdict(list)

        # pair reception state, indexed [tx, rx]
        self.last_rx = np.full((n, n), -1, dtype=np.int64)
        self.last_eta = np.zeros((n, n), dtype=np.int16)
        self.gap_fails = np.zeros((n, n), dtype=np.int32)
        self.cause_cnt = np.zeros((4, n, n), dtype=np.int32)
        self.dom_id = np.full((n, n), -1, dtype=np.int32)
        self.dom_phase = np.full((n, n), -1, dtype=np.int16)
        self.dom_pair = np.zeros((n, n), dtype=np.int8)
        self.fail_phase = np.full((n, n), -1, dtype=np.int16)
        self.fail_pair = np.zeros((n, n), dtype=np.int8)
        self.last_tx = np.full(n, -1, dtype=np.int64)

        self.warmup = sc.warmup_subframes
        self.end = sc.duration_subframes
        self._cbr_series = np.zeros(max(self.end - self.warmup, 0))
        self._cc_groups = [np.nonzero(self.cc_phase == p)[0] for p in range(CYCLE_MS)]

    # -- per-vehicle helpers -------------------------------------------------

    def _candidates(self, vid: int, now: int) -> mac.CandidateList:
        filled = min(now // CYCLE_MS + 1, self.window // CYCLE_MS)
        per_vrb = self.phase_sum[vid] / max(filled, 1)
        pair_rssi = per_vrb[:, : 2 * self.n_pairs] \
            .reshape(CYCLE_MS, self.n_pairs, 2).mean(axis=2)
        grid = np.zeros((CYCLE_MS, self.n_pairs))
        valid = (self.res_phase[vid] >= 0) & (self.res_expiry[vid] > now)
        if valid.any():
            np.maximum.at(grid,
                          (self.res_phase[vid][valid], self.res_pair[vid][valid]),
                          self.res_rsrp[vid][valid])
        return mac.select_candidates(now, pair_rssi, grid, self.sps, self.n_pairs)

    def _tick_vehicle(self, vid: int, now: int) -> None:
        state = self.states[vid]
        grant = mac.sps_transmit_tick(state, self.sps, self.rngs[vid],
                                      lambda: self._candidates(vid, now))
        if grant.origin is not GrantOrigin.ONESHOT:
            self.cur_phase[vid] = grant.phase
            self.cur_pair[vid] = grant.pair
        fresh = grant.selected_subframe >= now + self.sps.t1_ms
        t_tx = (grant.selected_subframe if fresh
                else mac.grant_to_subframe(grant, now, self.sps.t1_ms))
        adv = 0 if grant.origin is GrantOrigin.ONESHOT else state.c_s
        if t_tx < self.end:
            self.tx_bucket[t_tx].append(TxRec(
                vid=vid, pair=grant.pair, origin=grant.origin, gen_sub=now,
                adv_counter=adv, res_interval=self.interval_ms[vid]))
        if vid in self.trace_vids:
            self.trace_rows.append((now, vid, t_tx, grant.phase, grant.pair,
                                    _ORIGIN_CODE[grant.origin],
                                    state.c_s, state.c_o))

    # -- sub-frame phases ----------------------------------------------------

    def _congestion_step(self, s: int) -> None:
        vids = self._cc_groups[s % CYCLE_MS]
        if len(vids) == 0:
            return
        heard = (self.last_heard[vids] > s - self.window) & self.neigh[vids]
        n_c = heard.sum(axis=1)
        self.ns_smoothed[vids] = smooth_density(
            self.ns_smoothed[vids], n_c, self.sc.cc_smoothing)
        for v in vids:
            self.interval_ms[v] = generation_interval_ms(
                self.ns_smoothed[v], self.sc)
        if s >= self.warmup:
            inside = vids[self.tx_gated[vids]]
            if len(inside):
                self.store.add_interval_observation(
                    float(self.interval_ms[inside].sum()), len(inside))

    def _generation_step(self, s: int) -> None:
        for vid in self.gen_bucket.pop(s, ()):
            self._tick_vehicle(vid, s)
            self.gen_clock[vid] += self.interval_ms[vid]
            nxt = int(np.ceil(self.gen_clock[vid]))
            if nxt < self.end:
                self.gen_bucket[nxt].append(vid)

    def _transmission_step(self, s: int) -> None:
        recs = self.tx_bucket.pop(s, [])
        recs.sort(key=lambda r: r.vid)
        n, slot, phase = self.n, s % self.window, s % CYCLE_MS
        k = len(recs)

        if k == 0:
            contrib = np.zeros((n, self.n_vrb))
        else:
            tx_ids = np.array([r.vid for r in recs])
            pairs = np.array([r.pair for r in recs])
            m_rows = self.m_shape[tx_ids]                       # (k, n)
            if self.chan.fading:
                gains = self.chan_rng.gamma(shape=m_rows[:, :, None],
                                            scale=1.0 / m_rows[:, :, None],
                                            size=(k, n, self.n_ant))
            else:
                gains = np.ones((k, n, self.n_ant))
            amp = self.plin[tx_ids][:, :, None] * gains          # channel gain
            p_data = self.p_data_mw * amp                       # (k, n, ant)
            p_mean = (self.p_data_mw + self.p_sci_mw) * amp.mean(axis=2)

            ibe = self.ibe_pair[pairs[:, None], pairs[None, :]]  # (k, k) j->k
            total = np.einsum("jk,jna->kna", ibe, p_data)
            i_data = total - p_data
            sci_ratio = self.p_sci_mw / self.p_data_mw
            sinr_data = (p_data / (i_data + self.noise_data)).sum(axis=2)
            sinr_sci = (sci_ratio * p_data
                        / (sci_ratio * i_data + self.noise_sci)).sum(axis=2)

            if self.bler_data is None and self.bler_sci is None:
                u_data = u_sci = None
                ok_data = sinr_data >= self.thr_data
                ok_sci = sinr_sci >= self.thr_sci
            else:
                u_data = self.chan_rng.random((k, n))
                u_sci = self.chan_rng.random((k, n))
                ok_data = self._decode(sinr_data, self.bler_data, self.thr_data,
                                       u_data)
                ok_sci = self._decode(sinr_sci, self.bler_sci, self.thr_sci,
                                      u_sci)

            is_tx = np.zeros(n, dtype=bool)
            is_tx[tx_ids] = True
            audible = ~is_tx
            received = ok_data & ok_sci & audible[None, :]

            contrib = np.einsum("kn,kv->nv", p_mean, self.leak_profile[pairs])
            contrib[tx_ids] = 0.0                                # not sensing

        self._sense(s, slot, phase, contrib)
        if s >= self.warmup:
            idx = s - self.warmup
            self._cbr_series[idx] = float(
                self.busy_cnt[self.central_ids].sum()
                / (CYCLE_MS * self.n_vrb))

        if k == 0:
            return

        for j, rec in enumerate(recs):
            rx_sci = ok_sci[j] & audible
            if rec.origin is not GrantOrigin.ONESHOT and rec.adv_counter > 0:
                rows = np.nonzero(rx_sci)[0]
                if len(rows):
                    self.res_phase[rows, rec.vid] = phase
                    self.res_pair[rows, rec.vid] = rec.pair
                    self.res_rsrp[rows, rec.vid] = \
                        self.p_data_mw * amp[j, rows].mean(axis=1)
                    self.res_expiry[rows, rec.vid] = s + int(
                        np.ceil(rec.adv_counter * rec.res_interval))
            got = received[j] & self.neigh[rec.vid]
            self.last_heard[np.nonzero(got)[0], rec.vid] = s
            self._pair_metrics(s, j, rec, recs, received[j], ok_sci[j],
                               is_tx, p_data, p_mean, ibe, sinr_data,
                               u_data, u_sci)

    def _decode(self, sinr_lin, bler, thr_lin, uniform):
        if bler is None:
            return sinr_lin >= thr_lin
        err = bler.error_rate(ch.lin_to_db(np.maximum(sinr_lin, 1e-30)))
        return uniform >= err

    def _sense(self, s: int, slot: int, phase: int, contrib: np.ndarray) -> None:
        old = self.ring[:, slot, :]
        row = self.phase_sum[:, phase, :]
        if s >= self.window:
            if not self._busy_live:
                self.busy_cnt[:] = (self.phase_sum > self.busy_thr10).sum((1, 2))
                self._busy_live = True
            before = (row > self.busy_thr10).sum(axis=1)
            row += contrib - old
            after = (row > self.busy_thr10).sum(axis=1)
            self.busy_cnt += after - before
        else:
            row += contrib - old
        self.ring[:, slot, :] = contrib

    # -- reception statistics ------------------------------------------------

    def _pair_metrics(self, s, j, rec, recs, rx_j, sci_j, is_tx,
                      p_data, p_mean, ibe, sinr_data, u_data, u_sci) -> None:
        tx = rec.vid
        in_stats = s >= self.warmup
        if self.tx_gated[tx]:
            if in_stats and self.last_tx[tx] >= 0:
                self.store.note_itt(int(s - self.last_tx[tx]))
        self.last_tx[tx] = s
        grow = self.gated[tx]
        if not grow.any():
            return
        eta = s - rec.gen_sub
        k = len(recs)

        idx_ok = np.nonzero(rx_j & grow)[0]
        idx_fail = np.nonzero(~rx_j & grow)[0]

        if in_stats:
            self.store.add_transmissions(self.prr_bins[tx][grow])
            if len(idx_ok):
                self.store.add_receptions(self.prr_bins[tx][idx_ok])

        causes = np.zeros(0, dtype=np.int64)
        if len(idx_fail):
            causes = self._classify_losses(j, rec, idx_fail, sci_j, is_tx,
                                           p_data, u_data, u_sci)
            if in_stats:
                self.store.add_losses(causes)
            np.add.at(self.cause_cnt, (causes, tx, idx_fail), 1)
            self.gap_fails[tx, idx_fail] += 1
            # context of the (possibly ongoing) gap: who blocked it last and
            # on what resources both sides were sitting
            if k > 1:
                contrib_int = p_mean[:, idx_fail] * ibe[:, j][:, None]
                contrib_int[j] = -1.0
                dom = np.array([r.vid for r in recs])[np.argmax(contrib_int, axis=0)]
            else:
                dom = np.full(len(idx_fail), -1, dtype=np.int64)
            dom = np.where(causes == HD, idx_fail, dom)
            self.dom_id[tx, idx_fail] = dom
            safe = np.maximum(dom, 0)
            self.dom_phase[tx, idx_fail] = np.where(dom >= 0,
                                                    self.cur_phase[safe], -1)
            self.dom_pair[tx, idx_fail] = np.where(dom >= 0,
                                                   self.cur_pair[safe], 0)
            self.fail_phase[tx, idx_fail] = s % CYCLE_MS
            self.fail_pair[tx, idx_fail] = rec.pair

        if len(idx_ok):
            prev = self.last_rx[tx, idx_ok]
            seen = prev >= 0
            if in_stats and seen.any():
                gaps = (s - prev[seen]).astype(np.int64)
                bins = self.wide_bins[tx, idx_ok][seen]
                self.store.add_ipg_samples(bins, gaps)
                etas_prev = self.last_eta[tx, idx_ok][seen].astype(np.int64)
                lo_t = np.maximum(prev[seen], self.warmup)
                self.store.add_ia_intervals(bins,
                                            etas_prev + lo_t - prev[seen],
                                            etas_prev + s - prev[seen])
            if in_stats:
                self._classify_gap_ends(s, j, rec, recs, idx_ok, is_tx)
            self.last_rx[tx, idx_ok] = s
            self.last_eta[tx, idx_ok] = eta
            self.gap_fails[tx, idx_ok] = 0
            self.cause_cnt[:, tx, idx_ok] = 0
            self.dom_id[tx, idx_ok] = -1

        if self.event_log is not None and in_stats:
            self._log_events(s, tx, idx_ok, idx_fail, causes, sinr_data[j])

    def _classify_losses(self, j, rec, idx_fail, sci_j, is_tx,
                         p_data, u_data, u_sci):
        """Attribute each failed reception to one cause.

        Half-duplex first; otherwise re-decode the failing part without
        interference using the same fading (still failing means the draw or
        the average link is at fault: the unfaded check separates deep fades
        from links below the noise floor), and call it a collision when
        interference removal would have saved it.
        """
        tx = rec.vid
        sci_failed = ~sci_j[idx_fail]
        n_ant = self.n_ant
        sig_data = p_data[j, idx_fail].sum(axis=1)   # faded, all antennas
        plink = self.plin[tx, idx_fail]
        sci_ratio = self.p_sci_mw / self.p_data_mw

        only_data = sig_data / self.noise_data
        only_sci = sig_data * sci_ratio / self.noise_sci
        nf_data = self.p_data_mw * plink * n_ant / self.noise_data
        nf_sci = self.p_sci_mw * plink * n_ant / self.noise_sci

        if self.bler_data is None and self.bler_sci is None:
            clear_faded = np.where(sci_failed, only_sci >= self.thr_sci,
                                   only_data >= self.thr_data)
            clear_unfaded = np.where(sci_failed, nf_sci >= self.thr_sci,
                                     nf_data >= self.thr_data)
        else:
            ud = u_data[j, idx_fail]
            us = u_sci[j, idx_fail]
            clear_faded = np.where(
                sci_failed,
                self._decode(only_sci, self.bler_sci, self.thr_sci, us),
                self._decode(only_data, self.bler_data, self.thr_data, ud))
            clear_unfaded = np.where(
                sci_failed,
                self._decode(nf_sci, self.bler_sci, self.thr_sci, us),
                self._decode(nf_data, self.bler_data, self.thr_data, ud))

        causes = np.where(clear_faded, COLLISION,
                          np.where(clear_unfaded, FADING, NOISE_FLOOR))
        return np.where(is_tx[idx_fail], HD, causes).astype(np.int64)

    def _classify_gap_ends(self, s, j, rec, recs, idx_ok, is_tx) -> None:
        tx = rec.vid
        sel = idx_ok[self.gap_fails[tx, idx_ok] >= 2]
        if len(sel) == 0:
            return
        # dominant loss cause of the gap; ties prefer collision
        order = np.array([COLLISION, HD, NOISE_FLOOR, FADING])
        counts = self.cause_cnt[:, tx, sel][order]
        causes = order[np.argmax(counts, axis=0)]

        dom = self.dom_id[tx, sel]
        safe = np.maximum(dom, 0)
        rec_phase = self.dom_phase[tx, sel]
        rec_pair = self.dom_pair[tx, sel]
        tx_moved = ((s % CYCLE_MS) != self.fail_phase[tx, sel]) \
            | (rec.pair != self.fail_pair[tx, sel])
        dom_moved = (self.cur_phase[safe] != rec_phase) \
            | (self.cur_pair[safe] != rec_pair)
        # a blocker transmitting right now: same pair means the interference
        # is still here and the decode simply made it through
        dom_pair_now = np.full(self.n, -1, dtype=np.int16)
        for r in recs:
            dom_pair_now[r.vid] = r.pair
        dom_here = is_tx[safe] & (dom_pair_now[safe] == rec_pair)
        dom_elsewhere = is_tx[safe] & (dom_pair_now[safe] != rec_pair)

        mech = np.where(
            tx_moved | dom_moved | dom_elsewhere, RESELECTION,
            np.where(dom_here, BETTER_CONDITIONS, SLIPPAGE))
        mech = np.where(dom < 0, BETTER_CONDITIONS, mech)
        mech = np.where(np.isin(causes, (NOISE_FLOOR, FADING)),
                        BETTER_CONDITIONS, mech)

        gaps = s - self.last_rx[tx, sel]
        bins = self.wide_bins[tx, sel]
        np.add.at(self.store.end_counts, (bins, causes, mech), 1)
        long = gaps > 1000
        if long.any():
            np.add.at(self.store.end_counts_long,
                      (bins[long], causes[long], mech[long]), 1)

    def _log_events(self, s, tx, idx_ok, idx_fail, causes, sinr_row) -> None:
        db = ch.lin_to_db(np.maximum(sinr_row, 1e-30))
        for rx in idx_ok:
            self.event_log.write(EVENT_RECORD.pack(s, tx, rx, 0, 255,
                                                   float(db[rx])))
        for i, rx in enumerate(idx_fail):
            self.event_log.write(EVENT_RECORD.pack(s, tx, rx, 1,
                                                   int(causes[i]),
                                                   float(db[rx])))

    # -- main loop -----------------------------------------------------------

    def run(self) -> MetricStore:
        for s in range(self.end):
            self._congestion_step(s)
            self._generation_step(s)
            self._transmission_step(s)
        self._finalize()
        return self.store

    def _finalize(self) -> None:
        # age samples keep accruing after the last reception of each pair
        txi, rxi = np.nonzero(self.gated & (self.last_rx >= 0))
        if len(txi):
            prev = self.last_rx[txi, rxi]
            etas = self.last_eta[txi, rxi].astype(np.int64)
            lo_t = np.maximum(prev, self.warmup)
            self.store.add_ia_intervals(self.wide_bins[txi, rxi],
                                        etas + lo_t - prev,
                                        etas + self.end - prev)
        if len(self._cbr_series):
            self.store.add_cbr_series(self.warmup, self._cbr_series,
                                      len(self.central_ids))
        total_lost = int(self.store.loss_counts.sum())
        if self.store.tx_events != self.store.rx_events + total_lost:
            raise AssertionError(
                f"event conservation violated: {self.store.tx_events} sent != "
                f"{self.store.rx_events} received + {total_lost} lost")


def run_simulation(world: World, chan: ch.ChannelConfig | None = None,
                   **kwargs) -> MetricStore:
    """Build and run one simulation; returns its metric store."""
    return Simulation(world, chan, **kwargs).run()
