"""Reception statistics: gap distributions, information age, PRR, load.

Gap and age samples are integers (sub-frame granularity), so both live in
count histograms with 1 ms cells and every distribution statistic derived
from a histogram is exact.  Stores from independent runs merge by summation,
so campaign aggregation is associative and order-independent.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# loss causes of one failed reception
HD, NOISE_FLOOR, COLLISION, FADING = 0, 1, 2, 3
LOSS_NAMES = ("half_duplex", "noise_floor", "collision", "fading")

# what removed the obstruction when a long gap finally ended
RESELECTION, SLIPPAGE, BETTER_CONDITIONS = 0, 1, 2
MECHANISM_NAMES = ("reselection", "slippage", "better_conditions")

# flattened per-gap labels derived from (dominant loss cause, mechanism)
END_CAUSE_NAMES = ("reselection", "slippage", "hd_ended", "better_conditions", "noise")


def nearest_rank_percentile(values, q: float):
    """q-th percentile by the nearest-rank rule on sorted samples."""
    v = np.sort(np.asarray(values))
    if len(v) == 0:
        raise ValueError("percentile of an empty sample set")
    rank = max(int(np.ceil(q * len(v))), 1)
    return v[rank - 1]


def percentile_from_hist(hist: np.ndarray, q: float) -> int:
    """Nearest-rank percentile of integer samples held as cell counts."""
    n = int(hist.sum())
    if n == 0:
        raise ValueError("percentile of an empty histogram")
    rank = max(int(np.ceil(q * n)), 1)
    return int(np.searchsorted(np.cumsum(hist), rank))


@dataclass
class CcdfCurve:
    """Strict-exceedance curve on a 1 ms grid: values[i] = P(X > i)."""

    values: np.ndarray

    @classmethod
    def from_samples(cls, samples) -> "CcdfCurve":
        s = np.asarray(samples, dtype=np.int64)
        if len(s) == 0:
            raise ValueError("CCDF of an empty sample set")
        hist = np.bincount(s)
        return cls.from_histogram(hist)

    @classmethod
    def from_histogram(cls, hist: np.ndarray) -> "CcdfCurve":
        n = hist.sum()
        if n == 0:
            raise ValueError("CCDF of an empty histogram")
        exceed = n - np.cumsum(hist)
        last = np.nonzero(hist)[0][-1]
        return cls(values=exceed[: last + 1] / n)

    def at(self, t_ms) -> np.ndarray:
        """Curve value at integer times; zero beyond the recorded support."""
        t = np.asarray(t_ms, dtype=np.int64)
        out = np.zeros(t.shape, dtype=float)
        inside = (t >= 0) & (t < len(self.values))
        out[inside] = self.values[t[inside]]
        return out

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ImprovementResult:
    value: float          # mean relative exceedance reduction over the range
    skipped: int          # grid points where the baseline curve was zero
    total: int


def relative_improvement(base: CcdfCurve, variant: CcdfCurve,
                         lo_ms: int = 3000, hi_ms: int = 10000) -> ImprovementResult:
    """Average of (F_base - F_variant) / F_base over a 1 ms grid.

    Grid points where the baseline has no exceedance mass are skipped and
    counted; callers should surface a warning when that exceeds 1 % of the
    grid.
    """
    t = np.arange(lo_ms, hi_ms + 1)
    fb = base.at(t)
    fv = variant.at(t)
    ok = fb > 0
    if not ok.any():
        raise ValueError("baseline curve has no mass on the comparison range")
    value = float(np.mean((fb[ok] - fv[ok]) / fb[ok]))
    return ImprovementResult(value=value, skipped=int((~ok).sum()), total=len(t))


def ia_series(rx_times, etas, t_start: int, t_end: int) -> np.ndarray:
    """Reference information-age sampler on the 1 ms grid [t_start, t_end).

    Age at time t is the time since the generation of the freshest message
    received by t: (t - last_rx) + eta of that message, where eta is its own
    transmission latency.  Times before the first reception yield no sample.
    """
    r = np.asarray(rx_times, dtype=np.int64)
    e = np.asarray(etas, dtype=np.int64)
    if len(r) == 0:
        return np.zeros(0, dtype=np.int64)
    t = np.arange(t_start, t_end, dtype=np.int64)
    idx = np.searchsorted(r, t, side="right") - 1
    valid = idx >= 0
    t, idx = t[valid], idx[valid]
    return t - r[idx] + e[idx]


# -- accumulation across a run ----------------------------------------------

class MetricStore:
    """Additive statistics container for one scenario cell.

    Distance handling: wide 50 m bins (centres at multiples of 50 m) hold the
    gap/age histograms, 1 m bins hold the PRR curve.  All contents are sums,
    so :meth:`merge` is associative and commutative.
    """

    def __init__(self, eval_radius_m: float = 500.0, max_gap_ms: int = 120_000):
        self.eval_radius_m = float(eval_radius_m)
        self.max_gap_ms = int(max_gap_ms)
        self.n_bins = int(round(eval_radius_m / 50.0)) + 1
        self.n_prr = int(np.ceil(eval_radius_m)) + 1
        self.ipg_hist = np.zeros((self.n_bins, self.max_gap_ms), dtype=np.int64)
        self.ia_diff = np.zeros((self.n_bins, self.max_gap_ms + 1), dtype=np.int64)
        self.prr_tx = np.zeros(self.n_prr, dtype=np.int64)
        self.prr_rx = np.zeros(self.n_prr, dtype=np.int64)
        # (distance bin, dominant loss cause, ending mechanism) counts;
        # second copy for gaps longer than one second
        self.end_counts = np.zeros((self.n_bins, 4, 3), dtype=np.int64)
        self.end_counts_long = np.zeros((self.n_bins, 4, 3), dtype=np.int64)
        self.loss_counts = np.zeros(4, dtype=np.int64)
        self.tx_events = 0
        self.rx_events = 0
        self.overflow = 0
        # channel-load time series indexed by absolute sub-frame: sum of
        # per-vehicle busy fractions and the number of observing vehicles
        self.cbr_sum = np.zeros(0)
        self.cbr_cnt = np.zeros(0, dtype=np.int64)
        self.interval_sum = 0.0
        self.interval_cnt = 0
        self.itt_max = 0

    # distance helpers ------------------------------------------------------

    def wide_bin(self, distance_m):
        return np.clip(np.rint(np.asarray(distance_m) / 50.0).astype(np.int64),
                       0, self.n_bins - 1)

    def prr_bin(self, distance_m):
        return np.clip(np.rint(np.asarray(distance_m)).astype(np.int64),
                       0, self.n_prr - 1)

    # recording (vectorised; called once per transmitter per sub-frame) -----

    def add_transmissions(self, prr_bins: np.ndarray) -> None:
        np.add.at(self.prr_tx, prr_bins, 1)
        self.tx_events += len(prr_bins)

    def add_receptions(self, prr_bins: np.ndarray) -> None:
        np.add.at(self.prr_rx, prr_bins, 1)
        self.rx_events += len(prr_bins)

    def add_losses(self, causes: np.ndarray) -> None:
        np.add.at(self.loss_counts, causes, 1)

    def add_ipg_samples(self, wide_bins: np.ndarray, gaps_ms: np.ndarray) -> None:
        self.overflow += int((gaps_ms >= self.max_gap_ms).sum())
        g = np.minimum(gaps_ms, self.max_gap_ms - 1)
        np.add.at(self.ipg_hist, (wide_bins, g), 1)

    def add_ia_intervals(self, wide_bins, lo_vals, hi_vals) -> None:
        """Add one age sample for every integer in [lo, hi) per interval."""
        lo = np.asarray(lo_vals, dtype=np.int64)
        hi = np.asarray(hi_vals, dtype=np.int64)
        keep = hi > lo
        if not keep.any():
            return
        b, lo, hi = np.asarray(wide_bins)[keep], lo[keep], hi[keep]
        clip_lo = np.minimum(lo, self.max_gap_ms)
        clip_hi = np.minimum(hi, self.max_gap_ms)
        np.add.at(self.ia_diff, (b, clip_lo), 1)
        np.add.at(self.ia_diff, (b, clip_hi), -1)
        # mass above the cap collapses into the last cell
        over = (np.maximum(hi - self.max_gap_ms, 0)
                - np.maximum(lo - self.max_gap_ms, 0))
        if over.any():
            self.overflow += int(over.sum())
            np.add.at(self.ia_diff, (b[over > 0], self.max_gap_ms - 1), over[over > 0])
            np.add.at(self.ia_diff, (b[over > 0], self.max_gap_ms), -over[over > 0])

    def add_gap_end(self, wide_bin: int, cause: int, mechanism: int,
                    gap_ms: int) -> None:
        self.end_counts[wide_bin, cause, mechanism] += 1
        if gap_ms > 1000:
            self.end_counts_long[wide_bin, cause, mechanism] += 1

    def _grow_cbr(self, end: int) -> None:
        if len(self.cbr_sum) < end:
            pad = end - len(self.cbr_sum)
            self.cbr_sum = np.concatenate([self.cbr_sum, np.zeros(pad)])
            self.cbr_cnt = np.concatenate(
                [self.cbr_cnt, np.zeros(pad, dtype=np.int64)])

    def add_cbr_series(self, t0_ms: int, sums: np.ndarray, count: int) -> None:
        """Add per-sub-frame busy-fraction sums observed by ``count`` vehicles."""
        end = t0_ms + len(sums)
        self._grow_cbr(end)
        self.cbr_sum[t0_ms:end] += sums
        self.cbr_cnt[t0_ms:end] += count

    def add_interval_observation(self, total_ms: float, count: int) -> None:
        self.interval_sum += total_ms
        self.interval_cnt += count

    def note_itt(self, itt_ms: int) -> None:
        if itt_ms > self.itt_max:
            self.itt_max = int(itt_ms)

    # derived views ---------------------------------------------------------

    def ia_hist(self) -> np.ndarray:
        return np.cumsum(self.ia_diff[:, :-1], axis=1)

    def ipg_ccdf(self, bin_center_m: int) -> CcdfCurve:
        return CcdfCurve.from_histogram(self.ipg_hist[self._bin_index(bin_center_m)])

    def ia_ccdf(self, bin_center_m: int) -> CcdfCurve:
        return CcdfCurve.from_histogram(self.ia_hist()[self._bin_index(bin_center_m)])

    def _bin_index(self, bin_center_m: int) -> int:
        idx = int(round(bin_center_m / 50.0))
        if not 0 <= idx < self.n_bins:
            raise ValueError(f"distance bin {bin_center_m} m outside the store")
        return idx

    def prr_at(self, distance_m: float) -> float | None:
        """PRR of the 1 m bin at this distance; None when nothing was sent."""
        b = int(self.prr_bin(distance_m))
        if self.prr_tx[b] == 0:
            return None
        return float(self.prr_rx[b] / self.prr_tx[b])

    def cbr_mean(self) -> float | None:
        count = int(self.cbr_cnt.sum())
        return (float(self.cbr_sum.sum()) / count) if count else None

    def mean_interval_ms(self) -> float | None:
        if self.interval_cnt == 0:
            return None
        return self.interval_sum / self.interval_cnt

    def end_cause_flat(self, long_only: bool = False,
                       bin_center_m: int | None = None) -> dict[str, int]:
        """Per-gap labels: collision gaps keep their ending mechanism, other
        causes collapse onto a single label each.  Summed over distance bins
        unless one bin centre is named."""
        src = self.end_counts_long if long_only else self.end_counts
        src = (src.sum(axis=0) if bin_center_m is None
               else src[self._bin_index(bin_center_m)])
        return {
            "reselection": int(src[COLLISION, RESELECTION]),
            "slippage": int(src[COLLISION, SLIPPAGE]),
            "hd_ended": int(src[HD].sum()),
            "better_conditions": int(src[COLLISION, BETTER_CONDITIONS]
                                     + src[FADING].sum()),
            "noise": int(src[NOISE_FLOOR].sum()),
        }

    # merging and output ----------------------------------------------------

    def merge(self, other: "MetricStore") -> "MetricStore":
        if (self.eval_radius_m, self.max_gap_ms) != (other.eval_radius_m,
                                                     other.max_gap_ms):
            raise ValueError("cannot merge stores with different layouts")
        self.ipg_hist += other.ipg_hist
        self.ia_diff += other.ia_diff
        self.prr_tx += other.prr_tx
        self.prr_rx += other.prr_rx
        self.end_counts += other.end_counts
        self.end_counts_long += other.end_counts_long
        self.loss_counts += other.loss_counts
        self.tx_events += other.tx_events
        self.rx_events += other.rx_events
        self.overflow += other.overflow
        self._grow_cbr(len(other.cbr_sum))
        self.cbr_sum[: len(other.cbr_sum)] += other.cbr_sum
        self.cbr_cnt[: len(other.cbr_cnt)] += other.cbr_cnt
        self.interval_sum += other.interval_sum
        self.interval_cnt += other.interval_cnt
        self.itt_max = max(self.itt_max, other.itt_max)
        return self

    def emit_csvs(self, outdir: str | Path,
                  ccdf_bins_m: tuple[int, ...] = (200, 300, 400)) -> list[Path]:
        """Write the standard per-cell CSV set; returns the created paths."""
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        written = []

        ia = self.ia_hist()
        for center in ccdf_bins_m:
            idx = self._bin_index(center)
            for name, hist in (("ipg", self.ipg_hist[idx]), ("ia", ia[idx])):
                path = out / f"ccdf_{name}_{center}m.csv"
                with path.open("w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow([f"{name}_ms", "ccdf"])
                    if hist.sum():
                        curve = CcdfCurve.from_histogram(hist)
                        for t, v in enumerate(curve.values):
                            w.writerow([t, f"{v:.10g}"])
                written.append(path)

        path = out / "prr_vs_distance.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["distance_m", "transmitted", "received", "prr"])
            for d in range(self.n_prr):
                if self.prr_tx[d]:
                    w.writerow([d, int(self.prr_tx[d]), int(self.prr_rx[d]),
                                f"{self.prr_rx[d] / self.prr_tx[d]:.10g}"])
        written.append(path)

        path = out / "percentiles.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_center_m", "ipg_p999_ms", "ia_p999_ms",
                        "ipg_samples", "ia_samples"])
            for idx in range(self.n_bins):
                n_ipg = int(self.ipg_hist[idx].sum())
                n_ia = int(ia[idx].sum())
                if n_ipg == 0 and n_ia == 0:
                    continue
                p_ipg = percentile_from_hist(self.ipg_hist[idx], 0.999) if n_ipg else ""
                p_ia = percentile_from_hist(ia[idx], 0.999) if n_ia else ""
                w.writerow([idx * 50, p_ipg, p_ia, n_ipg, n_ia])
        written.append(path)

        path = out / "cbr_timeseries.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_ms", "cbr"])
            for t in np.nonzero(self.cbr_cnt)[0]:
                w.writerow([int(t),
                            f"{self.cbr_sum[t] / self.cbr_cnt[t]:.10g}"])
        written.append(path)

        path = out / "end_causes.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_center_m", "gap_cause", "end_mechanism",
                        "count", "count_gt_1s"])
            for b in range(self.n_bins):
                if not (self.end_counts[b].any()
                        or self.end_counts_long[b].any()):
                    continue
                for c in range(4):
                    for m in range(3):
                        w.writerow([b * 50, LOSS_NAMES[c], MECHANISM_NAMES[m],
                                    int(self.end_counts[b, c, m]),
                                    int(self.end_counts_long[b, c, m])])
        written.append(path)

        path = out / "summary.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            fields = ["tx_events", "rx_events", "cbr_mean", "mean_interval_ms",
                      "max_itt_ms", "prr_200m", "prr_300m", "prr_400m",
                      "gap_overflow"]
            w.writerow(fields)
            fmt = lambda x: "" if x is None else f"{x:.10g}"
            w.writerow([self.tx_events, self.rx_events, fmt(self.cbr_mean()),
                        fmt(self.mean_interval_ms()), self.itt_max,
                        fmt(self.prr_at(200)), fmt(self.prr_at(300)),
                        fmt(self.prr_at(400)), self.overflow])
        written.append(path)
        return written
