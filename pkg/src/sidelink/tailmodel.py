"""Closed-form persistence model for long inter-packet gaps.

Long gaps are dominated by two transmitters repeatedly landing on the same
resource.  The model tracks, opportunity by opportunity, the probability
that the deadlock breaks: either party's scheduler counter may force a
resource change (with its keep/reselect draw), an optional one-shot counter
may move a single transmission elsewhere, and, when the generation interval
is not a multiple of the scheduling cycle, the two transmission phases drift
apart on their own.  Opportunity k maps to time k * interval_ms.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


def q_k(k, rho: float, sigma: float, p: float):
    """Per-opportunity reselection probability of one counter process.

    Zero while the counter cannot have expired (k <= rho), then
    2 k p / ((sigma + rho)(k - rho)), clamped into [0, 1].  The clamp keeps
    early opportunities probabilistically meaningful; the unclamped form
    tends to 2 p / (sigma + rho) from above as k grows.
    """
    k = np.asarray(k, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = 2.0 * k * p / ((sigma + rho) * (k - rho))
    return np.where(k <= rho, 0.0, np.clip(raw, 0.0, 1.0))


def expected_reselection_spacing(rho: float, sigma: float, p: float) -> float:
    """Mean transmissions between reselections: (rho + (sigma - rho)/2) / p."""
    return (rho + (sigma - rho) / 2.0) / p


def q_interleaved(q_s, q_o):
    """Either process (or both) reselecting: q_o(1-q_s) + q_s(1-q_o) + q_s q_o."""
    q_s = np.asarray(q_s, dtype=float)
    q_o = np.asarray(q_o, dtype=float)
    return q_o * (1.0 - q_s) + q_s * (1.0 - q_o) + q_s * q_o


def p_unlock(q_i, p_f):
    """Probability the gap ends at one opportunity.

    Exactly one side moves and the freed transmission gets through with
    probability p_f, or the still-colliding side keeps failing while the
    observed one got out, or both move and the reception succeeds:
    (1-q)q p_f + (1-q)q + q^2 p_f.
    """
    q = np.asarray(q_i, dtype=float)
    return (1.0 - q) * q * p_f + (1.0 - q) * q + q * q * p_f


@dataclass(frozen=True)
class TailModelParams:
    """Inputs of the gap-tail curves."""

    rho_s: int = 5                 # SPS counter draw bounds
    sigma_s: int = 15
    reselect_prob: float = 0.2     # 1 - keep probability
    oneshot: tuple[int, int] | None = None   # one-shot counter bounds
    p_f: float = 0.95              # success probability once unblocked
    pdb_ms: int = 100              # delay budget (scheduling cycle length)
    t1_ms: int = 4
    interval_ms: float = 310.0     # generation interval driving the k axis
    k_max: int = 64

    def validate(self) -> None:
        if not 0 < self.rho_s < self.sigma_s:
            raise ValueError("need 0 < rho_s < sigma_s")
        if not 0 < self.reselect_prob <= 1:
            raise ValueError("reselect_prob outside (0, 1]")
        if not 0 <= self.p_f <= 1:
            raise ValueError("p_f outside [0, 1]")
        if self.oneshot is not None and not 0 < self.oneshot[0] < self.oneshot[1]:
            raise ValueError("one-shot bounds need 0 < rho < sigma")
        if self.interval_ms <= 0 or self.k_max < 1:
            raise ValueError("interval_ms and k_max must be positive")


def unlock_series(params: TailModelParams) -> np.ndarray:
    """p_unlock at opportunities 1..k_max."""
    k = np.arange(1, params.k_max + 1)
    q_s = q_k(k, params.rho_s, params.sigma_s, params.reselect_prob)
    if params.oneshot is not None:
        q_o = q_k(k, params.oneshot[0], params.oneshot[1], 1.0)
    else:
        q_o = np.zeros_like(q_s)
    return p_unlock(q_interleaved(q_s, q_o), params.p_f)


@dataclass
class TailCurve:
    """P(gap exceeds opportunity k), k = 0..k_max, with a ms time axis."""

    exceed: np.ndarray
    interval_ms: float

    @property
    def t_ms(self) -> np.ndarray:
        return np.arange(len(self.exceed)) * self.interval_ms


def tail_no_slippage(params: TailModelParams) -> TailCurve:
    """Pure counter-driven escape: P(T > k) = prod_{i<=k} (1 - p_unlock(i))."""
    params.validate()
    pu = unlock_series(params)
    exceed = np.concatenate([[1.0], np.cumprod(1.0 - pu)])
    return TailCurve(exceed=exceed, interval_ms=params.interval_ms)


def slippage_gamma(t1_ms: int, pdb_ms: int) -> float:
    """Phase-wrap coefficient: t1 / (pdb - t1)."""
    return t1_ms / (pdb_ms - t1_ms)


def slippage_prob(k, params: TailModelParams):
    """Probability the phase drift alone splits the two transmitters at step k.

    Piecewise in k with the drift per cycle psi = interval mod pdb; identically
    zero when psi is zero (in-phase generation never drifts).  The middle
    branch covers psi - t1 < k <= psi + t1, the late branch is gamma^2.
    Negative early-branch values (large psi) clamp to zero.
    """
    xi, t1 = params.pdb_ms, params.t1_ms
    psi = params.interval_ms % xi
    k = np.asarray(k, dtype=float)
    if psi == 0:
        return np.zeros_like(k)
    gamma = slippage_gamma(t1, xi)
    span = xi - t1
    phi = span - k * psi
    early = (psi / span) * (phi / span + (phi + t1) / span)
    mid = 2.0 * gamma ** 2 + gamma * (psi - t1) / span
    late = gamma ** 2
    out = np.where(k <= psi - t1, early, np.where(k <= psi + t1, mid, late))
    return np.clip(out, 0.0, 1.0)


def tail_with_slippage(params: TailModelParams) -> TailCurve:
    """Counter-driven escape combined with cumulative phase-drift splitting.

    The no-drift product is scaled by (1 - sum_i q_a(i)); once the cumulative
    drift probability passes one the curve is floored at zero, with a warning,
    since the approximation has spent all its mass.
    """
    base = tail_no_slippage(params)
    k = np.arange(1, params.k_max + 1)
    cum_drift = np.cumsum(slippage_prob(k, params))
    factor = 1.0 - cum_drift
    if (factor < 0).any():
        warnings.warn("cumulative slippage probability exceeded 1; tail floored "
                      "at zero", RuntimeWarning, stacklevel=2)
        factor = np.maximum(factor, 0.0)
    exceed = base.exceed.copy()
    exceed[1:] *= factor
    return TailCurve(exceed=exceed, interval_ms=params.interval_ms)


# -- comparison against a measured distribution -----------------------------

def fit_log_slope(t_ms, values, lo_ms: float = 3000.0, hi_ms: float = 10000.0,
                  min_points: int = 3) -> float:
    """Least-squares slope of ln(value) versus time in seconds on [lo, hi]."""
    t = np.asarray(t_ms, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = (t >= lo_ms) & (t <= hi_ms) & (v > 0)
    if keep.sum() < min_points:
        raise ValueError(f"need >= {min_points} positive points on the fit range, "
                         f"got {int(keep.sum())}")
    x = t[keep] / 1000.0
    y = np.log(v[keep])
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


@dataclass(frozen=True)
class TailComparison:
    slope_model: float
    slope_sim: float
    slope_ratio: float       # max(r, 1/r) for r = sim/model; 1 means equal
    rms_log_gap: float       # after anchoring the model at the anchor time


def compare_tail(curve: TailCurve, sim_ccdf_values: np.ndarray,
                 anchor_ms: float = 3000.0, lo_ms: float = 3000.0,
                 hi_ms: float = 10000.0) -> TailComparison:
    """Slope agreement and anchored gap between model and measured CCDF.

    ``sim_ccdf_values`` sits on the 1 ms grid starting at 0.  The model curve
    is interpolated in log space onto that grid, scaled to match the measured
    curve at ``anchor_ms``, and compared where both are positive.
    """
    sim = np.asarray(sim_ccdf_values, dtype=float)
    t_sim = np.arange(len(sim), dtype=float)
    pos = curve.exceed > 0
    if pos.sum() < 2:
        raise ValueError("model curve has no positive support to compare")
    model_log = np.interp(t_sim, curve.t_ms[pos], np.log(curve.exceed[pos]),
                          left=0.0, right=-np.inf)

    slope_model = fit_log_slope(curve.t_ms, curve.exceed, lo_ms, hi_ms)
    slope_sim = fit_log_slope(t_sim, sim, lo_ms, hi_ms)
    r = slope_sim / slope_model
    ratio = max(abs(r), 1.0 / abs(r)) if r != 0 else np.inf

    ai = int(round(anchor_ms))
    if ai >= len(sim) or sim[ai] <= 0 or not np.isfinite(model_log[ai]):
        raise ValueError("anchor point lies outside the measured support")
    shift = np.log(sim[ai]) - model_log[ai]
    grid = (t_sim >= lo_ms) & (t_sim <= hi_ms) & (sim > 0) & np.isfinite(model_log)
    gap = np.log(sim[grid]) - (model_log[grid] + shift)
    return TailComparison(slope_model=slope_model, slope_sim=slope_sim,
                          slope_ratio=float(ratio),
                          rms_log_gap=float(np.sqrt(np.mean(gap ** 2))))
