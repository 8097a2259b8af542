"""Radio channel: path loss, small-scale fading, SINR composition, decode.

Powers are handled in linear milliwatt throughout the hot path; dB helpers
exist at the edges.  Fading is Nakagami-m with distance-dependent shape,
drawn per (link, sub-frame, antenna) with no temporal correlation, which is
equivalent to drawing the power gain from Gamma(shape=m, scale=omega/m)
with unit mean.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scenario import InvalidConfigError, ScenarioConfig


def db_to_lin(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def lin_to_db(lin):
    return 10.0 * np.log10(lin)


def dbm_to_mw(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


@dataclass
class ChannelConfig:
    """Propagation and link-level model selection."""

    pathloss_model: str = "log_distance"   # or "table"
    pathloss_ref_db: float = 47.0          # loss at 1 m [dB]
    pathloss_exponent: float = 2.75
    pathloss_table: str | None = None      # two-column file: distance_m loss_db
    min_distance_m: float = 1.0            # clamp below this distance
    fading: bool = True                    # Nakagami on/off (off: gain = 1)
    ibe_first_db: float = -30.0            # leakage into the adjacent sub-channel
    ibe_other_db: float = -45.0            # leakage beyond the first neighbour
    bler_data: str | None = None           # optional BLER table for the data part
    bler_sci: str | None = None            # optional BLER table for the control part

    def validate(self) -> None:
        if self.pathloss_model not in ("log_distance", "table"):
            raise InvalidConfigError(f"unknown pathloss model {self.pathloss_model!r}")
        if self.pathloss_model == "table" and not self.pathloss_table:
            raise InvalidConfigError("pathloss_model=table needs pathloss_table")
        if self.min_distance_m <= 0:
            raise InvalidConfigError("min_distance_m must be positive")
        if self.ibe_first_db > 0 or self.ibe_other_db > 0:
            raise InvalidConfigError("in-band-emission attenuations are <= 0 dB")


# -- fading -----------------------------------------------------------------

def nakagami_m(distance_m):
    """Shape parameter versus link distance: 3 below 50 m, 1.5 to 150 m, 1 beyond."""
    d = np.asarray(distance_m, dtype=float)
    return np.where(d < 50.0, 3.0, np.where(d < 150.0, 1.5, 1.0))


def draw_fading_gain(m, rng: np.random.Generator, omega: float = 1.0, size=None):
    """Unit-mean power gains: Gamma(shape=m, scale=omega/m)."""
    m = np.asarray(m, dtype=float)
    return rng.gamma(shape=m, scale=omega / m, size=size)


# -- path loss --------------------------------------------------------------

class PathlossTable:
    """Piecewise-linear loss-vs-distance lookup from a two-column text file."""

    def __init__(self, distances_m: np.ndarray, losses_db: np.ndarray):
        d = np.asarray(distances_m, dtype=float)
        l = np.asarray(losses_db, dtype=float)
        if d.ndim != 1 or d.shape != l.shape or len(d) < 2:
            raise InvalidConfigError("pathloss table needs >= 2 (distance, loss) rows")
        if not np.all(np.diff(d) > 0):
            raise InvalidConfigError("pathloss table distances must increase strictly")
        self.d, self.l = d, l

    @classmethod
    def load(cls, path: str | Path) -> "PathlossTable":
        data = np.loadtxt(path, ndmin=2)
        if data.shape[1] != 2:
            raise InvalidConfigError(f"pathloss table {path}: expected two columns")
        return cls(data[:, 0], data[:, 1])

    def loss_db(self, distance_m):
        # clamped at both ends; interpolation is linear between nodes
        return np.interp(np.asarray(distance_m, dtype=float), self.d, self.l)


def pathloss_db(distance_m, cfg: ChannelConfig, table: PathlossTable | None = None):
    """Deterministic loss [dB] at the given link distance(s)."""
    d = np.maximum(np.asarray(distance_m, dtype=float), cfg.min_distance_m)
    if cfg.pathloss_model == "log_distance":
        return cfg.pathloss_ref_db + 10.0 * cfg.pathloss_exponent * np.log10(d)
    if table is None:
        table = PathlossTable.load(cfg.pathloss_table)
    return table.loss_db(d)


# -- link budget ------------------------------------------------------------

@dataclass(frozen=True)
class LinkPowers:
    """Per-message transmit powers [mW] split between data and control parts.

    The total radiated power is spread over data PRBs at a common spectral
    density and control PRBs at that density plus the configured boost, so
    the configured total is conserved.
    """

    data_mw: float
    sci_mw: float

    @classmethod
    def from_scenario(cls, sc: ScenarioConfig) -> "LinkPowers":
        total = dbm_to_mw(sc.tx_power_dbm)
        boost = db_to_lin(sc.sci_boost_db)
        psd = total / (sc.data_prbs + boost * sc.sci_prbs)   # mW per PRB
        return cls(data_mw=float(psd * sc.data_prbs),
                   sci_mw=float(psd * boost * sc.sci_prbs))


def noise_power_mw(sc: ScenarioConfig, n_prbs: int) -> float:
    """Thermal noise over the occupied bandwidth plus the receiver noise figure."""
    bw_hz = n_prbs * 180e3
    dbm = sc.thermal_noise_dbm_hz + 10.0 * np.log10(bw_hz) + sc.noise_figure_db
    return float(dbm_to_mw(dbm))


def ibe_attenuation_db(offset_subchannels, cfg: ChannelConfig):
    """Leakage attenuation for an interferer ``offset`` sub-channels away.

    Offset counts the gap between the closest sub-channels of the wanted and
    interfering grants; 0 means co-channel (no attenuation).
    """
    off = np.asarray(offset_subchannels)
    return np.where(off == 0, 0.0,
                    np.where(off == 1, cfg.ibe_first_db, cfg.ibe_other_db))


@dataclass
class SinrReport:
    """Per-antenna and combined SINR for one candidate reception."""

    per_antenna: np.ndarray    # linear SINR per receive branch
    combined_lin: float        # MRC: sum of per-branch linear SINRs

    @property
    def combined_db(self) -> float:
        return float(lin_to_db(self.combined_lin))


def compose_sinr(signal_mw_per_antenna: np.ndarray,
                 interferer_mw_per_antenna: np.ndarray | None,
                 interferer_offsets,
                 noise_mw: float,
                 cfg: ChannelConfig) -> SinrReport:
    """Combine one wanted signal with co- and adjacent-channel interference.

    ``signal_mw_per_antenna`` has shape (n_ant,); the interference matrix has
    shape (n_int, n_ant) and carries faded received powers before the
    in-band-emission mask, which is applied here from ``interferer_offsets``.
    """
    sig = np.asarray(signal_mw_per_antenna, dtype=float)
    if interferer_mw_per_antenna is None or len(np.atleast_1d(interferer_offsets)) == 0:
        total_int = np.zeros_like(sig)
    else:
        intp = np.asarray(interferer_mw_per_antenna, dtype=float)
        att = db_to_lin(ibe_attenuation_db(interferer_offsets, cfg))
        total_int = (intp * att[:, None]).sum(axis=0)
    per_ant = sig / (total_int + noise_mw)
    return SinrReport(per_antenna=per_ant, combined_lin=float(per_ant.sum()))


# -- decode -----------------------------------------------------------------

class BlerTable:
    """SINR -> block error rate lookup, linear interpolation on the dB axis."""

    def __init__(self, sinr_db: np.ndarray, bler: np.ndarray):
        s = np.asarray(sinr_db, dtype=float)
        b = np.asarray(bler, dtype=float)
        if s.ndim != 1 or s.shape != b.shape or len(s) < 2:
            raise InvalidConfigError("BLER table needs >= 2 (sinr, bler) rows")
        if not np.all(np.diff(s) > 0):
            raise InvalidConfigError("BLER table SINR axis must increase strictly")
        if np.any((b < 0) | (b > 1)):
            raise InvalidConfigError("BLER values outside [0, 1]")
        self.sinr_db, self.bler = s, b

    @classmethod
    def load(cls, path: str | Path) -> "BlerTable":
        data = np.loadtxt(path, ndmin=2)
        if data.shape[1] != 2:
            raise InvalidConfigError(f"BLER table {path}: expected two columns")
        return cls(data[:, 0], data[:, 1])

    def error_rate(self, sinr_db):
        # clamped to the end values outside the tabulated range
        return np.interp(np.asarray(sinr_db, dtype=float), self.sinr_db, self.bler)


@dataclass(frozen=True)
class DecodeModel:
    """Hard threshold by default; optional BLER draw when a table is loaded."""

    threshold_db: float
    bler: BlerTable | None = None

    def success_deterministic(self, sinr_db):
        """Threshold comparison, boundary inclusive.  Vectorised."""
        return np.asarray(sinr_db) >= self.threshold_db - 1e-12

    def success(self, sinr_db, uniform=None):
        """Decode outcome; ``uniform`` feeds the Bernoulli draw in BLER mode.

        The same uniform can be replayed against a counterfactual SINR, which
        keeps loss attribution well defined under the stochastic model.
        """
        if self.bler is None:
            return self.success_deterministic(sinr_db)
        u = np.asarray(uniform)
        return u >= self.bler.error_rate(sinr_db)
