"""Scenario construction: configuration, vehicle placement, RNG substreams.

All simulations run on a straight highway segment with regularly spaced
vehicles.  Time is discretised into 1 ms sub-frames; frequency into
sub-channels of 10 PRBs (180 kHz each).  Every broadcast message occupies
two contiguous sub-channels in one sub-frame.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class InvalidConfigError(ValueError):
    """Raised when a configuration violates a structural constraint."""


@dataclass
class ScenarioConfig:
    """Static scenario parameters (geometry, radio, run control)."""

    highway_length_m: float = 5000.0   # straight segment length [m]
    density_vpk: float = 400.0         # vehicles per km
    bandwidth_mhz: float = 20.0        # 10 or 20 MHz carrier
    subchannels_per_subframe: int = 10  # 5 at 10 MHz, 10 at 20 MHz
    prbs_per_subchannel: int = 10
    subchannels_per_bsm: int = 2       # contiguous pair per message
    sci_prbs: int = 2                  # control part, adjacent to data
    tx_power_dbm: float = 20.0         # total radiated power per message
    sci_boost_db: float = 3.0          # control PSD boost over data PSD
    noise_figure_db: float = 6.0
    thermal_noise_dbm_hz: float = -174.0
    sinr_threshold_data_db: float = 3.0   # data decode threshold (inclusive)
    sinr_threshold_sci_db: float = 0.0    # control decode threshold (inclusive)
    n_rx_antennas: int = 2             # equal-gain branches, MRC combining
    duration_s: float = 500.0
    warmup_s: float = 10.0             # statistics discarded before this
    stats_region_fraction: float = 1.0 / 3.0  # tx gating: middle of highway
    eval_radius_m: float = 500.0       # rx gating for statistics
    # congestion control (density-adaptive message rate)
    cc_radius_m: float = 100.0         # neighbour counting radius
    cc_interval_max_ms: float = 600.0  # generation interval ceiling
    cc_density_coeff: float = 25.0     # density breakpoint B
    cc_smoothing: float = 0.05         # EWMA weight on the fresh count
    master_seed: int = 1

    def validate(self) -> None:
        grid_mhz = self.subchannels_per_subframe * self.prbs_per_subchannel * 0.18
        if grid_mhz > self.bandwidth_mhz + 1e-9:
            raise InvalidConfigError(
                f"resource grid ({grid_mhz:.2f} MHz) exceeds bandwidth "
                f"({self.bandwidth_mhz} MHz)")
        if self.subchannels_per_bsm != 2:
            raise InvalidConfigError("a message occupies exactly 2 sub-channels")
        if self.subchannels_per_subframe < self.subchannels_per_bsm:
            raise InvalidConfigError("fewer sub-channels than one message needs")
        if self.n_vehicles < 2:
            raise InvalidConfigError("need at least two vehicles")
        if not 0 < self.stats_region_fraction <= 1:
            raise InvalidConfigError("stats_region_fraction outside (0, 1]")
        if self.warmup_s >= self.duration_s:
            raise InvalidConfigError("warmup_s must be shorter than duration_s")
        if self.sci_prbs >= self.prbs_per_subchannel * self.subchannels_per_bsm:
            raise InvalidConfigError("control part larger than the whole grant")
        if self.n_rx_antennas < 1:
            raise InvalidConfigError("need at least one receive antenna")
        if self.cc_density_coeff <= 0 or self.cc_radius_m <= 0:
            raise InvalidConfigError("congestion parameters must be positive")
        if not 0 < self.cc_smoothing <= 1:
            raise InvalidConfigError("cc_smoothing outside (0, 1]")

    # -- derived quantities -------------------------------------------------

    @property
    def n_vehicles(self) -> int:
        # count rounds down; the remainder is absorbed into the end gaps
        return int(self.density_vpk * self.highway_length_m / 1000.0)

    @property
    def spacing_m(self) -> float:
        return self.highway_length_m / self.n_vehicles

    @property
    def n_pairs(self) -> int:
        """Distinct grant positions per sub-frame (even-aligned 2-VRB pairs)."""
        return self.subchannels_per_subframe // 2

    @property
    def data_prbs(self) -> int:
        return self.prbs_per_subchannel * self.subchannels_per_bsm - self.sci_prbs

    @property
    def duration_subframes(self) -> int:
        return int(round(self.duration_s * 1000))

    @property
    def warmup_subframes(self) -> int:
        return int(round(self.warmup_s * 1000))


@dataclass
class SpsConfig:
    """Sensing-based semi-persistent scheduling parameters."""

    t1_ms: int = 4                     # earliest usable sub-frame after arrival
    pdb_ms: int = 100                  # packet delay budget
    t2_ms: int | None = None           # selection window end; max(pdb-10, 20)
    cs_min: int = 5                    # SPS counter draw, inclusive
    cs_max: int = 15
    keep_prob: float = 0.8             # probability of keeping VRBs at expiry
    oneshot: tuple[int, int] | None = None  # (min, max) one-shot counter draw
    esps_max_intervals: int | None = None   # force reselection after m intervals
    sensing_window_ms: int = 1000
    rsrp_exclude_init_dbm: float = -110.0   # starting exclusion threshold
    rsrp_step_db: float = 3.0               # raise per iteration under 20%
    candidate_fraction: float = 0.20
    cbr_rssi_threshold_dbm: float = -94.0   # busy sub-channel threshold

    def __post_init__(self) -> None:
        if self.t2_ms is None:
            self.t2_ms = max(self.pdb_ms - 10, 20)

    def validate(self) -> None:
        expected_t2 = max(self.pdb_ms - 10, 20)
        if self.t2_ms != expected_t2:
            raise InvalidConfigError(
                f"t2_ms must equal max(pdb-10, 20) = {expected_t2}, got {self.t2_ms}")
        if not 0 < self.t1_ms < self.t2_ms:
            raise InvalidConfigError("need 0 < t1 < t2")
        if not 0 < self.cs_min < self.cs_max:
            raise InvalidConfigError("need 0 < cs_min < cs_max")
        grid = np.arange(0.0, 0.81, 0.2)
        if not np.any(np.isclose(self.keep_prob, grid, atol=1e-9)):
            raise InvalidConfigError(
                f"keep_prob must lie on {{0, 0.2, 0.4, 0.6, 0.8}}, got {self.keep_prob}")
        if self.oneshot is not None:
            lo, hi = self.oneshot
            if not 0 < lo < hi:
                raise InvalidConfigError("one-shot counter window needs 0 < min < max")
        if self.esps_max_intervals is not None and self.esps_max_intervals < 1:
            raise InvalidConfigError("esps_max_intervals must be >= 1")
        if not 0 < self.candidate_fraction <= 1:
            raise InvalidConfigError("candidate_fraction outside (0, 1]")
        if self.sensing_window_ms < self.pdb_ms:
            raise InvalidConfigError("sensing window shorter than one SPS cycle")

    @property
    def reselect_prob(self) -> float:
        return 1.0 - self.keep_prob


def derive_rng(master_seed: int, stream_id: int) -> np.random.Generator:
    """Independent, reproducible substream from a master seed.

    Uses the counter-based Philox generator keyed through SeedSequence spawn
    keys, so any (seed, stream) pair gives the same stream on every platform
    and streams never overlap regardless of how much each one is consumed.
    """
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(stream_id,))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class World:
    """Immutable run context: validated configs plus vehicle placement."""

    scenario: ScenarioConfig
    sps: SpsConfig
    positions: np.ndarray       # (n,) metres from the left end

    @property
    def n_vehicles(self) -> int:
        return len(self.positions)

    @property
    def stats_bounds(self) -> tuple[float, float]:
        """Position interval whose transmitters enter the statistics."""
        length = self.scenario.highway_length_m
        frac = self.scenario.stats_region_fraction
        lo = length * (1 - frac) / 2
        return lo, lo + length * frac

    def vehicle_rng(self, vid: int) -> np.random.Generator:
        return derive_rng(self.scenario.master_seed, vid)

    def channel_rng(self) -> np.random.Generator:
        # stream index just past the per-vehicle block
        return derive_rng(self.scenario.master_seed, self.n_vehicles)


def build_world(scenario: ScenarioConfig, sps: SpsConfig | None = None) -> World:
    """Validate configs and lay the vehicles out on the highway."""
    sps = sps if sps is not None else SpsConfig()
    scenario.validate()
    sps.validate()
    n = scenario.n_vehicles
    spacing = scenario.spacing_m
    positions = (np.arange(n) + 0.5) * spacing
    return World(scenario=scenario, sps=sps, positions=positions)


# -- configuration files ----------------------------------------------------
#
# Plain INI text, one section per config dataclass:
#
#   [scenario]
#   density_vpk = 400
#   bandwidth_mhz = 20
#
#   [sps]
#   oneshot = 2,6
#
# Any key can be overridden from the command line with
# ``--set section.key=value``.


def _coerce(raw: str, ftype) -> object:
    raw = raw.strip()
    if ftype is bool or ftype == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise InvalidConfigError(f"not a boolean: {raw!r}")
    if raw.lower() in ("none", "off", ""):
        return None
    text = str(ftype)
    if "tuple" in text:
        parts = [p for p in raw.replace("(", "").replace(")", "").split(",") if p.strip()]
        return tuple(int(p) for p in parts)
    if ftype is int or "int" in text:
        return int(raw)
    if ftype is float or "float" in text:
        return float(raw)
    return raw


def _apply_to_dataclass(obj, key: str, raw: str, section: str):
    fields = {f.name: f for f in dataclasses.fields(obj)}
    if key not in fields:
        raise InvalidConfigError(f"unknown key [{section}] {key}")
    setattr(obj, key, _coerce(raw, fields[key].type))


def update_from_strings(obj, values: dict[str, str], section: str) -> None:
    """Set dataclass fields from raw string values, with type coercion."""
    for key, raw in values.items():
        _apply_to_dataclass(obj, key, raw, section)


def coerce_kwargs(cls, values: dict[str, str], section: str) -> dict:
    """Coerced constructor kwargs for a (possibly frozen) dataclass."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    out = {}
    for key, raw in values.items():
        if key not in fields:
            raise InvalidConfigError(f"unknown key [{section}] {key}")
        out[key] = _coerce(raw, fields[key].type)
    return out


def load_config_file(path: str | Path) -> dict[str, dict[str, str]]:
    """Read an INI config into a {section: {key: value}} dict of strings."""
    parser = configparser.ConfigParser()
    read = parser.read(str(path))
    if not read:
        raise InvalidConfigError(f"config file not found: {path}")
    return {s: dict(parser[s]) for s in parser.sections()}


def apply_overrides(tree: dict[str, dict[str, str]], pairs: list[str]) -> None:
    """Merge ``section.key=value`` strings into a config dict, in order."""
    for pair in pairs:
        if "=" not in pair or "." not in pair.split("=", 1)[0]:
            raise InvalidConfigError(
                f"override must look like section.key=value, got {pair!r}")
        target, value = pair.split("=", 1)
        section, key = target.split(".", 1)
        tree.setdefault(section.strip(), {})[key.strip()] = value


def config_hash(*configs) -> str:
    """Stable short digest of one or more config dataclasses."""
    blob = json.dumps([dataclasses.asdict(c) for c in configs],
                      sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
