"""
Link budget walkthrough
=======================

From transmit power to a decode decision: deterministic path loss, the
distance-dependent fading severity, thermal noise over the allocated PRBs,
and maximum-ratio combining across antennas.
"""

import numpy as np

from sidelink.channel import (
    ChannelConfig,
    DecodeModel,
    LinkPowers,
    SinrReport,
    compose_sinr,
    db_to_lin,
    draw_fading_gain,
    lin_to_db,
    nakagami_m,
    noise_power_mw,
    pathloss_db,
)
from sidelink.scenario import ScenarioConfig

sc = ScenarioConfig()
cfg = ChannelConfig()

# Total transmit power is split between control and data by PRB share, with
# the control part boosted; the two sum back to the configured 20 dBm.
powers = LinkPowers.from_scenario(sc)
print(f"data part  {lin_to_db(powers.data_mw):6.2f} dBm over {sc.data_prbs} PRBs")
print(f"sci part   {lin_to_db(powers.sci_mw):6.2f} dBm over {sc.sci_prbs} PRBs")
print(f"total      {lin_to_db(powers.data_mw + powers.sci_mw):6.2f} dBm")

# Deterministic attenuation, log-distance with a 47 dB reference intercept.
for d in (10, 50, 100, 200, 400):
    print(f"path loss at {d:4d} m: {pathloss_db(d, cfg):6.1f} dB")

# Fading severity falls off with distance: near links are close to
# deterministic, far ones are Rayleigh.
print("fading shape m:", [float(nakagami_m(d)) for d in (20, 100, 300)])
rng = np.random.default_rng(1)
for d in (20, 300):
    gains = draw_fading_gain(nakagami_m(d), rng, size=100_000)
    print(f"  d={d:3d} m: mean {gains.mean():.3f}, std {gains.std():.3f}")

# Noise floor over the message's PRBs.
noise_data = noise_power_mw(sc, sc.data_prbs)
print(f"noise over data PRBs: {lin_to_db(noise_data):.3f} dBm")

# One wanted signal at 150 m, one co-channel interferer at 400 m, two
# receive antennas, independent fading per antenna.
d_sig, d_int = 150.0, 400.0
sig = powers.data_mw * db_to_lin(-pathloss_db(d_sig, cfg)) \
    * draw_fading_gain(nakagami_m(d_sig), rng, size=2)
intf = powers.data_mw * db_to_lin(-pathloss_db(d_int, cfg)) \
    * draw_fading_gain(nakagami_m(d_int), rng, size=(1, 2))
report: SinrReport = compose_sinr(sig, intf, np.array([0]), noise_data, cfg)
print("per-antenna SINR:", np.round(lin_to_db(report.per_antenna), 2), "dB")
print(f"combined: {report.combined_db:.2f} dB")

decoder = DecodeModel(threshold_db=sc.sinr_threshold_data_db, bler=None)
print("decoded:", bool(decoder.success_deterministic(report.combined_db)))
