"""Configuration, world construction, and RNG substream behaviour."""


import numpy as np
import pytest

from sidelink.scenario import (
    InvalidConfigError,
    ScenarioConfig,
    SpsConfig,
    apply_overrides,
    build_world,
    coerce_kwargs,
    config_hash,
    derive_rng,
    load_config_file,
    update_from_strings,
)


def test_vehicle_count_and_spacing():
    sc = ScenarioConfig(highway_length_m=5000.0, density_vpk=400.0)
    assert sc.n_vehicles == 2000
    assert sc.spacing_m == pytest.approx(2.5)

    sparse = ScenarioConfig(highway_length_m=5000.0, density_vpk=125.0)
    assert sparse.n_vehicles == 625
    assert sparse.spacing_m == pytest.approx(8.0)


def test_world_positions_regular():
    sc = ScenarioConfig(highway_length_m=1000.0, density_vpk=100.0,
                        duration_s=5.0, warmup_s=1.0)
    world = build_world(sc)
    assert world.n_vehicles == 100
    diffs = np.diff(world.positions)
    np.testing.assert_allclose(diffs, 10.0)
    assert world.positions[0] >= 0.0
    assert world.positions[-1] <= 1000.0


def test_stats_bounds_middle_third():
    sc = ScenarioConfig(highway_length_m=3000.0, density_vpk=100.0,
                        duration_s=5.0, warmup_s=1.0)
    lo, hi = build_world(sc).stats_bounds
    assert lo == pytest.approx(1000.0)
    assert hi == pytest.approx(2000.0)


def test_derived_grid_quantities():
    sc20 = ScenarioConfig(bandwidth_mhz=20.0, subchannels_per_subframe=10)
    assert sc20.n_pairs == 5
    assert sc20.data_prbs == 18
    sc10 = ScenarioConfig(bandwidth_mhz=10.0, subchannels_per_subframe=5)
    assert sc10.n_pairs == 2


def test_validation_grid_exceeds_bandwidth():
    sc = ScenarioConfig(bandwidth_mhz=10.0, subchannels_per_subframe=10)
    with pytest.raises(InvalidConfigError):
        sc.validate()


def test_validation_misc_rejections():
    with pytest.raises(InvalidConfigError):
        ScenarioConfig(warmup_s=10.0, duration_s=5.0).validate()
    with pytest.raises(InvalidConfigError):
        ScenarioConfig(highway_length_m=10.0, density_vpk=100.0).validate()
    with pytest.raises(InvalidConfigError):
        ScenarioConfig(n_rx_antennas=0).validate()


def test_sps_t2_follows_delay_budget():
    assert SpsConfig().t2_ms == 90
    assert SpsConfig(pdb_ms=20).t2_ms == 20
    with pytest.raises(InvalidConfigError):
        SpsConfig(t2_ms=50).validate()


def test_sps_keep_prob_grid():
    for p in (0.0, 0.2, 0.4, 0.6, 0.8):
        cfg = SpsConfig(keep_prob=p)
        cfg.validate()
        assert cfg.reselect_prob == pytest.approx(1.0 - p)
    with pytest.raises(InvalidConfigError):
        SpsConfig(keep_prob=0.5).validate()
    with pytest.raises(InvalidConfigError):
        SpsConfig(keep_prob=0.9).validate()


def test_sps_counter_and_oneshot_bounds():
    with pytest.raises(InvalidConfigError):
        SpsConfig(cs_min=15, cs_max=5).validate()
    with pytest.raises(InvalidConfigError):
        SpsConfig(oneshot=(6, 2)).validate()
    SpsConfig(oneshot=(2, 6)).validate()
    SpsConfig(oneshot=(5, 15)).validate()


# -- RNG substreams ---------------------------------------------------------

def test_rng_streams_reproducible():
    a = derive_rng(42, 7).random(1000)
    b = derive_rng(42, 7).random(1000)
    np.testing.assert_array_equal(a, b)


def test_rng_streams_independent():
    a = derive_rng(42, 7).random(1000)
    b = derive_rng(42, 8).random(1000)
    assert not np.array_equal(a, b)


def test_rng_master_seed_changes_all_streams():
    for sid in range(4):
        a = derive_rng(1, sid).random(100)
        b = derive_rng(2, sid).random(100)
        assert not np.array_equal(a, b)


def test_world_rng_helpers_map_to_streams():
    sc = ScenarioConfig(highway_length_m=100.0, density_vpk=100.0,
                        duration_s=2.0, warmup_s=0.5, master_seed=5)
    world = build_world(sc)
    np.testing.assert_array_equal(world.vehicle_rng(3).random(10),
                                  derive_rng(5, 3).random(10))
    np.testing.assert_array_equal(world.channel_rng().random(10),
                                  derive_rng(5, world.n_vehicles).random(10))


# -- config files and overrides ---------------------------------------------

def test_config_file_round_trip(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("""
[scenario]
density_vpk = 250
bandwidth_mhz = 10
subchannels_per_subframe = 5
duration_s = 30

[sps]
keep_prob = 0.6
oneshot = 2,6
""")
    tree = load_config_file(path)
    sc = ScenarioConfig(**coerce_kwargs(ScenarioConfig, tree["scenario"], "scenario"))
    sps = SpsConfig(**coerce_kwargs(SpsConfig, tree["sps"], "sps"))
    assert sc.density_vpk == 250.0
    assert sc.subchannels_per_subframe == 5
    assert sps.keep_prob == 0.6
    assert sps.oneshot == (2, 6)


def test_overrides_win_over_file(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[scenario]\ndensity_vpk = 250\n")
    tree = load_config_file(path)
    apply_overrides(tree, ["scenario.density_vpk=400", "sps.keep_prob=0.4"])
    assert tree["scenario"]["density_vpk"] == "400"
    assert tree["sps"]["keep_prob"] == "0.4"


def test_override_requires_section_dot_key():
    with pytest.raises(InvalidConfigError):
        apply_overrides({}, ["density_vpk=400"])


def test_unknown_key_is_named_in_the_error():
    with pytest.raises(InvalidConfigError, match="density_vkp"):
        coerce_kwargs(ScenarioConfig, {"density_vkp": "400"}, "scenario")
    sc = ScenarioConfig()
    with pytest.raises(InvalidConfigError, match="no_such_knob"):
        update_from_strings(sc, {"no_such_knob": "1"}, "scenario")


def test_coercion_handles_optionals_and_tuples():
    sps = SpsConfig(**coerce_kwargs(
        SpsConfig, {"oneshot": "none", "esps_max_intervals": "3",
                    "pdb_ms": "50"}, "sps"))
    assert sps.oneshot is None
    assert sps.esps_max_intervals == 3
    assert sps.t2_ms == 40   # recomputed from the overridden budget


def test_config_hash_stable_and_sensitive():
    a = config_hash(ScenarioConfig(), SpsConfig())
    b = config_hash(ScenarioConfig(), SpsConfig())
    c = config_hash(ScenarioConfig(master_seed=2), SpsConfig())
    assert a == b
    assert a != c
    assert len(a) == len(c)


def test_build_world_validates_inputs():
    bad = ScenarioConfig(bandwidth_mhz=10.0, subchannels_per_subframe=10,
                         highway_length_m=100.0, density_vpk=100.0,
                         duration_s=2.0, warmup_s=0.5)
    with pytest.raises(InvalidConfigError):
        build_world(bad)
    with pytest.raises(InvalidConfigError):
        build_world(ScenarioConfig(highway_length_m=100.0, density_vpk=100.0,
                                   duration_s=2.0, warmup_s=0.5),
                    SpsConfig(keep_prob=0.5))
