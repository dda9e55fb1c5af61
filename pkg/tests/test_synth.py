import json
import math
from dataclasses import replace

import numpy as np
import pytest

from driftbench.errors import ApNotAlive, InvalidConfig
from driftbench.fpdb import rssi_series
from driftbench.synth import (
    EnvironmentConfig,
    HotspotEvent,
    build_environment,
    load_config,
    manifest,
    mean_rssi,
    path_loss_rssi,
    realize_events,
    simulate,
)

QUIET = dict(
    shadow_sigma=0.0,
    fast_sigma=0.0,
    hotspot_rate=0.0,
    p_fixed_fail_per_day=0.0,
    maintenance_period=0,
)


def small_cfg(**kw):
    base = dict(floor_width=12.0, floor_height=9.0, n_fixed_aps=4, anchor_samples_per_day=4)
    base.update(kw)
    return EnvironmentConfig(**base).validate()


def test_grid_size():
    env = build_environment(small_cfg(), 1)
    assert len(env.rps) == 20
    xs = {rp.x for rp in env.rps}
    ys = {rp.y for rp in env.rps}
    assert xs == {0.0, 3.0, 6.0, 9.0, 12.0} and ys == {0.0, 3.0, 6.0, 9.0}


def test_no_fixed_aps():
    assert build_environment(small_cfg(n_fixed_aps=0), 1).fixed_aps == ()


def test_environment_deterministic():
    a, b = build_environment(small_cfg(), 9), build_environment(small_cfg(), 9)
    assert a.fixed_aps == b.fixed_aps and a.rps == b.rps and a.shadow_key == b.shadow_key
    assert build_environment(small_cfg(), 10).fixed_aps != a.fixed_aps
    for ap in a.fixed_aps:
        assert 0 <= ap.x <= 12 and 0 <= ap.y <= 9 and 2.5 <= ap.exponent <= 3.5


@pytest.mark.parametrize(
    "field,value",
    [
        ("rp_spacing", 0.0),
        ("detection_threshold", -110.0),
        ("shadow_rho", 1.0),
        ("p_ephemeral_mac", 1.5),
        ("hotspot_rate", -1.0),
        ("epoch", "June"),
    ],
)
def test_invalid_config_names_field(field, value):
    with pytest.raises(InvalidConfig) as err:
        EnvironmentConfig(**{field: value}).validate()
    assert err.value.field == field


def test_config_file_roundtrip_and_unknown_key(tmp_path):
    cfg = small_cfg(env_trend_per_day=0.25)
    p = tmp_path / "env.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert load_config(p) == cfg
    p.write_text(json.dumps({"floor_width": 10, "bogus": 1}))
    with pytest.raises(InvalidConfig) as err:
        load_config(p)
    assert err.value.field == "bogus"


def test_path_loss_examples():
    assert path_loss_rssi(-40.0, 2.0, 1.0) == -40.0
    assert path_loss_rssi(-40.0, 2.0, 0.2) == -40.0  # clamped to d0
    assert path_loss_rssi(-40.0, 2.0, 10.0) == pytest.approx(-60.0, abs=1e-12)


def test_mean_rssi_at_reference_distance():
    env = build_environment(small_cfg(**QUIET), 3)
    ap = env.fixed_aps[0]
    assert mean_rssi(env, ap.ap_id, (ap.x, ap.y), 1) == pytest.approx(ap.rssi0, abs=1e-12)
    pos = (ap.x + 10.0, ap.y)
    assert mean_rssi(env, ap.ap_id, pos, 1) == pytest.approx(ap.rssi0 - 10 * ap.exponent, abs=1e-12)


def test_seasonal_term_periodic():
    env = build_environment(small_cfg(**QUIET, env_season_amp=4.0, env_season_period=7.0), 3)
    ap = env.fixed_aps[1]
    pos = (2.0, 2.0)
    assert mean_rssi(env, ap.ap_id, pos, 3) == pytest.approx(mean_rssi(env, ap.ap_id, pos, 10), abs=1e-12)
    assert mean_rssi(env, ap.ap_id, pos, 3) != pytest.approx(mean_rssi(env, ap.ap_id, pos, 4), abs=1e-6)


def test_mean_rssi_dead_ap():
    env = build_environment(small_cfg(), 3)
    with pytest.raises(ApNotAlive):
        mean_rssi(env, "ap_99", (0.0, 0.0), 1)


def test_trend_knob_monotone():
    n = 30
    gaps = []
    for trend in (0.0, 0.1, 0.5, 1.0):
        cfg = small_cfg(env_trend_per_day=trend, p_fixed_fail_per_day=0.0, maintenance_period=0)
        env = build_environment(cfg, 5)
        gaps.append(
            np.array(
                [
                    mean_rssi(env, ap.ap_id, (rp.x, rp.y), n) - mean_rssi(env, ap.ap_id, (rp.x, rp.y), 1)
                    for ap in env.fixed_aps
                    for rp in env.rps
                ]
            )
        )
    for lo, hi in zip(gaps, gaps[1:]):
        assert np.all(hi > lo)


def test_simulate_noise_free_days_identical():
    cfg = small_cfg(**QUIET)
    db = simulate(build_environment(cfg, 2), cfg, 5, 2)
    assert len(db.days()) == 5
    for ap in db.ap_index[:3]:
        for rp in (0, 7):
            raw = [samples for _, samples in rssi_series(db, ap, rp, "raw")]
            assert all(day == raw[0] for day in raw)
            daily = [m for _, m in rssi_series(db, ap, rp)]
            assert len(set(daily)) == 1


def test_simulate_zero_drift_per_device_variance_zero():
    cfg = small_cfg(**QUIET, device_offsets={"laptop": 0.0, "phone": 0.0, "anchor": 0.0})
    db = simulate(build_environment(cfg, 2), cfg, 4, 2)
    for ap in db.ap_index:
        samples = [v for _, s in rssi_series(db, ap, 0, "raw") for v in s]
        assert np.var(samples) == 0


def test_simulate_threshold_blocks_everything():
    cfg = small_cfg(detection_threshold=-10.0, tx_rssi0=-60.0)
    db = simulate(build_environment(cfg, 2), cfg, 3, 2)
    assert len(db.records) > 0
    assert all(not r.readings for r in db.records) and db.ap_index == ()


def test_readings_respect_threshold():
    cfg = small_cfg(detection_threshold=-80.0, hotspot_rate=1.0)
    db = simulate(build_environment(cfg, 4), cfg, 6, 4)
    vals = [v for r in db.records for v in r.readings.values()]
    assert vals and min(vals) >= -80 and max(vals) <= 0
    assert all(isinstance(v, int) for v in vals)


def test_ephemeral_hotspot_gets_daily_ids():
    cfg = small_cfg(**QUIET, n_fixed_aps=0, p_ephemeral_mac=1.0)
    env = build_environment(cfg, 1)
    hs = HotspotEvent(0, "hs_0", 2, 4, True, -40.0, 2.5)
    env = replace(env, hotspot_events=(hs,))
    db = simulate(env, cfg, 6, 1)
    assert db.ap_index == ("hs_0_d2", "hs_0_d3", "hs_0_d4")
    for ap in db.ap_index:
        days = {r.day_index for r in db.records if ap in r.readings}
        assert days == {int(ap.rsplit("_d", 1)[1])}


def test_sampling_schedule_counts():
    cfg = small_cfg(**QUIET, daily_visits_per_rp=2, anchor_samples_per_day=24, anchor_rp_ids=(0, 5))
    db = simulate(build_environment(cfg, 1), cfg, 2, 1)
    day1 = [r for r in db.records if r.day_index == 1]
    assert len(day1) == 2 * 20 + 2 * 24
    assert sum(r.device_id == "anchor" for r in day1) == 48
    assert all(r.timestamp.date().isoformat() == "2023-06-01" for r in day1)


def test_fixed_ap_count_non_increasing_without_replacement():
    cfg = small_cfg(hotspot_rate=0.0, replace_failed_aps=False, p_fixed_fail_per_day=0.1)
    env = realize_events(build_environment(cfg, 8), 40, 8)
    alive = [sum(a.alive_on(d) for a in env.fixed_aps) for d in range(1, 41)]
    assert all(b <= a for a, b in zip(alive, alive[1:]))
    assert alive[-1] < alive[0]


def test_failed_aps_replaced_with_new_mac():
    cfg = small_cfg(hotspot_rate=0.0, p_fixed_fail_per_day=0.1, replacement_delay=2)
    env = realize_events(build_environment(cfg, 8), 40, 8)
    replacements = [a for a in env.fixed_aps if "_r" in a.ap_id]
    assert replacements
    for rep in replacements:
        base = rep.ap_id.split("_r")[0]
        dead = [a for a in env.fixed_aps if a.ap_id.split("_r")[0] == base and a.alive_until is not None]
        assert any(rep.alive_from == a.alive_until + 1 + 2 for a in dead)


def test_maintenance_events_on_period():
    cfg = small_cfg(maintenance_period=7, p_maintenance_ap=1.0, p_maintenance_sleep=0.0, maintenance_delta=3.0)
    env = realize_events(build_environment(cfg, 1), 21, 1)
    assert {ev.first_day for ev in env.maintenance} == {7, 14, 21}
    assert {abs(ev.offset) for ev in env.maintenance} == {3.0}


def test_simulate_deterministic_and_manifest():
    cfg = small_cfg()
    a = simulate(build_environment(cfg, 11), cfg, 8, 11)
    b = simulate(build_environment(cfg, 11), cfg, 8, 11)
    assert a == b
    c = simulate(build_environment(cfg, 11), cfg, 8, 12)
    assert c != a
    man = manifest(a, cfg, 11, 8)
    assert man["counts"]["records"] == len(a.records)
    assert man["config"]["floor_width"] == 12.0
    json.dumps(man)


def test_shadow_ar1_statistics():
    cfg = EnvironmentConfig(shadow_sigma=3.0, shadow_rho=0.7).validate()
    env = build_environment(cfg, 0)
    track = env.shadow_track(0, 2000)
    assert abs(track.std() - 3.0) < 0.15
    lag1 = np.mean([np.corrcoef(row[:-1], row[1:])[0, 1] for row in track])
    assert abs(lag1 - 0.7) < 0.03
    assert math.isclose(env.shadow_track(0, 10)[3, 5], track[3, 5])
