"""Synthetic multi-day fingerprint databases with controllable drift.

The radio model is log-distance path loss with a per-AP exponent, an AR(1)
day-level shadowing term per (AP, RP), white per-sample noise and additive
drift terms (linear trend and a seasonal sinusoid).  On top of that the
generator realizes AP churn: mobile hotspots (optionally with a fresh MAC
every day), failing fixed APs that get replaced under a new MAC, and
periodic maintenance that shifts transmit power or puts APs to sleep.

None of the default rates or levels are measured values; they are order of
magnitude guesses chosen to give visible but moderate drift.
"""

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import date, datetime, time, timedelta, timezone

import numpy as np

from .errors import ApNotAlive, InvalidConfig
from .fpdb import NOT_DETECTED, RSSI_MAX, DynamicDatabase, FingerprintRecord, ReferencePoint
from .rng import RngStream, derive_key, derive_keys, keyed_normal, keyed_uniform

REFERENCE_DISTANCE = 1.0


@dataclass(frozen=True)
class EnvironmentConfig:
    floor_width: float = 24.0
    floor_height: float = 9.0
    rp_spacing: float = 3.0
    n_fixed_aps: int = 12
    tx_rssi0: float = -35.0
    path_loss_exponent_range: tuple = (2.5, 3.5)
    shadow_sigma: float = 3.0
    shadow_rho: float = 0.7
    fast_sigma: float = 2.0
    detection_threshold: float = -95.0
    hotspot_rate: float = 0.5
    hotspot_lifetime_mean: float = 3.0
    hotspot_power_offset: float = -5.0
    p_ephemeral_mac: float = 0.3
    p_fixed_fail_per_day: float = 0.002
    replace_failed_aps: bool = True
    replacement_delay: int = 3
    maintenance_period: int = 14
    maintenance_delta: float = 3.0
    p_maintenance_ap: float = 0.2
    p_maintenance_sleep: float = 0.2
    env_trend_per_day: float = 0.0
    env_season_amp: float = 0.0
    env_season_period: float = 7.0
    device_offsets: dict = field(default_factory=lambda: {"laptop": 0.0, "phone": -2.0, "anchor": 1.0})
    user_devices: tuple = ("laptop", "phone")
    anchor_device: str = "anchor"
    anchor_rp_ids: tuple = (0,)
    anchor_samples_per_day: int = 24
    daily_visits_per_rp: int = 2
    epoch: str = "2023-06-01"

    def __post_init__(self):
        # JSON gives lists; keep the dataclass hash-free but normalize sequences
        object.__setattr__(self, "path_loss_exponent_range", tuple(self.path_loss_exponent_range))
        object.__setattr__(self, "user_devices", tuple(self.user_devices))
        object.__setattr__(self, "anchor_rp_ids", tuple(int(i) for i in self.anchor_rp_ids))
        object.__setattr__(self, "device_offsets", dict(self.device_offsets))

    __hash__ = None

    def validate(self):
        def bad(name, reason):
            raise InvalidConfig(name, reason)

        if not self.floor_width > 0:
            bad("floor_width", "must be > 0")
        if not self.floor_height > 0:
            bad("floor_height", "must be > 0")
        if not self.rp_spacing > 0:
            bad("rp_spacing", "must be > 0")
        if self.n_fixed_aps < 0:
            bad("n_fixed_aps", "must be >= 0")
        lo_hi = self.path_loss_exponent_range
        if len(lo_hi) != 2 or not 0 < lo_hi[0] <= lo_hi[1]:
            bad("path_loss_exponent_range", "must be [min, max] with 0 < min <= max")
        for name in ("shadow_sigma", "fast_sigma", "maintenance_delta", "env_season_amp"):
            if getattr(self, name) < 0:
                bad(name, "must be >= 0")
        if not 0 <= self.shadow_rho < 1:
            bad("shadow_rho", "must lie in [0, 1)")
        if not NOT_DETECTED < self.detection_threshold <= RSSI_MAX:
            bad("detection_threshold", f"must lie in ({NOT_DETECTED}, {RSSI_MAX}]")
        if self.hotspot_rate < 0:
            bad("hotspot_rate", "must be >= 0")
        if self.hotspot_lifetime_mean < 1:
            bad("hotspot_lifetime_mean", "must be >= 1 day")
        for name in ("p_ephemeral_mac", "p_fixed_fail_per_day", "p_maintenance_ap", "p_maintenance_sleep"):
            if not 0 <= getattr(self, name) <= 1:
                bad(name, "must be a probability in [0, 1]")
        if self.replacement_delay < 0:
            bad("replacement_delay", "must be >= 0")
        if self.maintenance_period < 0:
            bad("maintenance_period", "must be >= 0 (0 disables maintenance)")
        if not self.env_season_period > 0:
            bad("env_season_period", "must be > 0")
        if not self.user_devices:
            bad("user_devices", "needs at least one device")
        if self.daily_visits_per_rp < 0:
            bad("daily_visits_per_rp", "must be >= 0")
        if not 0 <= self.anchor_samples_per_day <= 24 * 60:
            bad("anchor_samples_per_day", "must lie in [0, 1440]")
        try:
            date.fromisoformat(self.epoch)
        except (TypeError, ValueError):
            bad("epoch", "must be an ISO date like 2023-06-01")
        return self

    def epoch_date(self):
        return date.fromisoformat(self.epoch)

    def device_offset(self, device):
        return float(self.device_offsets.get(device, 0.0))

    def to_dict(self):
        d = asdict(self)
        d["path_loss_exponent_range"] = list(self.path_loss_exponent_range)
        d["user_devices"] = list(self.user_devices)
        d["anchor_rp_ids"] = list(self.anchor_rp_ids)
        return d

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidConfig(unknown[0], "unknown configuration key")
        try:
            cfg = cls(**data)
        except (TypeError, ValueError) as exc:
            raise InvalidConfig("<config>", str(exc)) from None
        return cfg.validate()


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidConfig("<file>", f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise InvalidConfig("<file>", "config must be a JSON object")
    return EnvironmentConfig.from_dict(data)


@dataclass(frozen=True)
class FixedAp:
    slot: int
    ap_id: str
    x: float
    y: float
    rssi0: float
    exponent: float
    alive_from: int = 1
    alive_until: int = None  # last alive day, inclusive; None = forever

    def alive_on(self, day):
        return self.alive_from <= day and (self.alive_until is None or day <= self.alive_until)


@dataclass(frozen=True)
class HotspotEvent:
    slot: int
    base_id: str
    birth_day: int
    death_day: int  # last alive day, inclusive
    ephemeral: bool
    rssi0: float
    exponent: float

    def alive_on(self, day):
        return self.birth_day <= day <= self.death_day

    def ap_id_on(self, day):
        return f"{self.base_id}_d{day}" if self.ephemeral else self.base_id


@dataclass(frozen=True)
class MaintenanceEvent:
    slot: int
    first_day: int
    last_day: int
    offset: float
    sleep: bool

    def active_on(self, day):
        return self.first_day <= day <= self.last_day


@dataclass(frozen=True, eq=False)
class Environment:
    cfg: EnvironmentConfig
    seed: int
    rps: tuple
    fixed_aps: tuple
    hotspot_events: tuple = ()
    maintenance: tuple = ()
    shadow_key: int = 0
    hotspot_key: int = 0
    _shadow_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def rp_positions(self):
        return np.array([(rp.x, rp.y) for rp in self.rps], dtype=np.float64).reshape(-1, 2)

    def next_slot(self):
        slots = [a.slot for a in self.fixed_aps] + [h.slot for h in self.hotspot_events]
        return max(slots, default=-1) + 1

    def emitter(self, ap, day):
        """Resolve an AP id (or emitter object) to the emitter alive on ``day``."""
        if isinstance(ap, (FixedAp, HotspotEvent)):
            if not ap.alive_on(day):
                raise ApNotAlive(f"{ap} is not alive on day {day}")
            return ap
        for a in self.fixed_aps:
            if a.ap_id == ap and a.alive_on(day):
                return a
        for h in self.hotspot_events:
            if h.alive_on(day) and h.ap_id_on(day) == ap:
                return h
        raise ApNotAlive(f"no emitter {ap!r} alive on day {day}")

    def emitter_position(self, em, day):
        if isinstance(em, FixedAp):
            return em.x, em.y
        key = derive_key(self.hotspot_key, em.slot)
        u = keyed_uniform(key, np.array([2 * day, 2 * day + 1], dtype=np.uint64))
        return float(u[0] * self.cfg.floor_width), float(u[1] * self.cfg.floor_height)

    def shadow_track(self, slot, n_days):
        """AR(1) shadowing, shape (n_rps, n_days); column d-1 is day d."""
        cached = self._shadow_cache.get(slot)
        if cached is not None and cached.shape[1] >= n_days:
            return cached[:, :n_days]
        cfg = self.cfg
        n_rps = len(self.rps)
        keys = derive_keys(derive_key(self.shadow_key, slot), np.arange(n_rps))
        z = keyed_normal(keys[:, None], np.arange(n_days, dtype=np.uint64)[None, :])
        out = np.empty((n_rps, n_days))
        innov = cfg.shadow_sigma * math.sqrt(1.0 - cfg.shadow_rho**2)
        if n_days:
            out[:, 0] = cfg.shadow_sigma * z[:, 0]
        for d in range(1, n_days):
            out[:, d] = cfg.shadow_rho * out[:, d - 1] + innov * z[:, d]
        self._shadow_cache[slot] = out
        return out

    def maintenance_state(self, slot, day):
        """(power offset, asleep) for an emitter slot on a day."""
        offset, asleep = 0.0, False
        for ev in self.maintenance:
            if ev.slot == slot and ev.active_on(day):
                offset += ev.offset
                asleep = asleep or ev.sleep
        return offset, asleep

    def drift_term(self, day):
        cfg = self.cfg
        return cfg.env_trend_per_day * day + cfg.env_season_amp * math.sin(
            2.0 * math.pi * day / cfg.env_season_period
        )

    def nearest_rp_index(self, position):
        pos = self.rp_positions()
        d2 = np.sum((pos - np.asarray(position, dtype=np.float64)) ** 2, axis=1)
        return int(np.argmin(d2))


def rp_grid(cfg):
    nx = int(math.floor(cfg.floor_width / cfg.rp_spacing + 1e-9)) + 1
    ny = int(math.floor(cfg.floor_height / cfg.rp_spacing + 1e-9)) + 1
    rps = []
    for j in range(ny):
        for i in range(nx):
            rps.append(ReferencePoint(len(rps), i * cfg.rp_spacing, j * cfg.rp_spacing, 0))
    return tuple(rps)


def build_environment(cfg, seed):
    """Lay out the RP grid and place the fixed APs; deterministic in (cfg, seed)."""
    cfg.validate()
    root = RngStream(seed, 0)
    rps = rp_grid(cfg)
    place = root.child(0)
    lo, hi = cfg.path_loss_exponent_range
    aps = []
    for k in range(cfg.n_fixed_aps):
        x = place.uniform(0.0, cfg.floor_width)
        y = place.uniform(0.0, cfg.floor_height)
        gamma = place.uniform(lo, hi)
        aps.append(FixedAp(k, f"ap_{k}", x, y, cfg.tx_rssi0, gamma))
    return Environment(
        cfg=cfg,
        seed=int(seed),
        rps=rps,
        fixed_aps=tuple(aps),
        shadow_key=root.child(1).key,
        hotspot_key=root.child(2).key,
    )


def path_loss_rssi(rssi0, exponent, distance):
    d = np.maximum(distance, REFERENCE_DISTANCE)
    return rssi0 - 10.0 * exponent * np.log10(d / REFERENCE_DISTANCE)


def mean_rssi(env, ap, position, day):
    """Noise-free RSSI level of ``ap`` at ``position`` on ``day``."""
    em = env.emitter(ap, day)
    offset, asleep = env.maintenance_state(em.slot, day)
    if asleep:
        raise ApNotAlive(f"{ap} is asleep (maintenance) on day {day}")
    ex, ey = env.emitter_position(em, day)
    px, py = position
    dist = math.hypot(px - ex, py - ey)
    rp_idx = env.nearest_rp_index(position)
    shadow = env.shadow_track(em.slot, day)[rp_idx, day - 1]
    return float(path_loss_rssi(em.rssi0, em.exponent, dist)) + shadow + offset + env.drift_term(day)


def realize_events(env, n_days, seed):
    """Draw AP churn for ``n_days`` and return an environment carrying it.

    Per day the order is maintenance, then failures, then hotspot births.
    Events already present on ``env`` are kept.
    """
    cfg = env.cfg
    root = RngStream(seed, 1)
    maint_root, fail_root, hot_root = root.child(0), root.child(1), root.child(2)
    fixed = list(env.fixed_aps)
    hotspots = list(env.hotspot_events)
    maintenance = list(env.maintenance)
    slot = env.next_slot()
    lo, hi = cfg.path_loss_exponent_range
    n_hot = sum(1 for _ in hotspots)
    replaced = {}

    for day in range(1, n_days + 1):
        if cfg.maintenance_period and day % cfg.maintenance_period == 0:
            rs = maint_root.child(day)
            last = day + cfg.maintenance_period - 1
            for ap in fixed:
                if not ap.alive_on(day) or not rs.bernoulli(cfg.p_maintenance_ap):
                    continue
                if rs.bernoulli(cfg.p_maintenance_sleep):
                    maintenance.append(MaintenanceEvent(ap.slot, day, last, 0.0, True))
                else:
                    sign = 1.0 if rs.bernoulli(0.5) else -1.0
                    maintenance.append(
                        MaintenanceEvent(ap.slot, day, last, sign * cfg.maintenance_delta, False)
                    )

        if cfg.p_fixed_fail_per_day > 0:
            rs = fail_root.child(day)
            for i, ap in enumerate(list(fixed)):
                if not ap.alive_on(day) or ap.alive_until is not None:
                    continue
                if not rs.bernoulli(cfg.p_fixed_fail_per_day):
                    continue
                fixed[i] = replace(ap, alive_until=day - 1)
                if cfg.replace_failed_aps:
                    base = ap.ap_id.split("_r")[0]
                    gen = replaced.get(base, 0) + 1
                    replaced[base] = gen
                    fixed.append(
                        replace(
                            ap,
                            slot=slot,
                            ap_id=f"{base}_r{gen}",
                            alive_from=day + cfg.replacement_delay,
                            alive_until=None,
                        )
                    )
                    slot += 1

        if cfg.hotspot_rate > 0:
            rs = hot_root.child(day)
            for _ in range(rs.poisson(cfg.hotspot_rate)):
                life = rs.geometric(cfg.hotspot_lifetime_mean)
                ephemeral = rs.bernoulli(cfg.p_ephemeral_mac)
                gamma = rs.uniform(lo, hi)
                hotspots.append(
                    HotspotEvent(
                        slot,
                        f"hs_{n_hot}",
                        day,
                        day + life - 1,
                        ephemeral,
                        cfg.tx_rssi0 + cfg.hotspot_power_offset,
                        gamma,
                    )
                )
                slot += 1
                n_hot += 1

    return replace(
        env,
        fixed_aps=tuple(fixed),
        hotspot_events=tuple(hotspots),
        maintenance=tuple(maintenance),
        _shadow_cache=env._shadow_cache,
    )


def _sampling_schedule(cfg, rps, day_start):
    """(rp index, device, timestamp) for every scan of one day."""
    scans = []
    n_rps = len(rps)
    visits = cfg.daily_visits_per_rp
    if visits and n_rps:
        window = 12 * 3600  # user walks happen 08:00-20:00
        per_visit = window // visits
        per_rp = max(per_visit // n_rps, 1)
        for v in range(visits):
            device = cfg.user_devices[v % len(cfg.user_devices)]
            for i in range(n_rps):
                sec = 8 * 3600 + v * per_visit + i * per_rp
                scans.append((i, device, day_start + timedelta(seconds=sec)))
    if cfg.anchor_samples_per_day:
        step = 24 * 3600 // cfg.anchor_samples_per_day
        index = {rp.rp_id: i for i, rp in enumerate(rps)}
        for rp_id in cfg.anchor_rp_ids:
            for h in range(cfg.anchor_samples_per_day):
                scans.append((index[rp_id], cfg.anchor_device, day_start + timedelta(seconds=h * step)))
    return scans


def day_mean_matrix(env, emitters, day):
    """Noise-free levels, shape (len(emitters), n_rps), for emitters alive on ``day``."""
    rp_pos = env.rp_positions()
    out = np.empty((len(emitters), len(env.rps)))
    drift = env.drift_term(day)
    for e, em in enumerate(emitters):
        ex, ey = env.emitter_position(em, day)
        dist = np.hypot(rp_pos[:, 0] - ex, rp_pos[:, 1] - ey)
        offset, _ = env.maintenance_state(em.slot, day)
        shadow = env.shadow_track(em.slot, day)[:, day - 1]
        out[e] = path_loss_rssi(em.rssi0, em.exponent, dist) + shadow + offset + drift
    return out


def simulate(env, cfg, n_days, seed):
    """Sample a dynamic database over days 1..n_days."""
    if n_days < 1:
        raise InvalidConfig("n_days", "must be >= 1")
    cfg.validate()
    if cfg != env.cfg:
        env = replace(env, cfg=cfg, _shadow_cache={})
    known = {rp.rp_id for rp in env.rps}
    for rp_id in cfg.anchor_rp_ids:
        if rp_id not in known:
            raise InvalidConfig("anchor_rp_ids", f"rp {rp_id} is not on the grid")
    env = realize_events(env, n_days, seed)
    noise_root = RngStream(seed, 2)
    epoch = cfg.epoch_date()

    rows = []
    for day in range(1, n_days + 1):
        day_start = datetime.combine(epoch + timedelta(days=day - 1), time(0), tzinfo=timezone.utc)
        emitters = [a for a in env.fixed_aps if a.alive_on(day)]
        emitters += [h for h in env.hotspot_events if h.alive_on(day)]
        emitters = [em for em in emitters if not env.maintenance_state(em.slot, day)[1]]
        ids = [em.ap_id if isinstance(em, FixedAp) else em.ap_id_on(day) for em in emitters]
        scans = _sampling_schedule(cfg, env.rps, day_start)
        if not scans:
            continue
        means = day_mean_matrix(env, emitters, day)
        rp_idx = np.array([s[0] for s in scans], dtype=np.int64)
        offsets = np.array([cfg.device_offset(s[1]) for s in scans])
        levels = means[:, rp_idx].T + offsets[:, None]
        if cfg.fast_sigma > 0 and emitters:
            noise = noise_root.child(day).normals(levels.size).reshape(levels.shape)
            levels = levels + cfg.fast_sigma * noise
        levels = np.minimum(np.floor(levels + 0.5), RSSI_MAX)
        detected = levels >= cfg.detection_threshold
        for s, (i, device, stamp) in enumerate(scans):
            readings = {ids[e]: int(levels[s, e]) for e in np.flatnonzero(detected[s])}
            rows.append((day, stamp, device, env.rps[i].rp_id, readings))

    rows.sort(key=lambda r: (r[0], r[1]))
    records = [
        FingerprintRecord(k, stamp, day, device, rp_id, readings)
        for k, (day, stamp, device, rp_id, readings) in enumerate(rows)
    ]
    return DynamicDatabase(records, env.rps, epoch=epoch)


def manifest(db, cfg, seed, n_days, env_seed=None):
    n_readings = sum(len(r.readings) for r in db.records)
    return {
        "seed": int(seed),
        "env_seed": int(seed if env_seed is None else env_seed),
        "n_days": int(n_days),
        "config": cfg.to_dict(),
        "counts": {
            "records": len(db.records),
            "readings": n_readings,
            "aps": len(db.ap_index),
            "rps": len(db.rps),
            "days": len(db.days()),
        },
    }
