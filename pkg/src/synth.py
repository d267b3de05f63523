"""Deterministic synthetic lifelogs built from labeled behavioral archetypes."""

import logging
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta

import numpy as np

from src.errors import UsageError
from src.models import SENSOR_ORDER, LifelogEvent, SensorKind, UserMeta

logger = logging.getLogger(__name__)

ACTIVITY_LABELS = ("still", "walking", "in_vehicle", "on_bicycle", "running", "tilting")

# Sensors whose events carry an end time, with the duration range in seconds.
DURATIONS: dict[SensorKind, tuple[int, int]] = {
    SensorKind.CALL: (30, 600),
    SensorKind.APPLICATION_USAGE: (60, 1800),
    SensorKind.ACTIVITY_STATE: (300, 3600),
}


@dataclass
class ArchetypeSpec:
    name: str
    sensor_mix: dict[SensorKind, float]
    active_slots: dict[int, float]  # slot → intensity
    entity_pool_size: int = 6
    events_per_day: tuple[float, float] = (25.0, 5.0)  # mean, spread
    gender: str = "M"

    def __post_init__(self):
        total = sum(self.sensor_mix.values())
        if abs(total - 1.0) > 1e-9:
            raise UsageError(f"archetype {self.name}: sensor weights sum to {total}, not 1")
        if any(w < 0 for w in self.sensor_mix.values()):
            raise UsageError(f"archetype {self.name}: negative sensor weight")
        if not self.active_slots or any(v < 0 for v in self.active_slots.values()):
            raise UsageError(f"archetype {self.name}: active slot intensities must be ≥ 0 and non-empty")
        if any(not 0 <= s < 96 for s in self.active_slots):
            raise UsageError(f"archetype {self.name}: slots must lie in 0..95")
        if self.gender not in ("M", "F"):
            raise UsageError(f"archetype {self.name}: gender must be M or F")
        if self.entity_pool_size < 1:
            raise UsageError(f"archetype {self.name}: entity_pool_size must be ≥ 1")


def _slots(ranges: list[tuple[int, int, float]]) -> dict[int, float]:
    out: dict[int, float] = {}
    for lo, hi, intensity in ranges:
        for s in range(lo, hi + 1):
            out[s] = out.get(s, 0.0) + intensity
    return out


def default_archetypes() -> list[ArchetypeSpec]:
    return [
        ArchetypeSpec(
            name="morning caller",
            sensor_mix={
                SensorKind.CALL: 0.45,
                SensorKind.SMS: 0.2,
                SensorKind.WIFI: 0.1,
                SensorKind.LOCATION: 0.1,
                SensorKind.APPLICATION_USAGE: 0.1,
                SensorKind.BLUETOOTH_PROXIMITY: 0.025,
                SensorKind.ACTIVITY_STATE: 0.025,
            },
            active_slots=_slots([(24, 47, 1.0), (28, 36, 1.0)]),
            events_per_day=(25.0, 5.0),
            gender="M",
        ),
        ArchetypeSpec(
            name="night app user",
            sensor_mix={
                SensorKind.APPLICATION_USAGE: 0.55,
                SensorKind.WIFI: 0.2,
                SensorKind.SMS: 0.1,
                SensorKind.CALL: 0.05,
                SensorKind.LOCATION: 0.05,
                SensorKind.BLUETOOTH_PROXIMITY: 0.025,
                SensorKind.ACTIVITY_STATE: 0.025,
            },
            active_slots=_slots([(76, 95, 1.0), (0, 7, 0.5)]),
            events_per_day=(30.0, 6.0),
            gender="F",
        ),
        ArchetypeSpec(
            name="commuter",
            sensor_mix={
                SensorKind.LOCATION: 0.35,
                SensorKind.ACTIVITY_STATE: 0.25,
                SensorKind.BLUETOOTH_PROXIMITY: 0.15,
                SensorKind.WIFI: 0.1,
                SensorKind.CALL: 0.05,
                SensorKind.SMS: 0.05,
                SensorKind.APPLICATION_USAGE: 0.05,
            },
            active_slots=_slots([(28, 37, 1.0), (68, 77, 1.0)]),
            events_per_day=(25.0, 5.0),
            gender="M",
        ),
    ]


def _entity_pool(user_id: str, user_index: int, size: int, rng: np.random.Generator) -> dict[SensorKind, list[str]]:
    lat0, lon0 = 35.7 + rng.uniform(-0.2, 0.2), 51.4 + rng.uniform(-0.2, 0.2)
    pool: dict[SensorKind, list[str]] = {
        SensorKind.CALL: [f"+98912{user_index:03d}{j:04d}" for j in range(size)],
        SensorKind.SMS: [f"+98935{user_index:03d}{j:04d}" for j in range(size)],
        SensorKind.APPLICATION_USAGE: [f"com.{user_id}.app{j}" for j in range(size)],
        SensorKind.WIFI: [f"wifi-{user_id}-{j}" for j in range(size)],
        SensorKind.BLUETOOTH_PROXIMITY: [
            ":".join(f"{b:02X}" for b in rng.integers(0, 256, size=6)) for _ in range(size)
        ],
        SensorKind.LOCATION: [
            f"{lat0 + rng.uniform(-0.05, 0.05):.3f},{lon0 + rng.uniform(-0.05, 0.05):.3f}" for _ in range(size)
        ],
        SensorKind.ACTIVITY_STATE: list(ACTIVITY_LABELS[: min(size, len(ACTIVITY_LABELS))]),
    }
    return pool


@dataclass
class _UserPlan:
    meta: UserMeta
    archetype: ArchetypeSpec
    mix: np.ndarray
    pool: dict[SensorKind, list[str]]
    preference: dict[SensorKind, np.ndarray] = field(default_factory=dict)


def generate_synthetic(
    archetypes: list[ArchetypeSpec],
    users_per_archetype: int,
    days: int,
    seed: int,
    start_date: date = date(2013, 11, 1),
) -> tuple[list[UserMeta], list[LifelogEvent]]:
    """Generate labeled users and their events, fully determined by seed."""
    if not archetypes:
        raise UsageError("at least one archetype is required")
    if days < 1 or users_per_archetype < 1:
        raise UsageError("days and users_per_archetype must be ≥ 1")

    users: list[UserMeta] = []
    events: list[LifelogEvent] = []
    user_index = 0
    for a_index, archetype in enumerate(archetypes):
        for _ in range(users_per_archetype):
            rng = np.random.default_rng([seed, a_index, user_index])
            user_id = f"u{user_index:03d}"
            base = np.array([archetype.sensor_mix.get(s, 0.0) for s in SENSOR_ORDER])
            mix = base * rng.uniform(0.8, 1.2, size=len(SENSOR_ORDER))
            mix /= mix.sum()
            pool = _entity_pool(user_id, user_index, archetype.entity_pool_size, rng)
            # skewed per-user preference over the pool makes identity learnable
            preference = {s: rng.dirichlet(np.full(len(p), 0.7)) for s, p in pool.items()}
            plan = _UserPlan(
                meta=UserMeta(user_id=user_id, gender=archetype.gender, day_count=days, archetype=archetype.name),
                archetype=archetype,
                mix=mix,
                pool=pool,
                preference=preference,
            )
            users.append(plan.meta)
            events.extend(_user_events(plan, days, start_date, rng))
            user_index += 1

    events.sort(key=lambda e: (e.user_id, e.start))
    logger.info(f"Generated {len(users)} synthetic users, {len(events)} events over {days} days")
    return users, events


def _user_events(plan: _UserPlan, days: int, start_date: date, rng: np.random.Generator) -> list[LifelogEvent]:
    slots = np.array(sorted(plan.archetype.active_slots))
    weights = np.array([plan.archetype.active_slots[s] for s in slots], dtype=float)
    if weights.sum() <= 0:
        weights = np.ones_like(weights)
    weights /= weights.sum()
    mean, spread = plan.archetype.events_per_day

    out = []
    for day_offset in range(days):
        day = start_date + timedelta(days=day_offset)
        midnight = datetime(day.year, day.month, day.day)
        last_second = midnight + timedelta(seconds=86399)
        count = max(1, int(round(rng.normal(mean, spread))))
        for _ in range(count):
            sensor = SENSOR_ORDER[int(rng.choice(len(SENSOR_ORDER), p=plan.mix))]
            slot = int(rng.choice(slots, p=weights))
            start = midnight + timedelta(seconds=slot * 900 + int(rng.integers(0, 900)))
            entities = plan.pool[sensor]
            entity = entities[int(rng.choice(len(entities), p=plan.preference[sensor]))]
            end = None
            if sensor in DURATIONS:
                lo, hi = DURATIONS[sensor]
                end = min(start + timedelta(seconds=int(rng.integers(lo, hi + 1))), last_second)
            out.append(LifelogEvent(user_id=plan.meta.user_id, sensor=sensor, entity_key=entity, start=start, end=end))
    return out
