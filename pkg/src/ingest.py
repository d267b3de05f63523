"""Raw lifelog ingestion: log lines → LifelogEvent records → per-user day buckets.

Each raw line is one structured record whose single top-level key names the
sensor, e.g. ``{"Call": {"Number": "+98...", "Time": "11-5-2013 9:12:00"}}``.
"""

import json
import logging
import os
import re
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path

from src.errors import EmptyDataset, UsageError
from src.models import DayBucket, LifelogEvent, ParseReject, SensorKind, UserMeta
from src.utils import clean_field

logger = logging.getLogger(__name__)

SENSOR_ALIASES: dict[str, SensorKind] = {
    "wifi": SensorKind.WIFI,
    "location": SensorKind.LOCATION,
    "sms": SensorKind.SMS,
    "call": SensorKind.CALL,
    "application": SensorKind.APPLICATION_USAGE,
    "applicationusage": SensorKind.APPLICATION_USAGE,
    "app": SensorKind.APPLICATION_USAGE,
    "bluetooth": SensorKind.BLUETOOTH_PROXIMITY,
    "bluetoothproximity": SensorKind.BLUETOOTH_PROXIMITY,
    "activity": SensorKind.ACTIVITY_STATE,
    "activitystate": SensorKind.ACTIVITY_STATE,
}

# Candidate entity fields per sensor, tried in order (normalized names).
ENTITY_FIELDS: dict[SensorKind, tuple[str, ...]] = {
    SensorKind.CALL: ("number", "address"),
    SensorKind.SMS: ("address", "number"),
    SensorKind.APPLICATION_USAGE: ("processname", "name", "app", "package"),
    SensorKind.WIFI: ("ssid", "bssid"),
    SensorKind.BLUETOOTH_PROXIMITY: ("address", "mac"),
    SensorKind.ACTIVITY_STATE: ("type", "activity", "label", "state"),
    SensorKind.LOCATION: ("place", "name"),
}

START_FIELDS = ("time", "start", "timestamp", "date")
END_FIELDS = ("end",)
LATITUDE_FIELDS = ("latitude", "lat")
LONGITUDE_FIELDS = ("longitude", "longtitude", "lon", "lng")

DEFAULT_TIMESTAMP_FORMATS = ("%m-%d-%Y %H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S")


def _norm(key: str) -> str:
    return re.sub(r"[^a-z0-9]", "", key.lower())


def _to_text(value) -> str:
    if isinstance(value, (dict, list)):
        return json.dumps(value, ensure_ascii=False, sort_keys=True)
    return str(value)


def parse_timestamp(value, formats: str | Sequence[str]) -> datetime | None:
    """Parse a raw time value as naive device wall-clock time, truncated to seconds."""
    if isinstance(formats, str):
        formats = (formats,)
    if isinstance(value, bool) or value is None:
        return None
    if isinstance(value, (int, float)) or (isinstance(value, str) and re.fullmatch(r"\d{9,13}", value.strip())):
        seconds = float(value)
        if seconds > 1e11:  # milliseconds
            seconds /= 1000.0
        try:
            return datetime.fromtimestamp(int(seconds), tz=timezone.utc).replace(tzinfo=None)
        except (OverflowError, OSError, ValueError):
            return None
    if not isinstance(value, str):
        return None
    text = value.strip()
    for fmt in formats:
        try:
            return datetime.strptime(text, fmt).replace(microsecond=0, tzinfo=None)
        except ValueError:
            continue
    return None


def _location_key(fields: Mapping[str, tuple[str, object]]) -> tuple[str | None, set[str]]:
    lat_key = next((k for k in LATITUDE_FIELDS if k in fields), None)
    lon_key = next((k for k in LONGITUDE_FIELDS if k in fields), None)
    if lat_key and lon_key:
        try:
            lat = float(fields[lat_key][1])  # type: ignore[arg-type]
            lon = float(fields[lon_key][1])  # type: ignore[arg-type]
            return f"{lat:.3f},{lon:.3f}", {lat_key, lon_key}
        except (TypeError, ValueError):
            pass
    return None, set()


def parse_log_line(
    line: str | bytes,
    timestamp_format: str | Sequence[str] = DEFAULT_TIMESTAMP_FORMATS,
    user_id: str = "",
) -> LifelogEvent | ParseReject:
    """Parse one raw log line. Total: every input yields an event or a reject."""
    if isinstance(line, bytes):
        line = line.decode("utf-8", errors="replace")
    try:
        return _parse(line, timestamp_format, user_id)
    except Exception as e:  # totality over arbitrary input
        return ParseReject(line=line, reason=f"malformed structure: {type(e).__name__}")


def _parse(line: str, formats: str | Sequence[str], user_id: str) -> LifelogEvent | ParseReject:
    stripped = line.strip()
    if not stripped:
        return ParseReject(line=line, reason="malformed structure: empty line")
    try:
        record = json.loads(stripped)
    except (json.JSONDecodeError, RecursionError):
        return ParseReject(line=line, reason="malformed structure: not a structured record")
    if not isinstance(record, dict) or len(record) != 1:
        return ParseReject(line=line, reason="malformed structure: expected one top-level sensor key")

    top_key, body = next(iter(record.items()))
    sensor = SENSOR_ALIASES.get(_norm(str(top_key)))
    if sensor is None:
        return ParseReject(line=line, reason=f"unknown sensor: {top_key}")
    if not isinstance(body, dict):
        return ParseReject(line=line, reason="malformed structure: sensor body is not a record")

    fields = {_norm(str(k)): (str(k), v) for k, v in body.items()}
    used: set[str] = set()

    start_key = next((k for k in START_FIELDS if k in fields), None)
    start = parse_timestamp(fields[start_key][1], formats) if start_key else None
    if start is None:
        return ParseReject(line=line, reason="unparseable timestamp")
    used.add(start_key)  # type: ignore[arg-type]

    end = None
    end_key = next((k for k in END_FIELDS if k in fields), None)
    if end_key:
        end = parse_timestamp(fields[end_key][1], formats)
        if end is None:
            return ParseReject(line=line, reason="unparseable timestamp (end)")
        used.add(end_key)

    entity = None
    if sensor is SensorKind.LOCATION:
        entity, loc_used = _location_key(fields)
        used |= loc_used
    if entity is None:
        for candidate in ENTITY_FIELDS[sensor]:
            value = fields.get(candidate, (None, None))[1]
            if value is not None and str(value).strip():
                entity = str(value).strip()
                used.add(candidate)
                break
    if not entity:
        return ParseReject(line=line, reason="missing entity")

    if sensor is SensorKind.CALL and end is None and "duration" in fields:
        try:
            duration = int(float(fields["duration"][1]))  # type: ignore[arg-type]
        except (TypeError, ValueError):
            duration = 0
        if duration > 0:
            end = start + timedelta(seconds=duration)
            used.add("duration")

    if end is not None and end < start:
        return ParseReject(line=line, reason="end before start")

    attrs = {orig: _to_text(value) for norm, (orig, value) in fields.items() if norm not in used}
    return LifelogEvent(user_id=user_id, sensor=sensor, entity_key=entity, start=start, end=end, attrs=attrs)


@dataclass
class ScanResult:
    users: list[UserMeta]
    events: list[LifelogEvent]
    rejects: list[ParseReject] = field(default_factory=list)

    @property
    def reject_count(self) -> int:
        return len(self.rejects)


def load_gender_table(path: str) -> dict[str, str]:
    """Sidecar table: one `user_id<TAB or comma>gender` row per user."""
    table: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for raw in f:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = re.split(r"[\t,]", line)
            if len(parts) >= 2:
                table[parts[0].strip()] = parts[1].strip().upper()
    return table


def _parse_file(path: Path, user_id: str, formats: Sequence[str]) -> tuple[list[LifelogEvent], list[ParseReject]] | None:
    events: list[LifelogEvent] = []
    rejects: list[ParseReject] = []
    try:
        with open(path, encoding="utf-8", errors="replace") as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                result = parse_log_line(line.rstrip("\n"), formats, user_id=user_id)
                if isinstance(result, ParseReject):
                    rejects.append(replace(result, source=str(path), line_no=line_no))
                else:
                    events.append(result)
    except OSError as e:
        logger.warning(f"Skipping unreadable file {path}: {e}")
        return None
    return events, rejects


def _match_user_dir(pattern: re.Pattern, name: str) -> tuple[str, str | None] | None:
    m = pattern.match(name)
    if not m:
        return None
    groups = m.groupdict()
    if "user" in groups:
        return groups["user"], groups.get("gender")
    if m.lastindex:
        gender = m.group(2) if m.lastindex >= 2 else None
        return m.group(1), gender
    return name, None


def scan_dataset(
    root: str,
    user_dir_pattern: str,
    timestamp_formats: str | Sequence[str] = DEFAULT_TIMESTAMP_FORMATS,
    gender_table: Mapping[str, str] | None = None,
    min_days: int = 1,
    workers: int = 4,
) -> ScanResult:
    """Scan per-user folders under root and parse every log file they hold."""
    if not os.path.isdir(root):
        raise UsageError(f"dataset root is not a directory: {root}")
    try:
        pattern = re.compile(user_dir_pattern)
    except re.error as e:
        raise UsageError(f"bad user_dir_pattern: {e}") from e
    formats = (timestamp_formats,) if isinstance(timestamp_formats, str) else tuple(timestamp_formats)

    user_dirs: list[tuple[str, str, Path]] = []
    for entry in sorted(Path(root).iterdir()):
        if not entry.is_dir():
            continue
        matched = _match_user_dir(pattern, entry.name)
        if matched is None:
            continue
        user_id, gender = matched
        gender = (gender or (gender_table or {}).get(user_id, "")).upper()
        if gender not in ("M", "F"):
            logger.warning(f"Skipping user {user_id}: no gender in directory name or gender table")
            continue
        user_dirs.append((user_id, gender, entry))

    if not user_dirs:
        raise EmptyDataset(f"no user directories matching {user_dir_pattern!r} under {root}")

    jobs = [(user_id, path) for user_id, _, d in user_dirs for path in sorted(p for p in d.rglob("*") if p.is_file())]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda job: _parse_file(job[1], job[0], formats), jobs))

    events: list[LifelogEvent] = []
    rejects: list[ParseReject] = []
    for result in results:
        if result is None:
            continue
        events.extend(result[0])
        rejects.extend(result[1])
    # stable: ties keep file order, then line order
    events.sort(key=lambda e: (e.user_id, e.start))

    days: dict[str, set[date]] = defaultdict(set)
    for e in events:
        days[e.user_id].add(e.start.date())

    users = []
    for user_id, gender, _ in user_dirs:
        count = len(days.get(user_id, ()))
        if count < min_days:
            logger.info(f"Dropping user {user_id}: {count} day(s) < min_days_per_user={min_days}")
            continue
        users.append(UserMeta(user_id=user_id, gender=gender, day_count=count))
    kept = {u.user_id for u in users}
    events = [e for e in events if e.user_id in kept]

    logger.info(f"Scanned {len(users)} users, {len(events)} events, {len(rejects)} rejects")
    return ScanResult(users=users, events=events, rejects=rejects)


def _split_at_midnight(event: LifelogEvent) -> list[LifelogEvent]:
    pieces = []
    current = event
    while current.end is not None:
        boundary = datetime.combine(current.start.date() + timedelta(days=1), time.min)
        if current.end <= boundary:
            break
        pieces.append(replace(current, end=boundary))
        current = replace(current, start=boundary)
    pieces.append(current)
    return pieces


def partition_by_day(events: Iterable[LifelogEvent]) -> list[DayBucket]:
    """Group events into (user, calendar day) buckets, clipping at midnight."""
    grouped: dict[tuple[str, date], list[LifelogEvent]] = defaultdict(list)
    for event in events:
        for piece in _split_at_midnight(event):
            grouped[(piece.user_id, piece.start.date())].append(piece)
    buckets = []
    for (user_id, day), day_events in sorted(grouped.items(), key=lambda item: item[0]):
        day_events.sort(key=lambda e: e.start)
        buckets.append(DayBucket(user_id=user_id, date=day, events=day_events))
    return buckets


EVENT_COLUMNS = ("user_id", "sensor", "entity_key", "start", "end")
USER_COLUMNS = ("user_id", "gender", "day_count", "archetype")


def write_events(path: str, events: Iterable[LifelogEvent], header: str) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(header + "\n")
        f.write("\t".join(EVENT_COLUMNS) + "\n")
        for e in events:
            row = (
                clean_field(e.user_id),
                e.sensor.value,
                clean_field(e.entity_key),
                e.start.isoformat(),
                e.end.isoformat() if e.end else "",
            )
            f.write("\t".join(row) + "\n")
            count += 1
    return count


def read_events(path: str) -> list[LifelogEvent]:
    events = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line or line.startswith("#") or line.startswith("user_id\t"):
                continue
            user_id, sensor, entity, start, end = line.split("\t")
            events.append(
                LifelogEvent(
                    user_id=user_id,
                    sensor=SensorKind(sensor),
                    entity_key=entity,
                    start=datetime.fromisoformat(start),
                    end=datetime.fromisoformat(end) if end else None,
                )
            )
    return events


def write_users(path: str, users: Iterable[UserMeta], header: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(header + "\n")
        f.write("\t".join(USER_COLUMNS) + "\n")
        for u in users:
            f.write(f"{clean_field(u.user_id)}\t{u.gender}\t{u.day_count}\t{clean_field(u.archetype)}\n")


def read_users(path: str) -> list[UserMeta]:
    users = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line or line.startswith("#") or line.startswith("user_id\t"):
                continue
            user_id, gender, day_count, archetype = line.split("\t")
            users.append(UserMeta(user_id=user_id, gender=gender, day_count=int(day_count), archetype=archetype))
    return users


def write_rejects(path: str, rejects: Iterable[ParseReject], header: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(header + "\n")
        for r in rejects:
            f.write(f"{r.source}:{r.line_no}\t{r.reason}\t{clean_field(r.line)}\n")
