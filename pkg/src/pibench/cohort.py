"""Cohort ingestion and stay-day enumeration.

Reads the three delimited event-stream files (patients, stays, events),
applies the eligibility filters (adults only, at least one Braden reading),
derives each stay's first stage-2-or-worse injury time, and enumerates the
admission-anchored 24h stay-days that feed feature extraction.

All timestamps are handled internally as UTC epoch seconds (float64) so that
window arithmetic stays cheap and exact for whole-second inputs.
"""
from __future__ import annotations

import csv
import logging
import math
from bisect import bisect_right
from dataclasses import dataclass
from datetime import date, datetime, timezone
from pathlib import Path

log = logging.getLogger(__name__)

DAY_SECONDS = 86400.0

INJURY_CHANNEL = "pressure_injury_stage"
BRADEN_CHANNEL = "braden_total"
INJURY_CATEGORIES = ("unstageable", "deep_tissue")
VALUE_KINDS = ("numeric", "category", "flag")

PATIENTS_FILE = "patients.csv"
STAYS_FILE = "stays.csv"
EVENTS_FILE = "events.csv"

_PATIENT_HEADER = ["patient_id", "birth_date", "sex"]
_STAY_HEADER = ["stay_id", "patient_id", "admit_time", "discharge_time"]
_EVENT_HEADER = ["stay_id", "timestamp", "channel", "value_kind", "value"]


class CohortError(Exception):
    """Base class for cohort ingestion/processing failures."""


class FormatError(CohortError):
    """A row failed to parse or violated the file schema."""

    def __init__(self, filename, line, column, problem):
        self.filename = str(filename)
        self.line = line
        self.column = column
        super().__init__(f"{self.filename}:{line}: column '{column}': {problem}")


class IntegrityError(CohortError):
    """Referential-integrity or duplicate-key violation."""


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    birth_date: date
    sex: str


@dataclass(frozen=True)
class StayRecord:
    stay_id: str
    patient_id: str
    admit_time: float
    discharge_time: float


@dataclass(frozen=True)
class ClinicalEvent:
    stay_id: str
    timestamp: float
    channel: str
    value_kind: str
    value: object  # float | str | bool, per value_kind


@dataclass(frozen=True)
class InjuryEvent:
    stay_id: str
    timestamp: float
    stage: object  # int 1..4 or "unstageable"/"deep_tissue"

    @property
    def qualifies(self) -> bool:
        """True for stage >= 2; unstageable/deep-tissue injuries count."""
        if isinstance(self.stage, int):
            return self.stage >= 2
        return True


@dataclass(frozen=True)
class BradenReading:
    stay_id: str
    timestamp: float
    total: int
    subscores: tuple | None = None  # six factor scores; must sum to total

    def __post_init__(self):
        if self.subscores is not None:
            if len(self.subscores) != 6 or sum(self.subscores) != self.total:
                raise ValueError("Braden subscores must be six integers summing "
                                 "to the total")


@dataclass(frozen=True)
class StayDay:
    stay_id: str
    day_index: int
    day_start: float
    day_end: float


class CohortStore:
    """Immutable bundle of ingested records plus derived per-stay indexes.

    Safe to share across threads: nothing mutates a store after construction;
    ``apply_filters`` returns a new instance.
    """

    def __init__(self, patients, stays, events, dropped_events=0, filtered=False,
                 first_stage2=None, removal_report=None):
        self.patients = {p.patient_id: p for p in patients}
        if len(self.patients) != len(patients):
            raise IntegrityError("duplicate patient_id in patient set")
        self.stays = {s.stay_id: s for s in stays}
        if len(self.stays) != len(stays):
            raise IntegrityError("duplicate stay_id in stay set")
        self.events = tuple(events)
        self.dropped_events = dropped_events
        self.filtered = filtered
        self.removal_report = dict(removal_report or {})

        self.events_by_stay: dict[str, list[ClinicalEvent]] = {s: [] for s in self.stays}
        for ev in self.events:
            self.events_by_stay[ev.stay_id].append(ev)
        for evs in self.events_by_stay.values():
            evs.sort(key=lambda e: (e.timestamp, e.channel, str(e.value)))

        # derive from the time-sorted per-stay lists: latest_braden bisects
        # on timestamps, so file order must not matter
        self.injuries_by_stay: dict[str, list[InjuryEvent]] = {s: [] for s in self.stays}
        self.braden_by_stay: dict[str, list[BradenReading]] = {s: [] for s in self.stays}
        for stay_id, evs in self.events_by_stay.items():
            for ev in evs:
                if ev.channel == INJURY_CHANNEL:
                    stage = int(ev.value) if ev.value_kind == "numeric" else ev.value
                    self.injuries_by_stay[stay_id].append(
                        InjuryEvent(stay_id, ev.timestamp, stage))
                elif ev.channel == BRADEN_CHANNEL:
                    self.braden_by_stay[stay_id].append(
                        BradenReading(stay_id, ev.timestamp, int(ev.value)))

        if first_stage2 is None:
            first_stage2 = {}
            for stay_id, injuries in self.injuries_by_stay.items():
                qualifying = [i.timestamp for i in injuries if i.qualifies]
                if qualifying:
                    first_stage2[stay_id] = min(qualifying)
        self.first_stage2 = first_stage2

        # sorted timestamp list per stay for latest-Braden lookups
        self._braden_times = {
            s: [r.timestamp for r in readings]
            for s, readings in self.braden_by_stay.items()
        }

    def counts(self) -> dict:
        return {
            "patients": len(self.patients),
            "stays": len(self.stays),
            "events": len(self.events),
            "dropped_events": self.dropped_events,
        }

    def latest_braden(self, stay_id: str, at: float):
        """Most recent Braden total with timestamp <= `at`, or None."""
        times = self._braden_times[stay_id]
        i = bisect_right(times, at)
        if i == 0:
            return None
        return self.braden_by_stay[stay_id][i - 1].total


def parse_timestamp(text: str) -> float:
    """ISO-8601 UTC timestamp -> epoch seconds. Naive values are taken as UTC."""
    raw = text.strip()
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    dt = datetime.fromisoformat(raw)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_timestamp(ts: float) -> str:
    dt = datetime.fromtimestamp(ts, tz=timezone.utc)
    if ts == int(ts):
        return dt.strftime("%Y-%m-%dT%H:%M:%SZ")
    return dt.strftime("%Y-%m-%dT%H:%M:%S.%f").rstrip("0") + "Z"


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true"
    if isinstance(value, str):
        return value
    v = float(value)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _read_rows(path: Path, header: list[str]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            actual = next(reader)
        except StopIteration:
            raise FormatError(path, 1, header[0], "missing header row") from None
        if actual != header:
            raise FormatError(path, 1, ",".join(header),
                              f"expected header {header}, found {actual}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(path, lineno, ",".join(header),
                                  f"expected {len(header)} fields, found {len(row)}")
            yield lineno, dict(zip(header, row))


def _parse_event_value(path, lineno, kind, raw):
    if kind == "numeric":
        try:
            return float(raw)
        except ValueError:
            raise FormatError(path, lineno, "value",
                              f"not a number: {raw!r}") from None
    if kind == "category":
        if not raw:
            raise FormatError(path, lineno, "value", "empty category value")
        return raw
    if kind == "flag":
        if raw.lower() in ("true", "1"):
            return True
        raise FormatError(path, lineno, "value",
                          f"flag events must carry 'true', found {raw!r}")
    raise FormatError(path, lineno, "value_kind",
                      f"unknown value_kind {kind!r} (expected one of {VALUE_KINDS})")


def ingest(directory) -> CohortStore:
    """Load a cohort file set from `directory` and verify integrity.

    Malformed rows, dangling stay references and duplicate primary keys raise;
    events timestamped outside their stay's [admit, discharge] interval are
    dropped with a warning count instead (real extracts contain them).
    """
    directory = Path(directory)
    ppath = directory / PATIENTS_FILE
    spath = directory / STAYS_FILE
    epath = directory / EVENTS_FILE
    for path in (ppath, spath, epath):
        if not path.is_file():
            raise CohortError(f"missing cohort file: {path}")

    patients: list[PatientRecord] = []
    seen_patients = set()
    for lineno, row in _read_rows(ppath, _PATIENT_HEADER):
        pid = row["patient_id"]
        if not pid:
            raise FormatError(ppath, lineno, "patient_id", "empty id")
        if pid in seen_patients:
            raise IntegrityError(f"{ppath}:{lineno}: duplicate patient_id {pid!r}")
        seen_patients.add(pid)
        try:
            birth = date.fromisoformat(row["birth_date"])
        except ValueError:
            raise FormatError(ppath, lineno, "birth_date",
                              f"not an ISO date: {row['birth_date']!r}") from None
        patients.append(PatientRecord(pid, birth, row["sex"]))

    stays: list[StayRecord] = []
    seen_stays = set()
    for lineno, row in _read_rows(spath, _STAY_HEADER):
        sid = row["stay_id"]
        if not sid:
            raise FormatError(spath, lineno, "stay_id", "empty id")
        if sid in seen_stays:
            raise IntegrityError(f"{spath}:{lineno}: duplicate stay_id {sid!r}")
        seen_stays.add(sid)
        if row["patient_id"] not in seen_patients:
            raise IntegrityError(
                f"{spath}:{lineno}: stay {sid!r} references unknown patient "
                f"{row['patient_id']!r}")
        try:
            admit = parse_timestamp(row["admit_time"])
        except ValueError:
            raise FormatError(spath, lineno, "admit_time",
                              f"bad timestamp {row['admit_time']!r}") from None
        try:
            discharge = parse_timestamp(row["discharge_time"])
        except ValueError:
            raise FormatError(spath, lineno, "discharge_time",
                              f"bad timestamp {row['discharge_time']!r}") from None
        if not admit < discharge:
            raise FormatError(spath, lineno, "discharge_time",
                              "admit_time must precede discharge_time")
        stays.append(StayRecord(sid, row["patient_id"], admit, discharge))

    stay_windows = {s.stay_id: (s.admit_time, s.discharge_time) for s in stays}
    events: list[ClinicalEvent] = []
    dropped = 0
    for lineno, row in _read_rows(epath, _EVENT_HEADER):
        sid = row["stay_id"]
        if sid not in stay_windows:
            raise IntegrityError(
                f"{epath}:{lineno}: event references unknown stay {sid!r}")
        if not row["channel"]:
            raise FormatError(epath, lineno, "channel", "empty channel name")
        try:
            ts = parse_timestamp(row["timestamp"])
        except ValueError:
            raise FormatError(epath, lineno, "timestamp",
                              f"bad timestamp {row['timestamp']!r}") from None
        value = _parse_event_value(epath, lineno, row["value_kind"], row["value"])
        if row["channel"] == INJURY_CHANNEL:
            _validate_injury(epath, lineno, row["value_kind"], value)
        elif row["channel"] == BRADEN_CHANNEL:
            _validate_braden(epath, lineno, row["value_kind"], value)
        admit, discharge = stay_windows[sid]
        if ts < admit or ts > discharge:
            dropped += 1
            continue
        events.append(ClinicalEvent(sid, ts, row["channel"], row["value_kind"], value))

    if dropped:
        log.warning("dropped %d events outside their stay window", dropped)
    store = CohortStore(patients, stays, events, dropped_events=dropped)
    log.info("ingested cohort: %s", store.counts())
    return store


def _validate_injury(path, lineno, kind, value):
    if kind == "numeric":
        if float(value) != int(value) or not 1 <= int(value) <= 4:
            raise FormatError(path, lineno, "value",
                              f"injury stage must be an integer 1..4, found {value!r}")
    elif kind == "category":
        if value not in INJURY_CATEGORIES:
            raise FormatError(path, lineno, "value",
                              f"injury category must be one of {INJURY_CATEGORIES}, "
                              f"found {value!r}")
    else:
        raise FormatError(path, lineno, "value_kind",
                          "injury events must be numeric or category")


def _validate_braden(path, lineno, kind, value):
    if kind != "numeric":
        raise FormatError(path, lineno, "value_kind", "Braden totals must be numeric")
    if float(value) != int(value) or not 6 <= int(value) <= 23:
        raise FormatError(path, lineno, "value",
                          f"Braden total must be an integer 6..23, found {value!r}")


def age_at(birth: date, when: float) -> int:
    """Whole years elapsed between `birth` and the UTC date of `when`."""
    d = datetime.fromtimestamp(when, tz=timezone.utc).date()
    return d.year - birth.year - ((d.month, d.day) < (birth.month, birth.day))


def apply_filters(store: CohortStore) -> CohortStore:
    """Apply the eligibility filters; never fails, reports removal counts.

    Removes stays of patients younger than 18 at admission and stays without
    any Braden reading, then prunes patients left with no stays. Idempotent.
    """
    underage = set()
    no_braden = set()
    for stay in store.stays.values():
        patient = store.patients[stay.patient_id]
        if age_at(patient.birth_date, stay.admit_time) < 18:
            underage.add(stay.stay_id)
        elif not store.braden_by_stay[stay.stay_id]:
            no_braden.add(stay.stay_id)

    removed = underage | no_braden
    kept_stays = [s for sid, s in sorted(store.stays.items()) if sid not in removed]
    kept_ids = {s.stay_id for s in kept_stays}
    kept_pids = {s.patient_id for s in kept_stays}
    kept_patients = [p for pid, p in sorted(store.patients.items()) if pid in kept_pids]
    kept_events = [e for e in store.events if e.stay_id in kept_ids]

    report = {"underage_stays": len(underage), "no_braden_stays": len(no_braden)}
    if removed:
        log.info("filter removals: %s", report)
    return CohortStore(kept_patients, kept_stays, kept_events,
                       dropped_events=store.dropped_events, filtered=True,
                       removal_report=report)


def enumerate_stay_days(store: CohortStore) -> list[StayDay]:
    """Enumerate admission-anchored 24h days for every stay, in
    (stay_id, day_index) order, excluding any day starting at or after the
    stay's first qualifying injury."""
    if not store.filtered:
        raise CohortError("enumerate_stay_days requires a filtered store")
    days: list[StayDay] = []
    for stay_id in sorted(store.stays):
        stay = store.stays[stay_id]
        injury = store.first_stage2.get(stay_id)
        n_days = math.ceil((stay.discharge_time - stay.admit_time) / DAY_SECONDS)
        for i in range(n_days):
            start = stay.admit_time + i * DAY_SECONDS
            if injury is not None and start >= injury:
                break
            end = min(start + DAY_SECONDS, stay.discharge_time)
            days.append(StayDay(stay_id, i, start, end))
    return days


def write_patients(path, patients):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_PATIENT_HEADER)
        for p in sorted(patients, key=lambda p: p.patient_id):
            w.writerow([p.patient_id, p.birth_date.isoformat(), p.sex])


def write_stays(path, stays):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_STAY_HEADER)
        for s in sorted(stays, key=lambda s: s.stay_id):
            w.writerow([s.stay_id, s.patient_id,
                        format_timestamp(s.admit_time),
                        format_timestamp(s.discharge_time)])


def write_events(path, events):
    def key(e):
        return (e.stay_id, e.timestamp, e.channel, format_value(e.value))

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_EVENT_HEADER)
        for e in sorted(events, key=key):
            w.writerow([e.stay_id, format_timestamp(e.timestamp), e.channel,
                        e.value_kind, format_value(e.value)])


def write_cohort(store: CohortStore, directory):
    """Serialize a store back to the three-file canonical form."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_patients(directory / PATIENTS_FILE, store.patients.values())
    write_stays(directory / STAYS_FILE, store.stays.values())
    write_events(directory / EVENTS_FILE, store.events)
