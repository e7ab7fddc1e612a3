"""Windowed feature extraction and day labeling.

Each enumerated stay-day becomes one labeled example. Features are aggregates
of channel events over one of two windows (the day itself, or everything since
admission), always clipped at the first qualifying injury so nothing recorded
after the outcome can leak in. A day is labeled positive when the injury falls
within the seven days following it.

Two virtual channels, "age" and "sex", resolve from the patient record rather
than the event stream.
"""
from __future__ import annotations

import csv
import hashlib
import logging
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import cohort
from .cohort import CohortStore, StayDay, age_at

log = logging.getLogger(__name__)

WINDOWS = ("last_24h", "since_admission")
AGGREGATIONS = ("last", "min", "max", "mean", "count", "exists")
OUTPUT_KINDS = ("numeric", "boolean", "category")
HORIZON_DAYS = 7

VIRTUAL_CHANNELS = ("age", "sex")

# risk-oracle output of the generator; must never be read as model input
ORACLE_BASENAME = "oracle.csv"

MISSING = None


class SchemaError(Exception):
    pass


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    channel: str
    window: str
    aggregation: str
    output_kind: str

    def __post_init__(self):
        if self.window not in WINDOWS:
            raise SchemaError(f"{self.name}: unknown window {self.window!r}")
        if self.aggregation not in AGGREGATIONS:
            raise SchemaError(f"{self.name}: unknown aggregation {self.aggregation!r}")
        if self.output_kind not in OUTPUT_KINDS:
            raise SchemaError(f"{self.name}: unknown output_kind {self.output_kind!r}")
        if self.aggregation == "exists" and self.output_kind != "boolean":
            raise SchemaError(f"{self.name}: exists must produce a boolean")
        if self.aggregation == "count" and self.output_kind != "numeric":
            raise SchemaError(f"{self.name}: count must produce a numeric")
        if self.output_kind == "category" and self.aggregation != "last":
            raise SchemaError(f"{self.name}: category outputs only support 'last'")
        if self.aggregation in ("min", "max", "mean") and self.output_kind != "numeric":
            raise SchemaError(f"{self.name}: {self.aggregation} must produce a numeric")


@dataclass(frozen=True)
class DayExample:
    stay_id: str
    day_index: int
    features: dict
    label: bool
    latest_braden: object  # int 6..23 or None


VITAL_CHANNELS = ("heart_rate", "resp_rate", "spo2", "temperature", "sbp", "dbp",
                  "mean_bp", "cvp", "gcs_total", "fio2", "pain_score",
                  "urine_output")
LAB_CHANNELS = ("hemoglobin", "wbc", "creatinine", "albumin", "lactate", "sodium")
FLAG_CHANNELS = ("vasopressor", "ventilation", "surgery", "transfer")


def default_specs() -> tuple:
    """The shipped 40-spec roster: 12 vitals x {mean, min} over the day,
    6 labs (most recent), 4 intervention flags, demographics, and two Braden
    aggregates. Expands to 80 encoded columns on the default vocabularies."""
    specs = []
    for ch in VITAL_CHANNELS:
        specs.append(FeatureSpec(f"{ch}_mean_24h", ch, "last_24h", "mean", "numeric"))
        specs.append(FeatureSpec(f"{ch}_min_24h", ch, "last_24h", "min", "numeric"))
    for ch in LAB_CHANNELS:
        specs.append(FeatureSpec(f"{ch}_last", ch, "since_admission", "last", "numeric"))
    for ch in FLAG_CHANNELS:
        specs.append(FeatureSpec(f"{ch}_any", ch, "since_admission", "exists", "boolean"))
    specs.append(FeatureSpec("age", "age", "since_admission", "last", "numeric"))
    specs.append(FeatureSpec("sex", "sex", "since_admission", "last", "category"))
    specs.append(FeatureSpec("admission_type", "admission_type",
                             "since_admission", "last", "category"))
    specs.append(FeatureSpec("care_unit", "care_unit",
                             "since_admission", "last", "category"))
    specs.append(FeatureSpec("braden_last", cohort.BRADEN_CHANNEL,
                             "since_admission", "last", "numeric"))
    specs.append(FeatureSpec("braden_min", cohort.BRADEN_CHANNEL,
                             "since_admission", "min", "numeric"))
    return tuple(specs)


def schema_hash(specs) -> str:
    payload = ";".join(
        f"{s.name},{s.channel},{s.window},{s.aggregation},{s.output_kind}"
        for s in specs)
    return hashlib.sha256(payload.encode()).hexdigest()


class _ChannelSeries:
    """Time-sorted (timestamps, values) arrays for one channel of one stay."""

    __slots__ = ("times", "values")

    def __init__(self, events):
        self.times = np.array([e.timestamp for e in events], dtype=np.float64)
        self.values = [e.value for e in events]

    def window(self, start, cutoff):
        """Indices of events with start <= timestamp <= cutoff."""
        lo = bisect_left(self.times, start)
        hi = bisect_right(self.times, cutoff)
        return lo, hi


class _StayIndex:
    def __init__(self, store: CohortStore, stay_id: str):
        stay = store.stays[stay_id]
        self.admit = stay.admit_time
        patient = store.patients[stay.patient_id]
        self.age = float(age_at(patient.birth_date, stay.admit_time))
        self.sex = patient.sex
        by_channel: dict[str, list] = {}
        for ev in store.events_by_stay[stay_id]:
            by_channel.setdefault(ev.channel, []).append(ev)
        self.channels = {ch: _ChannelSeries(evs) for ch, evs in by_channel.items()}


def _aggregate(series, lo, hi, spec: FeatureSpec):
    n = hi - lo
    if spec.aggregation == "exists":
        return n > 0
    if spec.aggregation == "count":
        return float(n)
    if n == 0:
        return MISSING
    if spec.aggregation == "last":
        v = series.values[hi - 1]
        return float(v) if spec.output_kind == "numeric" else v
    vals = [float(v) for v in series.values[lo:hi]]
    if spec.aggregation == "min":
        return min(vals)
    if spec.aggregation == "max":
        return max(vals)
    return math.fsum(vals) / n  # mean


def _empty_value(spec: FeatureSpec):
    if spec.aggregation == "exists":
        return False
    if spec.aggregation == "count":
        return 0.0
    return MISSING


def extract_day(store: CohortStore, specs, stay_day: StayDay) -> dict:
    """Evaluate every spec for one stay-day. Standalone entry point; the
    dataset builder uses the cached per-stay index instead."""
    return _extract_with_index(_StayIndex(store, stay_day.stay_id),
                               store.first_stage2.get(stay_day.stay_id),
                               specs, stay_day)


def _extract_with_index(index: _StayIndex, injury_time, specs, stay_day: StayDay):
    cutoff = stay_day.day_end
    if injury_time is not None and injury_time < cutoff:
        cutoff = injury_time
    row = {}
    for spec in specs:
        if spec.channel == "age":
            row[spec.name] = index.age
            continue
        if spec.channel == "sex":
            row[spec.name] = index.sex
            continue
        series = index.channels.get(spec.channel)
        if series is None:
            row[spec.name] = _empty_value(spec)
            continue
        start = stay_day.day_start if spec.window == "last_24h" else index.admit
        lo, hi = series.window(start, cutoff)
        if hi <= lo:
            row[spec.name] = _empty_value(spec)
        else:
            row[spec.name] = _aggregate(series, lo, hi, spec)
    return row


def label_day(stay_day: StayDay, first_stage2_time, horizon_days=HORIZON_DAYS) -> bool:
    """True iff the injury falls in (day_start, day_end + horizon]."""
    if first_stage2_time is None:
        return False
    upper = stay_day.day_end + horizon_days * cohort.DAY_SECONDS
    return stay_day.day_start < first_stage2_time <= upper


def _check_numeric_channels(store: CohortStore, specs):
    # numeric aggregation over a category/flag channel is a schema error,
    # detected once per dataset build rather than per row
    numeric_channels = {s.channel for s in specs
                        if s.output_kind == "numeric"
                        and s.channel not in VIRTUAL_CHANNELS}
    for ev in store.events:
        if ev.channel in numeric_channels and ev.value_kind != "numeric":
            raise SchemaError(
                f"channel {ev.channel!r} used as numeric but carries "
                f"{ev.value_kind} events")


class DayDataset:
    def __init__(self, specs, examples, stay_labels):
        self.specs = tuple(specs)
        self.examples = list(examples)
        self.stay_labels = dict(stay_labels)
        self._columns = None

    def __len__(self):
        return len(self.examples)

    def summary(self) -> dict:
        return {
            "rows": len(self.examples),
            "positives": sum(1 for e in self.examples if e.label),
            "stays": len(self.stay_labels),
        }

    def columns(self) -> dict:
        """Columnar view: numeric -> float64 with nan for missing,
        boolean -> float64 0/1, category -> object array with None.
        Cached; treat the arrays as read-only."""
        if self._columns is not None:
            return self._columns
        out = {}
        for spec in self.specs:
            vals = [e.features[spec.name] for e in self.examples]
            if spec.output_kind == "category":
                out[spec.name] = np.array(vals, dtype=object)
            elif spec.output_kind == "boolean":
                out[spec.name] = np.array(
                    [np.nan if v is MISSING else float(v) for v in vals],
                    dtype=np.float64)
            else:
                out[spec.name] = np.array(
                    [np.nan if v is MISSING else v for v in vals],
                    dtype=np.float64)
        self._columns = out
        return out

    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.examples], dtype=bool)

    def stay_ids(self) -> list:
        return [e.stay_id for e in self.examples]

    def day_indices(self) -> np.ndarray:
        return np.array([e.day_index for e in self.examples], dtype=np.int64)

    def latest_braden_column(self) -> np.ndarray:
        return np.array(
            [np.nan if e.latest_braden is None else float(e.latest_braden)
             for e in self.examples], dtype=np.float64)


def build_dataset(store: CohortStore, specs=None) -> DayDataset:
    """One example per enumerated stay-day, in (stay_id, day_index) order."""
    if specs is None:
        specs = default_specs()
    specs = tuple(specs)
    _check_numeric_channels(store, specs)

    days = cohort.enumerate_stay_days(store)
    examples = []
    stay_labels = {}
    index = None
    current = None
    for day in days:
        if day.stay_id != current:
            current = day.stay_id
            index = _StayIndex(store, current)
            stay_labels[current] = current in store.first_stage2
        injury = store.first_stage2.get(day.stay_id)
        features = _extract_with_index(index, injury, specs, day)
        examples.append(DayExample(
            stay_id=day.stay_id,
            day_index=day.day_index,
            features=features,
            label=label_day(day, injury),
            latest_braden=store.latest_braden(day.stay_id, day.day_end),
        ))
    ds = DayDataset(specs, examples, stay_labels)
    log.info("built dataset: %s", ds.summary())
    return ds


# ---------------------------------------------------------------------------
# file formats

def _guard_path(path):
    if Path(path).name == ORACLE_BASENAME:
        raise SchemaError(f"{ORACLE_BASENAME} is the generator's risk oracle and "
                          "must not be used as feature input or output")
    return Path(path)


def _format_cell(spec, value):
    if value is MISSING:
        return ""
    if spec.output_kind == "boolean":
        return "true" if value else "false"
    if spec.output_kind == "category":
        return value
    v = float(value)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _parse_cell(spec, text):
    if text == "":
        return MISSING
    if spec.output_kind == "boolean":
        return text == "true"
    if spec.output_kind == "category":
        return text
    return float(text)


def write_dataset(ds: DayDataset, path):
    """Write the dataset plus a `<path>.schema.yaml` sidecar with the specs."""
    path = _guard_path(path)
    names = [s.name for s in ds.specs]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stay_id", "day_index"] + names + ["label", "latest_braden"])
        for e in ds.examples:
            row = [e.stay_id, str(e.day_index)]
            row += [_format_cell(s, e.features[s.name]) for s in ds.specs]
            row.append("true" if e.label else "false")
            row.append("" if e.latest_braden is None else str(e.latest_braden))
            w.writerow(row)
    save_specs(ds.specs, sidecar_path(path))


def sidecar_path(dataset_path) -> Path:
    p = Path(dataset_path)
    return p.with_name(p.name + ".schema.yaml")


def read_dataset(path, specs=None) -> DayDataset:
    path = _guard_path(path)
    if specs is None:
        specs = load_specs(sidecar_path(path))
    specs = tuple(specs)
    by_name = {s.name: s for s in specs}
    examples = []
    stay_labels = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = ["stay_id", "day_index"] + [s.name for s in specs] \
            + ["label", "latest_braden"]
        if header != expected:
            raise SchemaError(f"{path}: dataset header does not match schema")
        for row in reader:
            features = {name: _parse_cell(by_name[name], cell)
                        for name, cell in zip(expected[2:-2], row[2:-2])}
            label = row[-2] == "true"
            lb = None if row[-1] == "" else int(row[-1])
            e = DayExample(row[0], int(row[1]), features, label, lb)
            examples.append(e)
            stay_labels[e.stay_id] = stay_labels.get(e.stay_id, False) or label
    return DayDataset(specs, examples, stay_labels)


def save_specs(specs, path):
    path = _guard_path(path)
    payload = [{"name": s.name, "channel": s.channel, "window": s.window,
                "aggregation": s.aggregation, "output_kind": s.output_kind}
               for s in specs]
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(payload, fh, sort_keys=False)


def load_specs(path) -> tuple:
    path = _guard_path(path)
    with open(path, encoding="utf-8") as fh:
        payload = yaml.safe_load(fh)
    if not isinstance(payload, list):
        raise SchemaError(f"{path}: expected a list of feature specs")
    return tuple(FeatureSpec(**item) for item in payload)
