"""Shared builders for hand-sized cohorts plus one small generated cohort
reused across modules."""
from datetime import date

import pytest

from pibench import cohort, featurelab, synthgen

T0 = cohort.parse_timestamp("2020-01-01T00:00:00Z")
DAY = cohort.DAY_SECONDS


def ts(days: float) -> float:
    return T0 + days * DAY


def mk_patient(pid="p1", birth="1970-06-15", sex="F"):
    return cohort.PatientRecord(pid, date.fromisoformat(birth), sex)


def mk_stay(sid, pid, admit_days=0.0, dur_days=3.0):
    return cohort.StayRecord(sid, pid, ts(admit_days), ts(admit_days + dur_days))


def ev(sid, t, channel, kind="numeric", value=1.0):
    return cohort.ClinicalEvent(sid, t, channel, kind, value)


def braden(sid, t, total=15):
    return ev(sid, t, cohort.BRADEN_CHANNEL, "numeric", float(total))


def injury(sid, t, stage=2):
    kind = "numeric" if isinstance(stage, int) else "category"
    value = float(stage) if isinstance(stage, int) else stage
    return ev(sid, t, cohort.INJURY_CHANNEL, kind, value)


def make_store(patients, stays, events, filtered=False):
    store = cohort.CohortStore(patients, stays, events)
    return cohort.apply_filters(store) if filtered else store


def basic_store(events_extra=(), dur_days=3.0, filtered=True):
    """One adult stay with a Braden reading each day, plus extra events."""
    n_days = int(dur_days) + 1
    events = [braden("s1", ts(d) + 1800.0, 15) for d in range(n_days)
              if d * 1.0 < dur_days]
    events += list(events_extra)
    return make_store([mk_patient()], [mk_stay("s1", "p1", 0.0, dur_days)],
                      events, filtered=filtered)


@pytest.fixture(scope="session")
def small_cohort_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth") / "cohort"
    synthgen.generate(synthgen.GeneratorConfig(n_patients=120, seed=5), out)
    return out


@pytest.fixture(scope="session")
def small_store(small_cohort_dir):
    return cohort.apply_filters(cohort.ingest(small_cohort_dir))


@pytest.fixture(scope="session")
def small_dataset(small_store):
    return featurelab.build_dataset(small_store)


@pytest.fixture(scope="session")
def tiny_dataset_file(tmp_path_factory):
    """Generated cohort big enough to split/stratify but quick to search."""
    root = tmp_path_factory.mktemp("tinyds")
    synthgen.generate(synthgen.GeneratorConfig(n_patients=150, seed=3),
                      root / "cohort")
    store = cohort.apply_filters(cohort.ingest(root / "cohort"))
    ds = featurelab.build_dataset(store)
    path = root / "dataset.csv"
    featurelab.write_dataset(ds, path)
    return path
