"""Stay-level evaluation: OR-aggregation, confusion counts, PR curves,
fixed-operating-point search, and the Braden-scale baseline.

A stay is predicted positive when any of its daily scores clears the
threshold, which is the same as thresholding the maximum daily score; all
counts and rates are over stays, not days. Sensitivity is vp/(vp+fn),
precision vp/(vp+fp). Threshold comparison is inclusive (>=) so the Braden
scale's 18 discrete cutoffs behave sensibly.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cohort import CohortStore, StayDay

log = logging.getLogger(__name__)

BRADEN_MAX = 24  # day score = 24 - latest total, so lower Braden = higher risk


class MetricError(Exception):
    pass


@dataclass(frozen=True)
class StayScore:
    stay_id: str
    day_scores: tuple
    stay_label: bool
    day_indices: tuple = None

    def __post_init__(self):
        if len(self.day_scores) == 0:
            raise MetricError(f"no scored days for stay {self.stay_id!r}")

    @property
    def aggregate(self) -> float:
        return max(self.day_scores)


@dataclass(frozen=True)
class ConfusionCounts:
    vp: int
    fp: int
    fn: int
    vn: int

    @property
    def sensitivity(self) -> float:
        return self.vp / (self.vp + self.fn)

    @property
    def precision(self) -> float:
        # undefined at zero predicted positives; 1 by convention (sentinel)
        if self.vp + self.fp == 0:
            return 1.0
        return self.vp / (self.vp + self.fp)


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    sensitivity: float
    precision: float


@dataclass(frozen=True)
class PRCurve:
    points: tuple  # sorted by descending threshold; points[0] is the sentinel
    n_pos: int
    n_neg: int


def aggregate(day_scores) -> float:
    if len(day_scores) == 0:
        raise MetricError("no scored days")
    return max(day_scores)


def group_scores(stay_ids, day_scores, day_indices, stay_labels) -> list:
    """Row-parallel arrays -> one StayScore per stay, in first-seen order."""
    per_stay = {}
    order = []
    for sid, score, di in zip(stay_ids, day_scores, day_indices):
        if sid not in per_stay:
            per_stay[sid] = ([], [])
            order.append(sid)
        per_stay[sid][0].append(float(score))
        per_stay[sid][1].append(int(di))
    return [StayScore(sid, tuple(per_stay[sid][0]), bool(stay_labels[sid]),
                      tuple(per_stay[sid][1]))
            for sid in order]


def confusion(stay_scores, threshold) -> ConfusionCounts:
    vp = fp = fn = vn = 0
    for sc in stay_scores:
        predicted = sc.aggregate >= threshold
        if sc.stay_label:
            if predicted:
                vp += 1
            else:
                fn += 1
        else:
            if predicted:
                fp += 1
            else:
                vn += 1
    return ConfusionCounts(vp, fp, fn, vn)


def pr_curve(stay_scores) -> PRCurve:
    """Exact sweep over every distinct aggregate, plus a +inf sentinel at
    (sensitivity 0, precision 1)."""
    aggs = np.array([sc.aggregate for sc in stay_scores], dtype=np.float64)
    labels = np.array([sc.stay_label for sc in stay_scores], dtype=bool)
    n_pos = int(labels.sum())
    n_neg = int(len(labels) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise MetricError("PR curve needs at least one positive and one "
                          "negative stay")
    order = np.argsort(-aggs, kind="stable")
    aggs = aggs[order]
    labels = labels[order]
    cum_pos = np.cumsum(labels)

    points = [OperatingPoint(math.inf, 0.0, 1.0)]
    n = len(aggs)
    for i in range(n):
        if i + 1 < n and aggs[i + 1] == aggs[i]:
            continue  # not the last row of this distinct value
        vp = int(cum_pos[i])
        pred_pos = i + 1
        points.append(OperatingPoint(float(aggs[i]), vp / n_pos, vp / pred_pos))
    return PRCurve(tuple(points), n_pos, n_neg)


def precision_at_sensitivity(curve: PRCurve, target=0.5) -> OperatingPoint:
    """The largest threshold whose sensitivity reaches the target: the
    cheapest operating point guaranteeing it."""
    for pt in curve.points:
        if pt.sensitivity >= target:
            return pt
    raise MetricError(f"sensitivity target {target} unachievable")


def sensitivity_at_precision(curve: PRCurve, target) -> OperatingPoint:
    """Max-sensitivity point among real operating points with precision >=
    target (the +inf sentinel does not qualify); ties -> larger threshold."""
    best = None
    for pt in curve.points[1:]:
        if pt.precision >= target and (best is None
                                       or pt.sensitivity > best.sensitivity):
            best = pt
    if best is None:
        raise MetricError(f"precision target {target} unachievable")
    return best


def braden_day_scores(store: CohortStore, stay_days) -> list:
    """Braden baseline scores: per day, 24 minus the most recent total at
    day_end. Days before the first reading are skipped; stays left with no
    scored days are excluded with a warning."""
    per_stay = {}
    order = []
    for day in stay_days:
        lb = store.latest_braden(day.stay_id, day.day_end)
        if day.stay_id not in per_stay:
            per_stay[day.stay_id] = ([], [])
            order.append(day.stay_id)
        if lb is None:
            continue
        per_stay[day.stay_id][0].append(float(BRADEN_MAX - lb))
        per_stay[day.stay_id][1].append(day.day_index)
    out = []
    excluded = 0
    for sid in order:
        scores, indices = per_stay[sid]
        if not scores:
            excluded += 1
            continue
        out.append(StayScore(sid, tuple(scores), sid in store.first_stage2,
                             tuple(indices)))
    if excluded:
        log.warning("excluded %d stays with no scored days from the Braden "
                    "baseline", excluded)
    return out


def braden_scores_from_rows(stay_ids, day_indices, latest_braden,
                            stay_labels) -> list:
    """Same baseline, built from dataset rows (latest_braden column; nan
    where no reading exists yet)."""
    per_stay = {}
    order = []
    for sid, di, lb in zip(stay_ids, day_indices, latest_braden):
        if sid not in per_stay:
            per_stay[sid] = ([], [])
            order.append(sid)
        if np.isnan(lb):
            continue
        per_stay[sid][0].append(float(BRADEN_MAX - lb))
        per_stay[sid][1].append(int(di))
    out = []
    excluded = 0
    for sid in order:
        scores, indices = per_stay[sid]
        if not scores:
            excluded += 1
            continue
        out.append(StayScore(sid, tuple(scores), bool(stay_labels[sid]),
                             tuple(indices)))
    if excluded:
        log.warning("excluded %d stays with no scored days from the Braden "
                    "baseline", excluded)
    return out


# ---------------------------------------------------------------------------
# file formats

def _fmt(x: float) -> str:
    v = float(x)
    if v == int(v) and abs(v) < 1e15 and math.isfinite(v):
        return str(int(v))
    return repr(v)


def write_scores(path, stay_scores):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stay_id", "day_index", "score", "stay_label"])
        for sc in stay_scores:
            indices = sc.day_indices or range(len(sc.day_scores))
            for di, score in zip(indices, sc.day_scores):
                w.writerow([sc.stay_id, str(di), _fmt(score),
                            "true" if sc.stay_label else "false"])


def read_scores(path) -> list:
    per_stay = {}
    order = []
    labels = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["stay_id", "day_index", "score", "stay_label"]:
            raise MetricError(f"{path}: bad score-file header")
        for row in reader:
            sid = row[0]
            if sid not in per_stay:
                per_stay[sid] = ([], [])
                order.append(sid)
            per_stay[sid][0].append(float(row[2]))
            per_stay[sid][1].append(int(row[1]))
            labels[sid] = row[3] == "true"
    return [StayScore(sid, tuple(per_stay[sid][0]), labels[sid],
                      tuple(per_stay[sid][1])) for sid in order]


def write_curve(path, curve: PRCurve):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "sensitivity", "precision"])
        for pt in curve.points:
            w.writerow([repr(pt.threshold), repr(pt.sensitivity),
                        repr(pt.precision)])


def read_curve(path) -> list:
    points = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            points.append(OperatingPoint(float(row[0]), float(row[1]),
                                         float(row[2])))
    return points
