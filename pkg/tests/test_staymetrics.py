"""Stay-level OR-aggregation, PR curves, operating points, Braden baseline."""
import math

import numpy as np
import pytest

from pibench import cohort, staymetrics
from pibench.staymetrics import (ConfusionCounts, MetricError, OperatingPoint,
                                 PRCurve, StayScore, aggregate,
                                 braden_day_scores, braden_scores_from_rows,
                                 confusion, group_scores, pr_curve,
                                 precision_at_sensitivity,
                                 sensitivity_at_precision)

from conftest import basic_store, braden, make_store, mk_patient, mk_stay, ts


def stays_from(pairs):
    """[(aggregate, label), ...] -> StayScores with one day each."""
    return [StayScore(f"s{i}", (float(a),), bool(lab))
            for i, (a, lab) in enumerate(pairs)]


EIGHT = stays_from([(0.9, True), (0.7, True), (0.4, True), (0.2, True),
                    (0.8, False), (0.3, False), (0.1, False), (0.05, False)])


# ---------------------------------------------------------------------------
# aggregation and confusion counts

def test_aggregate_is_max_of_day_scores():
    sc = StayScore("s", (0.1, 0.8, 0.3), True)
    assert sc.aggregate == 0.8
    assert aggregate([0.1, 0.8, 0.3]) == 0.8


def test_zero_day_stay_rejected():
    with pytest.raises(MetricError, match="no scored days"):
        StayScore("s", (), True)
    with pytest.raises(MetricError):
        aggregate([])


def test_confusion_worked_example():
    c = confusion(EIGHT, 0.7)
    assert (c.vp, c.fp, c.fn, c.vn) == (2, 1, 2, 3)
    assert c.sensitivity == 0.5
    assert c.precision == pytest.approx(2 / 3, abs=1e-15)


def test_confusion_threshold_is_inclusive():
    c_at = confusion(EIGHT, 0.9)
    assert (c_at.vp, c_at.fp) == (1, 0)
    c_above = confusion(EIGHT, 0.9000001)
    assert (c_above.vp, c_above.fp) == (0, 0)
    assert c_above.precision == 1.0  # zero-prediction convention


def test_or_aggregation_equals_any_day_over_threshold():
    rng = np.random.default_rng(0)
    scores = []
    for i in range(50):
        k = int(rng.integers(1, 6))
        scores.append(StayScore(f"s{i}", tuple(rng.random(k)),
                                bool(rng.random() < 0.3)))
    for t in rng.random(20):
        c = confusion(scores, t)
        flagged = sum(1 for sc in scores
                      if any(d >= t for d in sc.day_scores))
        assert c.vp + c.fp == flagged


# ---------------------------------------------------------------------------
# PR curve

def brute_force_curve(scores):
    aggs = sorted({sc.aggregate for sc in scores}, reverse=True)
    n_pos = sum(sc.stay_label for sc in scores)
    points = [(math.inf, 0.0, 1.0)]
    for t in aggs:
        vp = sum(1 for sc in scores if sc.stay_label and sc.aggregate >= t)
        pp = sum(1 for sc in scores if sc.aggregate >= t)
        points.append((t, vp / n_pos, vp / pp))
    return points


def test_curve_worked_example():
    curve = pr_curve(EIGHT)
    assert curve.n_pos == 4 and curve.n_neg == 4
    assert len(curve.points) == 9  # sentinel + 8 distinct aggregates
    assert curve.points[0] == OperatingPoint(math.inf, 0.0, 1.0)
    got = [(p.threshold, p.sensitivity, p.precision) for p in curve.points]
    assert got == brute_force_curve(EIGHT)


def test_curve_merges_tied_aggregates():
    scores = stays_from([(0.5, True), (0.5, False), (0.2, True)])
    curve = pr_curve(scores)
    assert [p.threshold for p in curve.points] == [math.inf, 0.5, 0.2]
    assert curve.points[1].sensitivity == 0.5
    assert curve.points[1].precision == 0.5


def test_curve_requires_both_classes():
    with pytest.raises(MetricError, match="at least one positive"):
        pr_curve(stays_from([(0.5, True), (0.2, True)]))
    with pytest.raises(MetricError):
        pr_curve(stays_from([(0.5, False)]))


def test_curve_invariant_under_monotone_transform():
    rng = np.random.default_rng(1)
    scores = stays_from([(float(v), bool(l)) for v, l in
                         zip(rng.random(40), rng.random(40) < 0.4)])
    base = pr_curve(scores)
    mapped = [StayScore(sc.stay_id, tuple(3.0 * d + 1.0 for d in sc.day_scores),
                        sc.stay_label) for sc in scores]
    curve = pr_curve(mapped)
    assert [(p.sensitivity, p.precision) for p in curve.points] == \
        [(p.sensitivity, p.precision) for p in base.points]


@pytest.mark.parametrize("seed", range(5))
def test_curve_matches_brute_force_on_random_sets(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(5, 60))
    vals = rng.choice([0.1, 0.2, 0.3, 0.5, 0.7, 0.9], size=n)  # force ties
    labs = rng.random(n) < 0.4
    if labs.all() or not labs.any():
        labs[0] = not labs[0]
    scores = stays_from(list(zip(vals, labs)))
    curve = pr_curve(scores)
    assert [(p.threshold, p.sensitivity, p.precision)
            for p in curve.points] == brute_force_curve(scores)


# ---------------------------------------------------------------------------
# operating points

def test_precision_at_sensitivity_picks_largest_adequate_threshold():
    curve = pr_curve(EIGHT)
    pt = precision_at_sensitivity(curve, 0.5)
    assert pt.threshold == 0.7
    assert pt.sensitivity == 0.5
    assert pt.precision == pytest.approx(2 / 3)
    # sensitivity 1.0 is first reached at 0.2; largest adequate threshold wins
    assert precision_at_sensitivity(curve, 1.0).threshold == 0.2


def test_precision_at_sensitivity_unachievable():
    curve = pr_curve(EIGHT)
    with pytest.raises(MetricError, match="unachievable"):
        precision_at_sensitivity(curve, 1.1)


def test_sensitivity_at_precision_ignores_sentinel():
    curve = pr_curve(EIGHT)
    pt = sensitivity_at_precision(curve, 0.99)
    assert pt.threshold == 0.9  # the sentinel (inf, 0, 1.0) must not win
    assert pt.sensitivity == 0.25
    with pytest.raises(MetricError, match="unachievable"):
        sensitivity_at_precision(pr_curve(stays_from(
            [(0.9, False), (0.5, True)])), 0.8)


def test_sensitivity_at_precision_takes_max_sensitivity():
    scores = stays_from([(0.9, True), (0.8, True), (0.7, False), (0.6, True)])
    pt = sensitivity_at_precision(pr_curve(scores), 0.75)
    assert pt.sensitivity == 1.0 and pt.threshold == 0.6


def test_sensitivity_ties_resolve_to_larger_threshold():
    # sensitivity 1.0 holds at 0.8 (prec 1.0) and 0.5 (prec 2/3); both clear
    # the 0.6 bar, so the tie must go to the larger threshold
    scores = stays_from([(0.9, True), (0.8, True), (0.5, False), (0.2, False)])
    pt = sensitivity_at_precision(pr_curve(scores), 0.6)
    assert pt.sensitivity == 1.0
    assert pt.threshold == 0.8


# ---------------------------------------------------------------------------
# Braden baseline

def test_braden_day_score_is_24_minus_total():
    store = basic_store(dur_days=2.0)  # readings of 15 at 00:30 both days
    days = cohort.enumerate_stay_days(store)
    scores = braden_day_scores(store, days)
    assert len(scores) == 1
    assert scores[0].day_scores == (9.0, 9.0)
    assert scores[0].stay_label is False


def test_braden_score_examples():
    patients = [mk_patient("p1"), mk_patient("p2")]
    stays = [mk_stay("s1", "p1", 0.0, 2.0), mk_stay("s2", "p2", 0.0, 1.0)]
    events = [braden("s1", ts(0.2), 18), braden("s1", ts(1.2), 12),
              braden("s2", ts(0.2), 23)]
    store = make_store(patients, stays, events, filtered=True)
    scores = braden_day_scores(store, cohort.enumerate_stay_days(store))
    by_id = {sc.stay_id: sc for sc in scores}
    assert by_id["s1"].day_scores == (6.0, 12.0)   # totals 18 then 12
    assert by_id["s1"].aggregate == 12.0
    assert by_id["s2"].day_scores == (1.0,)        # total 23: minimal risk


def test_braden_skips_days_before_first_reading():
    patients = [mk_patient("p1"), mk_patient("p2")]
    stays = [mk_stay("s1", "p1", 0.0, 3.0), mk_stay("s2", "p2", 0.0, 2.0)]
    # s1's first reading appears on day 1; s2 has readings from day 0
    events = [braden("s1", ts(1.5), 14), braden("s2", ts(0.5), 16)]
    store = make_store(patients, stays, events, filtered=True)
    scores = braden_day_scores(store, cohort.enumerate_stay_days(store))
    by_id = {sc.stay_id: sc for sc in scores}
    assert by_id["s1"].day_indices == (1, 2)
    assert by_id["s2"].day_indices == (0, 1)


def test_braden_excludes_unscoreable_stays_with_warning(caplog):
    import logging
    patients = [mk_patient("p1"), mk_patient("p2")]
    stays = [mk_stay("s1", "p1", 0.0, 1.0), mk_stay("s2", "p2", 0.0, 1.0)]
    # s2's only reading lands after its single day boundary, so every day
    # is skipped and the stay has nothing to score
    events = [braden("s1", ts(0.5), 14), braden("s2", ts(1.5), 9)]
    store = cohort.CohortStore(patients, stays, events, filtered=True)
    with caplog.at_level(logging.WARNING):
        scores = braden_day_scores(store, cohort.enumerate_stay_days(store))
    assert [sc.stay_id for sc in scores] == ["s1"]
    assert any("excluded 1 stays with no scored days" in r.message
               for r in caplog.records)


def test_braden_from_rows_matches_store_path(small_store, small_dataset):
    days = cohort.enumerate_stay_days(small_store)
    via_store = braden_day_scores(small_store, days)
    via_rows = braden_scores_from_rows(
        small_dataset.stay_ids(), small_dataset.day_indices(),
        small_dataset.latest_braden_column(), small_dataset.stay_labels)
    assert len(via_store) == len(via_rows)
    for a, b in zip(via_store, via_rows):
        assert (a.stay_id, a.day_scores, a.stay_label, a.day_indices) == \
            (b.stay_id, b.day_scores, b.stay_label, b.day_indices)


# ---------------------------------------------------------------------------
# grouping and file round trips

def test_group_scores_first_seen_order():
    stay_ids = ["b", "b", "a", "b", "a"]
    day_scores = [0.1, 0.2, 0.3, 0.4, 0.5]
    day_idx = [0, 1, 0, 2, 1]
    out = group_scores(stay_ids, day_scores, day_idx,
                       {"a": True, "b": False})
    assert [sc.stay_id for sc in out] == ["b", "a"]
    assert out[0].day_scores == (0.1, 0.2, 0.4)
    assert out[1].day_scores == (0.3, 0.5)
    assert out[1].stay_label is True


def test_scores_file_round_trip(tmp_path):
    scores = [StayScore("s1", (0.25, 0.75), True, (0, 1)),
              StayScore("s2", (1.0,), False, (3,))]
    path = tmp_path / "scores.csv"
    staymetrics.write_scores(path, scores)
    back = staymetrics.read_scores(path)
    assert back == scores


def test_curve_file_round_trip(tmp_path):
    curve = pr_curve(EIGHT)
    path = tmp_path / "curve.csv"
    staymetrics.write_curve(path, curve)
    back = staymetrics.read_curve(path)
    assert back == list(curve.points)


def test_bad_score_header_rejected(tmp_path):
    path = tmp_path / "scores.csv"
    path.write_text("stay,day,value,label\n")
    with pytest.raises(MetricError, match="bad score-file header"):
        staymetrics.read_scores(path)
