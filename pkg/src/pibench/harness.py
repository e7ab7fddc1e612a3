"""Experiment orchestration: stratified stay-level split, k-fold CV,
random hyperparameter search scored by precision at the target sensitivity,
final evaluation against the Braden baseline, and the derived cost/care
figures.

Everything downstream of the dataset file is a pure function of
(dataset bytes, config): hyperparameter candidates and per-fit seeds come
from streams keyed by (seed, purpose, ...), so results are identical at any
worker count.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import yaml

from . import featurelab, models, staymetrics
from ._rng import stream, substream_seed
from .pipeline import FittedPipeline, fit_pipeline
from .preprocess import fit_preprocessor
from .staymetrics import MetricError

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    dataset: str = "dataset.csv"
    models: list = field(default_factory=lambda: list(models.MODEL_KINDS))
    split_ratio: float = 0.8
    cv_folds: int = 5
    search_samples: int = 30
    target_sensitivity: float = 0.5
    reference_precision: float = None  # None: use the Braden baseline's
    seed: int = 42

    def validate(self):
        if not 0 < self.split_ratio < 1:
            raise ConfigError("split_ratio must be in (0, 1)")
        if self.cv_folds < 2:
            raise ConfigError("cv_folds must be at least 2")
        if self.search_samples < 1:
            raise ConfigError("search_samples must be at least 1")
        if not 0 < self.target_sensitivity <= 1:
            raise ConfigError("target_sensitivity must be in (0, 1]")
        for kind in self.models:
            if kind not in models.MODEL_KINDS:
                raise ConfigError(f"unknown model kind {kind!r}")

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            payload = yaml.safe_load(fh) or {}
        if not isinstance(payload, dict):
            raise ConfigError(f"{path}: expected a mapping")
        try:
            cfg = cls(**payload)
        except TypeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        cfg.validate()
        return cfg

    def to_file(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(asdict(self), fh, sort_keys=False)


# ---------------------------------------------------------------------------
# splits

def split_stays(stay_labels: dict, ratio: float, seed: int):
    """Stratified stay-level split -> (train_ids, test_ids), both sorted.

    Train sizes use round-half-up on the exact proportions, then a guard
    keeps at least one stay of each class on each side.
    """
    pos = sorted(s for s, lab in stay_labels.items() if lab)
    neg = sorted(s for s, lab in stay_labels.items() if not lab)
    if len(pos) < 2 or len(neg) < 2:
        raise MetricError("too few stays to stratify: need at least two of "
                          "each class")
    n = len(pos) + len(neg)
    n_train = int(math.floor(n * ratio + 0.5))
    n_train_pos = int(math.floor(len(pos) * ratio + 0.5))
    n_train_pos = min(max(n_train_pos, 1), len(pos) - 1)
    n_train_neg = min(max(n_train - n_train_pos, 1), len(neg) - 1)

    rng = stream(seed, "split")
    pos_perm = [pos[i] for i in rng.permutation(len(pos))]
    neg_perm = [neg[i] for i in rng.permutation(len(neg))]
    train = sorted(pos_perm[:n_train_pos] + neg_perm[:n_train_neg])
    test = sorted(pos_perm[n_train_pos:] + neg_perm[n_train_neg:])
    return train, test


def cv_folds(train_ids, stay_labels, k: int, seed: int):
    """Stay-level stratified partition into k validation folds (id lists)."""
    pos = sorted(s for s in train_ids if stay_labels[s])
    neg = sorted(s for s in train_ids if not stay_labels[s])
    if k > len(pos) or k > len(neg):
        raise MetricError(f"cannot stratify {k} folds from {len(pos)} "
                          f"positive / {len(neg)} negative stays")
    rng = stream(seed, "cv")
    pos_perm = [pos[i] for i in rng.permutation(len(pos))]
    neg_perm = [neg[i] for i in rng.permutation(len(neg))]
    return [sorted(pos_perm[j::k] + neg_perm[j::k]) for j in range(k)]


# ---------------------------------------------------------------------------
# hyperparameter spaces

def sample_hp(kind: str, rng) -> dict:
    """One draw from the model's search space; dimensions are sampled in a
    fixed order so candidate i is the same in every run."""
    if kind == "logistic":
        return {"lam": float(np.exp(rng.uniform(np.log(1e-4), np.log(10.0))))}
    if kind == "forest":
        n_trees = (100, 200, 400)[rng.integers(0, 3)]
        max_depth = (4, 8, 16, None)[rng.integers(0, 4)]
        min_leaf = (1, 5, 20)[rng.integers(0, 3)]
        feature_fraction = ("sqrt", 0.5, "all")[rng.integers(0, 3)]
        return {"n_trees": n_trees, "max_depth": max_depth,
                "min_leaf": min_leaf, "feature_fraction": feature_fraction}
    if kind == "gbdt":
        n_rounds = int(rng.integers(50, 501))
        max_depth = int(rng.integers(2, 7))
        lr = float(np.exp(rng.uniform(np.log(0.01), np.log(0.3))))
        subsample = (0.5, 0.8, 1.0)[rng.integers(0, 3)]
        return {"n_rounds": n_rounds, "max_depth": max_depth,
                "learning_rate": lr, "subsample": subsample}
    raise ConfigError(f"unknown model kind {kind!r}")


@dataclass
class CVResult:
    hyperparameters: dict
    fold_precisions: list  # None where the fold target was unachievable
    mean: float  # nan when every fold failed


# ---------------------------------------------------------------------------
# search

class _FoldData:
    """Per-fold training matrices, fitted once and shared by all candidates
    (the preprocessor depends only on the fold's training rows)."""

    def __init__(self, ds, row_stay, fold_val_ids, train_ids, target):
        val_set = set(fold_val_ids)
        fit_set = set(train_ids) - val_set
        fit_mask = np.array([s in fit_set for s in row_stay])
        val_mask = np.array([s in val_set for s in row_stay])
        cols = ds.columns()
        labels = ds.labels()
        self.prep = fit_preprocessor(
            ds.specs, {k: v[fit_mask] for k, v in cols.items()})
        self.X_fit = self.prep.transform({k: v[fit_mask] for k, v in cols.items()})
        self.y_fit = labels[fit_mask].astype(np.float64)
        self.X_val = self.prep.transform({k: v[val_mask] for k, v in cols.items()})
        self.val_stays = [s for s, m in zip(row_stay, val_mask) if m]
        self.val_days = ds.day_indices()[val_mask]
        self.stay_labels = ds.stay_labels
        self.target = target

    def score_candidate(self, kind, hp, seed):
        model = models.train(kind, self.X_fit, self.y_fit, hp, seed)
        day_scores = model.predict_proba(self.X_val)
        scores = staymetrics.group_scores(self.val_stays, day_scores,
                                          self.val_days, self.stay_labels)
        try:
            curve = staymetrics.pr_curve(scores)
            return staymetrics.precision_at_sensitivity(curve, self.target).precision
        except MetricError:
            return None


def random_search(ds, row_stay, train_ids, kind, config: ExperimentConfig,
                  jobs=1):
    """Evaluate `search_samples` candidates by mean CV precision at the
    target sensitivity; returns (best_hp, [CVResult...]). Ties go to the
    lower candidate index."""
    folds = cv_folds(train_ids, ds.stay_labels, config.cv_folds, config.seed)
    fold_data = [_FoldData(ds, row_stay, fold, train_ids,
                           config.target_sensitivity)
                 for fold in folds]
    hps = [sample_hp(kind, stream(config.seed, "search", kind, i))
           for i in range(config.search_samples)]

    grid = [(i, j) for i in range(len(hps)) for j in range(len(fold_data))]
    values = {}

    def run_cell(cell):
        i, j = cell
        seed = substream_seed(config.seed, "fit", kind, i, j)
        return cell, fold_data[j].score_candidate(kind, hps[i], seed)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for cell, val in pool.map(run_cell, grid):
                values[cell] = val
    else:
        for cell in grid:
            values[cell] = run_cell(cell)[1]

    results = []
    for i, hp in enumerate(hps):
        per_fold = [values[(i, j)] for j in range(len(fold_data))]
        ok = [v for v in per_fold if v is not None]
        mean = float(np.mean(ok)) if ok else float("nan")
        results.append(CVResult(hp, per_fold, mean))

    best_i = None
    for i, res in enumerate(results):
        if math.isnan(res.mean):
            continue
        if best_i is None or res.mean > results[best_i].mean:
            best_i = i
    if best_i is None:
        lines = "; ".join(f"candidate {i}: {r.hyperparameters}"
                          for i, r in enumerate(results))
        raise MetricError(f"all {kind} candidates failed to reach "
                          f"sensitivity {config.target_sensitivity}: {lines}")
    log.info("%s search: candidate %d wins with mean precision %.4f",
             kind, best_i, results[best_i].mean)
    return results[best_i].hyperparameters, results


# ---------------------------------------------------------------------------
# derived figures

def cost_reduction(p_baseline: float, p_model: float) -> float:
    """Relative intervention-cost saving when cost scales as 1/precision.
    Negative when the model is less precise than the baseline."""
    if not (0 < p_baseline <= 1 and 0 < p_model <= 1):
        raise ValueError("precisions must be in (0, 1]")
    return 1.0 - p_baseline / p_model

def care_improvement(s_model: float, s_baseline: float) -> float:
    """Relative gain in flagged injury stays at matched precision."""
    if not (0 < s_baseline <= 1 and 0 < s_model <= 1):
        raise ValueError("sensitivities must be in (0, 1]")
    return s_model / s_baseline - 1.0


# ---------------------------------------------------------------------------
# experiment

@dataclass
class EvaluationRow:
    kind: str
    hyperparameters: dict
    threshold: float
    cv_mean: float  # nan for the baseline
    test_precision: float
    test_sensitivity: float
    sensitivity_at_reference: float  # nan when unachievable
    curve: staymetrics.PRCurve


@dataclass
class Report:
    config: ExperimentConfig
    dataset_summary: dict
    n_train_stays: int
    n_test_stays: int
    reference_precision: float
    baseline: EvaluationRow
    rows: list
    cost_reduction: float
    care_improvement: float
    best_kind: str


def _stay_scores_for(ds, row_stay, ids, day_scores):
    wanted = set(ids)
    mask = np.array([s in wanted for s in row_stay])
    stays = [s for s, m in zip(row_stay, mask) if m]
    return staymetrics.group_scores(stays, np.asarray(day_scores)[mask],
                                    ds.day_indices()[mask], ds.stay_labels)


def _braden_scores_for(ds, row_stay, ids):
    wanted = set(ids)
    mask = np.array([s in wanted for s in row_stay])
    stays = [s for s, m in zip(row_stay, mask) if m]
    return staymetrics.braden_scores_from_rows(
        stays, ds.day_indices()[mask], ds.latest_braden_column()[mask],
        ds.stay_labels)


def run_experiment(config: ExperimentConfig, out_dir=None, jobs=1) -> Report:
    config.validate()
    ds = featurelab.read_dataset(config.dataset)
    row_stay = ds.stay_ids()
    train_ids, test_ids = split_stays(ds.stay_labels, config.split_ratio,
                                      config.seed)
    assert not set(train_ids) & set(test_ids)
    target = config.target_sensitivity

    # Braden baseline: threshold fixed on train, applied to test
    braden_train = _braden_scores_for(ds, row_stay, train_ids)
    braden_test = _braden_scores_for(ds, row_stay, test_ids)
    t_braden = staymetrics.precision_at_sensitivity(
        staymetrics.pr_curve(braden_train), target).threshold
    braden_conf = staymetrics.confusion(braden_test, t_braden)
    braden_curve = staymetrics.pr_curve(braden_test)
    baseline = EvaluationRow(
        kind="braden", hyperparameters={}, threshold=t_braden,
        cv_mean=float("nan"),
        test_precision=braden_conf.precision,
        test_sensitivity=braden_conf.sensitivity,
        sensitivity_at_reference=braden_conf.sensitivity,
        curve=braden_curve)

    reference = config.reference_precision
    if reference is None:
        reference = braden_conf.precision

    cols = ds.columns()
    labels = ds.labels()
    train_set = set(train_ids)
    train_mask = np.array([s in train_set for s in row_stay])
    train_cols = {k: v[train_mask] for k, v in cols.items()}
    train_labels = labels[train_mask].astype(np.float64)

    rows = []
    artifacts = {}
    for kind in config.models:
        try:
            best_hp, cv_results = random_search(ds, row_stay, train_ids, kind,
                                                config, jobs=jobs)
            cv_mean = max((r.mean for r in cv_results
                           if not math.isnan(r.mean)), default=float("nan"))
            pipe = fit_pipeline(ds.specs, train_cols, train_labels, kind,
                                best_hp, substream_seed(config.seed, "final",
                                                        kind))
        except MetricError as exc:
            raise MetricError(f"{kind}: {exc}") from exc

        all_day_scores = pipe.predict_proba(cols)
        train_scores = _stay_scores_for(ds, row_stay, train_ids,
                                        all_day_scores)
        t_star = staymetrics.precision_at_sensitivity(
            staymetrics.pr_curve(train_scores), target).threshold

        test_scores = _stay_scores_for(ds, row_stay, test_ids, all_day_scores)
        conf = staymetrics.confusion(test_scores, t_star)
        curve = staymetrics.pr_curve(test_scores)
        try:
            sens_ref = staymetrics.sensitivity_at_precision(
                curve, reference).sensitivity
        except MetricError:
            sens_ref = float("nan")

        pipe.metadata["threshold"] = t_star
        pipe.metadata["target_sensitivity"] = target
        rows.append(EvaluationRow(kind, best_hp, t_star, cv_mean,
                                  conf.precision, conf.sensitivity,
                                  sens_ref, curve))
        artifacts[kind] = pipe

    if rows:
        best = max(rows, key=lambda r: (r.test_precision, r.kind))
        cost = float("nan")
        if best.test_precision > 0 and braden_conf.precision > 0:
            cost = cost_reduction(braden_conf.precision, best.test_precision)
        care = float("nan")
        if not math.isnan(best.sensitivity_at_reference) \
                and braden_conf.sensitivity > 0:
            care = care_improvement(best.sensitivity_at_reference,
                                    braden_conf.sensitivity)
        best_kind = best.kind
    else:
        cost = care = float("nan")
        best_kind = "braden"

    report = Report(config=config, dataset_summary=ds.summary(),
                    n_train_stays=len(train_ids), n_test_stays=len(test_ids),
                    reference_precision=reference, baseline=baseline,
                    rows=rows, cost_reduction=cost, care_improvement=care,
                    best_kind=best_kind)

    if out_dir is not None:
        from .report import emit_report
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        model_dir = out_dir / "models"
        model_dir.mkdir(exist_ok=True)
        for kind, pipe in artifacts.items():
            pipe.save(model_dir / f"{kind}.json")
        emit_report(report, out_dir)
    return report
