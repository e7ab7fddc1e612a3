"""Train-fitted preprocessing: median imputation, IQR scaling, one-hot.

Numeric features are centered on the training median and divided by the
interquartile range (Tukey-hinge quartiles; an IQR of zero falls back to a
divisor of 1). Missing numerics impute to the median, so they transform to
exactly 0. Booleans impute to false. Categories one-hot encode over the
vocabulary observed in training plus a reserved None column for missing;
a category never seen in training encodes as all zeros.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .featurelab import FeatureSpec, schema_hash

log = logging.getLogger(__name__)


def tukey_quartiles(values) -> tuple:
    """(q1, median, q3) by the midpoint-of-halves convention.

    The lower/upper halves include the middle element when the count is odd,
    e.g. {1,3,5,7} -> (2, 4, 6).
    """
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = len(v)
    if n == 0:
        raise ValueError("no values")

    def mid(a):
        m = len(a)
        return float((a[(m - 1) // 2] + a[m // 2]) / 2.0)

    half = (n + 1) // 2
    return mid(v[:half]), mid(v), mid(v[n // 2:])


@dataclass
class NumericStats:
    median: float
    q1: float
    q3: float

    @property
    def divisor(self) -> float:
        iqr = self.q3 - self.q1
        return iqr if iqr > 0 else 1.0


class FittedPreprocessor:
    """Frozen transform parameters; fit only ever sees training rows."""

    def __init__(self, specs, numeric_stats, vocabularies):
        self.specs = tuple(specs)
        self.numeric_stats = numeric_stats          # name -> NumericStats
        self.vocabularies = vocabularies            # name -> sorted category list
        self.schema_hash = schema_hash(self.specs)
        self.column_names = []
        for spec in self.specs:
            if spec.output_kind == "category":
                for cat in self.vocabularies[spec.name]:
                    self.column_names.append(f"{spec.name}={cat}")
                self.column_names.append(f"{spec.name}=None")
            else:
                self.column_names.append(spec.name)

    @property
    def width(self) -> int:
        return len(self.column_names)

    def transform(self, columns: dict) -> np.ndarray:
        """Columnar raw values (see DayDataset.columns) -> (n, width) float64."""
        n = None
        for spec in self.specs:
            if spec.name not in columns:
                raise ValueError(f"schema mismatch: missing column {spec.name!r}")
            m = len(columns[spec.name])
            if n is None:
                n = m
            elif m != n:
                raise ValueError("schema mismatch: ragged columns")
        out = np.zeros((n, self.width), dtype=np.float64)
        j = 0
        for spec in self.specs:
            col = columns[spec.name]
            if spec.output_kind == "category":
                vocab = self.vocabularies[spec.name]
                pos = {c: k for k, c in enumerate(vocab)}
                for i, val in enumerate(col):
                    if val is None:
                        out[i, j + len(vocab)] = 1.0
                    elif val in pos:
                        out[i, j + pos[val]] = 1.0
                    # unseen category: all zeros
                j += len(vocab) + 1
            elif spec.output_kind == "boolean":
                vals = np.asarray(col, dtype=np.float64)
                out[:, j] = np.where(np.isnan(vals), 0.0, vals)
                j += 1
            else:
                stats = self.numeric_stats[spec.name]
                vals = np.asarray(col, dtype=np.float64)
                centered = (vals - stats.median) / stats.divisor
                out[:, j] = np.where(np.isnan(vals), 0.0, centered)
                j += 1
        return out

    def to_dict(self) -> dict:
        return {
            "schema_hash": self.schema_hash,
            "specs": [{"name": s.name, "channel": s.channel, "window": s.window,
                       "aggregation": s.aggregation, "output_kind": s.output_kind}
                      for s in self.specs],
            "numeric_stats": {
                name: {"median": st.median, "q1": st.q1, "q3": st.q3}
                for name, st in sorted(self.numeric_stats.items())},
            "vocabularies": {name: list(v)
                             for name, v in sorted(self.vocabularies.items())},
        }

    @classmethod
    def from_dict(cls, payload) -> "FittedPreprocessor":
        specs = tuple(FeatureSpec(**s) for s in payload["specs"])
        stats = {name: NumericStats(d["median"], d["q1"], d["q3"])
                 for name, d in payload["numeric_stats"].items()}
        vocabs = {name: list(v) for name, v in payload["vocabularies"].items()}
        prep = cls(specs, stats, vocabs)
        if prep.schema_hash != payload["schema_hash"]:
            raise ValueError("schema hash mismatch in serialized preprocessor")
        return prep


def fit_preprocessor(specs, columns: dict) -> FittedPreprocessor:
    """Fit medians/quartiles and category vocabularies from training columns."""
    specs = tuple(specs)
    numeric_stats = {}
    vocabularies = {}
    for spec in specs:
        col = columns[spec.name]
        if len(col) == 0:
            raise ValueError("cannot fit a preprocessor on zero rows")
        if spec.output_kind == "category":
            seen = {v for v in col if v is not None}
            vocabularies[spec.name] = sorted(seen)
        elif spec.output_kind == "numeric":
            vals = np.asarray(col, dtype=np.float64)
            vals = vals[~np.isnan(vals)]
            if len(vals) == 0:
                log.warning("feature %s has no observed values; using "
                            "median 0, IQR 1", spec.name)
                numeric_stats[spec.name] = NumericStats(0.0, 0.0, 0.0)
            else:
                q1, med, q3 = tukey_quartiles(vals)
                numeric_stats[spec.name] = NumericStats(med, q1, q3)
    return FittedPreprocessor(specs, numeric_stats, vocabularies)
