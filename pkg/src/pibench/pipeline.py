"""Fitted pipeline: preprocessor coupled to a trained model.

The preprocessor is fitted on training rows only and travels with the model
inside one versioned artifact, so inference always applies the exact
transformations the model was trained with. Artifacts are canonical JSON
(sorted keys, floats via repr) and therefore byte-stable across runs.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import models
from .preprocess import FittedPreprocessor, fit_preprocessor

ARTIFACT_VERSION = 1


class ArtifactError(Exception):
    pass


class FittedPipeline:
    def __init__(self, preprocessor: FittedPreprocessor, model, metadata: dict):
        self.preprocessor = preprocessor
        self.model = model
        self.metadata = dict(metadata)

    @property
    def schema_hash(self) -> str:
        return self.preprocessor.schema_hash

    def predict_proba(self, columns: dict) -> np.ndarray:
        X = self.preprocessor.transform(columns)
        return self.model.predict_proba(X)

    def to_dict(self) -> dict:
        return {
            "version": ARTIFACT_VERSION,
            "schema_hash": self.schema_hash,
            "preprocessor": self.preprocessor.to_dict(),
            "model": self.model.to_dict(),
            "metadata": self.metadata,
        }

    def save(self, path):
        payload = json.dumps(self.to_dict(), sort_keys=True,
                             separators=(",", ":"))
        Path(path).write_text(payload + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, payload) -> "FittedPipeline":
        version = payload.get("version")
        if version != ARTIFACT_VERSION:
            raise ArtifactError(f"unsupported artifact version {version!r} "
                                f"(expected {ARTIFACT_VERSION})")
        prep = FittedPreprocessor.from_dict(payload["preprocessor"])
        model = models.model_from_dict(payload["model"])
        pipe = cls(prep, model, payload.get("metadata", {}))
        if payload.get("schema_hash") != pipe.schema_hash:
            raise ArtifactError("schema hash mismatch inside artifact")
        return pipe

    @classmethod
    def load(cls, path) -> "FittedPipeline":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ArtifactError(f"{path}: not a valid pipeline artifact "
                                f"({exc})") from None
        if not isinstance(payload, dict):
            raise ArtifactError(f"{path}: not a valid pipeline artifact")
        try:
            return cls.from_dict(payload)
        except (KeyError, ValueError, TypeError) as exc:
            raise ArtifactError(f"{path}: malformed artifact: {exc}") from None


def fit_pipeline(specs, columns, labels, kind, hp, seed) -> FittedPipeline:
    """Fit the preprocessor on `columns` (training rows only), then train
    the model of `kind` on the transformed matrix."""
    prep = fit_preprocessor(specs, columns)
    X = prep.transform(columns)
    y = np.asarray(labels, dtype=np.float64)
    model = models.train(kind, X, y, hp, seed)
    metadata = {
        "model_kind": kind,
        "hyperparameters": dict(hp),
        "seed": int(seed),
        "trained_rows": int(len(y)),
        "encoded_width": prep.width,
    }
    return FittedPipeline(prep, model, metadata)
