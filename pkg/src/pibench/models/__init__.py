from .logistic import DegenerateLabels, LogisticModel, train_logistic
from .forest import ForestModel, train_forest
from .gbdt import GBDTModel, train_gbdt

MODEL_KINDS = ("logistic", "forest", "gbdt")

_CLASSES = {cls.kind: cls for cls in (LogisticModel, ForestModel, GBDTModel)}
_TRAINERS = {"logistic": train_logistic, "forest": train_forest,
             "gbdt": train_gbdt}


def train(kind, X, y, hp, seed):
    if kind not in _TRAINERS:
        raise ValueError(f"unknown model kind {kind!r}")
    return _TRAINERS[kind](X, y, hp, seed)


def model_from_dict(payload):
    kind = payload.get("kind")
    if kind not in _CLASSES:
        raise ValueError(f"unknown model kind {kind!r} in artifact")
    return _CLASSES[kind].from_dict(payload)
