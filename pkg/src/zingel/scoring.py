"""Scores, classes and evaluation metrics derived from annotation distributions."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import TruthClass
from .errors import DuplicateIdError, EmptyInputError, IdMismatchError, MalformedLineError
from .errors import UnreadableFileError


def truth_mean(p: Sequence[float]) -> float:
    """Expected click-baiting level of a distribution over {0, 1/3, 2/3, 1}."""
    return float(p[1]) / 3.0 + 2.0 * float(p[2]) / 3.0 + float(p[3])


def truth_class(p: Sequence[float]) -> TruthClass:
    """Binary class from majority mass: low bins win strictly, ties are clickbait."""
    if float(p[0]) + float(p[1]) > float(p[2]) + float(p[3]):
        return TruthClass.NO_CLICKBAIT
    return TruthClass.CLICKBAIT


@dataclass(frozen=True)
class Prediction:
    id: str
    clickbait_score: float
    predicted_class: TruthClass

    @classmethod
    def from_distribution(cls, tweet_id: str, p: Sequence[float]) -> "Prediction":
        return cls(id=tweet_id, clickbait_score=truth_mean(p), predicted_class=truth_class(p))


@dataclass(frozen=True)
class Metrics:
    mse: float
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int

    def with_mse(self, value: float) -> "Metrics":
        return replace(self, mse=float(value))

    def to_json(self) -> str:
        return json.dumps(
            {
                "mse": self.mse,
                "accuracy": self.accuracy,
                "precision": self.precision,
                "recall": self.recall,
                "f1": self.f1,
            }
        )


def mse(pairs: Iterable[tuple[float, float]]) -> float:
    """Mean squared difference over (predicted, true) pairs."""
    total = 0.0
    count = 0
    for predicted, actual in pairs:
        diff = float(predicted) - float(actual)
        total += diff * diff
        count += 1
    if count == 0:
        raise EmptyInputError("mse needs at least one pair")
    return total / count


def classification_metrics(
    pred: Mapping[str, TruthClass], truth: Mapping[str, TruthClass]
) -> Metrics:
    """Confusion counts and rates with clickbait as the positive class.

    Zero-denominator rates are reported as 0.  The returned ``mse`` field is
    NaN; callers combine it in via :meth:`Metrics.with_mse`.
    """
    if set(pred) != set(truth):
        raise IdMismatchError("prediction and truth id sets differ")
    tp = fp = tn = fn = 0
    for tweet_id, predicted in pred.items():
        actual = truth[tweet_id]
        if predicted == TruthClass.CLICKBAIT:
            if actual == TruthClass.CLICKBAIT:
                tp += 1
            else:
                fp += 1
        else:
            if actual == TruthClass.CLICKBAIT:
                fn += 1
            else:
                tn += 1
    total = tp + fp + tn + fn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    accuracy = (tp + tn) / total if total else 0.0
    return Metrics(
        mse=math.nan,
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
    )


def write_predictions(predictions: Sequence[Prediction], path) -> None:
    """Write one ``{"id": ..., "clickbaitScore": ...}`` object per line.

    Scores are serialized at full round-trip precision and input order is
    preserved.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for pred in predictions:
            fh.write(
                json.dumps(
                    {"id": pred.id, "clickbaitScore": float(pred.clickbait_score)},
                    separators=(",", ":"),
                )
            )
            fh.write("\n")


def read_predictions(path) -> dict[str, float]:
    """Read a predictions file back into an id-to-score map."""
    scores: dict[str, float] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                stripped = line.strip()
                if not stripped:
                    continue
                try:
                    obj = json.loads(stripped)
                except json.JSONDecodeError as exc:
                    raise MalformedLineError(path, lineno, f"invalid JSON ({exc.msg})") from exc
                if "id" not in obj or "clickbaitScore" not in obj:
                    raise MalformedLineError(path, lineno, 'missing "id" or "clickbaitScore"')
                tweet_id = str(obj["id"])
                if tweet_id in scores:
                    raise DuplicateIdError(f"{path}:{lineno}: duplicate id {tweet_id!r}")
                scores[tweet_id] = float(obj["clickbaitScore"])
    except OSError as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from exc
    return scores


#: Scores at or above this value count as clickbait when only a score is
#: available (e.g. evaluating a predictions file, which stores no classes).
SCORE_CLASS_THRESHOLD = 0.5


def class_from_score(score: float) -> TruthClass:
    if score >= SCORE_CLASS_THRESHOLD:
        return TruthClass.CLICKBAIT
    return TruthClass.NO_CLICKBAIT
