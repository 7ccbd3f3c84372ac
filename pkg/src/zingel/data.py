"""Ingestion of the challenge JSONL files and target-distribution handling."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateIdError,
    IdMismatchError,
    JudgmentOffGridError,
    MalformedLineError,
    TooFewSamplesError,
    UnreadableFileError,
)

#: Annotation levels annotators could choose, in increasing click-baiting order.
JUDGMENT_LEVELS = (0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0)

#: Absolute tolerance when matching file values against the level grid
#: (absorbs decimal encodings such as 0.33333334).
GRID_TOLERANCE = 1e-3


class TruthClass(str, enum.Enum):
    CLICKBAIT = "clickbait"
    NO_CLICKBAIT = "no-clickbait"


@dataclass(frozen=True)
class Tweet:
    id: str
    post_text: str


@dataclass(frozen=True)
class TruthRecord:
    id: str
    judgments: tuple[float, ...]  # 5 values snapped onto JUDGMENT_LEVELS
    truth_mean: float
    truth_class: TruthClass
    truth_median: float | None = None
    truth_mode: float | None = None


def _iter_jsonl(path):
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
                if not isinstance(obj, dict):
                    raise MalformedLineError(path, lineno, "expected a JSON object")
                yield lineno, obj
    except OSError as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from exc


def load_instances(path) -> list[Tweet]:
    """Read an instances file: one object per line with "id" and "postText".

    The "postText" array elements are joined with a single space.  Extra
    keys are ignored.
    """
    tweets: list[Tweet] = []
    seen: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        if "id" not in obj or "postText" not in obj:
            raise MalformedLineError(path, lineno, 'missing "id" or "postText"')
        tweet_id = str(obj["id"])
        post_text = obj["postText"]
        if isinstance(post_text, str):
            post_text = [post_text]
        if not isinstance(post_text, list) or not all(isinstance(p, str) for p in post_text):
            raise MalformedLineError(path, lineno, '"postText" must be an array of strings')
        if tweet_id in seen:
            raise DuplicateIdError(f"{path}:{lineno}: duplicate id {tweet_id!r}")
        seen.add(tweet_id)
        tweets.append(Tweet(id=tweet_id, post_text=" ".join(post_text)))
    return tweets


def _snap_judgment(value, path, lineno) -> float:
    for level in JUDGMENT_LEVELS:
        if abs(float(value) - level) <= GRID_TOLERANCE:
            return level
    raise JudgmentOffGridError(
        f"{path}:{lineno}: judgment {value!r} is not within {GRID_TOLERANCE} of any of {{0, 1/3, 2/3, 1}}"
    )


def load_truth(path) -> dict[str, TruthRecord]:
    """Read a truth file keyed by id; judgments are snapped onto the grid."""
    records: dict[str, TruthRecord] = {}
    for lineno, obj in _iter_jsonl(path):
        for key in ("id", "truthJudgments", "truthMean", "truthClass"):
            if key not in obj:
                raise MalformedLineError(path, lineno, f'missing "{key}"')
        record_id = str(obj["id"])
        raw = obj["truthJudgments"]
        if not isinstance(raw, list) or len(raw) != 5:
            raise MalformedLineError(path, lineno, '"truthJudgments" must hold exactly 5 values')
        judgments = tuple(_snap_judgment(v, path, lineno) for v in raw)
        truth_mean = float(obj["truthMean"])
        if abs(truth_mean - sum(judgments) / 5.0) > GRID_TOLERANCE:
            raise MalformedLineError(path, lineno, '"truthMean" inconsistent with the judgments')
        try:
            truth_class = TruthClass(obj["truthClass"])
        except ValueError as exc:
            raise MalformedLineError(path, lineno, f'unknown "truthClass" {obj["truthClass"]!r}') from exc
        if record_id in records:
            raise DuplicateIdError(f"{path}:{lineno}: duplicate id {record_id!r}")
        records[record_id] = TruthRecord(
            id=record_id,
            judgments=judgments,
            truth_mean=truth_mean,
            truth_class=truth_class,
            truth_median=float(obj["truthMedian"]) if "truthMedian" in obj else None,
            truth_mode=float(obj["truthMode"]) if "truthMode" in obj else None,
        )
    return records


def judgments_to_distribution(judgments: Sequence[float]) -> np.ndarray:
    """Turn 5 annotator choices into the 4-bin annotation distribution.

    Bin ``i`` receives the fraction of judgments equal to the i-th level,
    so the result is a simplex vector with entries in multiples of 0.2.
    """
    if len(judgments) != 5:
        raise ValueError("expected exactly 5 judgments")
    counts = np.zeros(len(JUDGMENT_LEVELS), dtype=np.float64)
    for value in judgments:
        for i, level in enumerate(JUDGMENT_LEVELS):
            if abs(float(value) - level) <= GRID_TOLERANCE:
                counts[i] += 1.0
                break
        else:
            raise ValueError(f"judgment {value!r} is not on the level grid")
    return counts / 5.0


@dataclass(frozen=True)
class FoldSplit:
    folds: tuple[tuple[str, ...], ...]
    seed: int


def split_folds(ids: Sequence[str], k: int, seed: int) -> FoldSplit:
    """Shuffle ids with the given seed, then deal them round-robin into k folds."""
    if k < 2:
        raise ValueError("need at least 2 folds")
    if len(ids) < k:
        raise TooFewSamplesError(f"cannot split {len(ids)} ids into {k} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]
    folds = tuple(tuple(shuffled[i::k]) for i in range(k))
    return FoldSplit(folds=folds, seed=seed)


def match_instances_to_truth(
    tweets: Sequence[Tweet], truth: Mapping[str, TruthRecord]
) -> list[tuple[Tweet, TruthRecord]]:
    """Pair every tweet with its truth record, failing on missing ids."""
    pairs = []
    for tweet in tweets:
        record = truth.get(tweet.id)
        if record is None:
            raise IdMismatchError(f"no truth record for instance id {tweet.id!r}")
        pairs.append((tweet, record))
    return pairs
