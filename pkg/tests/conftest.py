import json
import os

import numpy as np
import pytest

from zingel.data import JUDGMENT_LEVELS
from zingel.embeddings import PretrainedVectors, build_embedding_matrix
from zingel.scoring import truth_mean
from zingel.text import Vocabulary, encode
from zingel.training import TrainSample

GOLDEN_PATH = os.path.join(os.path.dirname(__file__), "data", "preprocess_golden.tsv")


def load_golden_fixtures():
    fixtures = []
    with open(GOLDEN_PATH, encoding="utf-8") as fh:
        for line in fh:
            raw, _, expected = line.rstrip("\n").partition("\t")
            fixtures.append((raw, expected))
    return fixtures


def majority_class(judgments):
    """Independent class oracle: whichever half of the scale holds more of
    the five annotators wins; the low half winning means no-clickbait."""
    low = sum(1 for j in judgments if j in (JUDGMENT_LEVELS[0], JUDGMENT_LEVELS[1]))
    return "no-clickbait" if low > 5 - low else "clickbait"


def write_instances(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for tweet_id, text in rows:
            fh.write(json.dumps({"id": tweet_id, "postText": [text]}) + "\n")
    return path


def write_truth(path, rows):
    """rows: (id, judgments) pairs; derived fields are computed consistently."""
    with open(path, "w", encoding="utf-8") as fh:
        for tweet_id, judgments in rows:
            mean = sum(judgments) / len(judgments)
            fh.write(
                json.dumps(
                    {
                        "id": tweet_id,
                        "truthJudgments": list(judgments),
                        "truthMean": mean,
                        "truthMedian": sorted(judgments)[2],
                        "truthMode": max(set(judgments), key=judgments.count),
                        "truthClass": majority_class(judgments),
                    }
                )
                + "\n"
            )
    return path


def write_embeddings(path, tokens, dim, seed=0):
    rng = np.random.default_rng(seed)
    with open(path, "w", encoding="utf-8") as fh:
        for token in tokens:
            values = " ".join(f"{v:.5f}" for v in rng.uniform(-0.4, 0.4, dim))
            fh.write(f"{token} {values}\n")
    return path


def synthetic_one_hot_corpus(count=32, seed=5, embed_dim=16):
    """Synthetic memorization task: a class marker token plus random filler."""
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(20)]
    markers = ["alpha", "beta", "gamma", "delta"]
    seqs, targets = [], []
    for i in range(count):
        cls = i % 4
        body = [markers[cls]] + list(rng.choice(words, size=rng.integers(2, 6)))
        seqs.append(body)
        t = np.zeros(4)
        t[cls] = 1.0
        targets.append(t)
    vocab = Vocabulary.build(seqs, {w for s in seqs for w in s})
    seq_len = max(len(s) for s in seqs)
    samples = [
        TrainSample(
            id=str(i),
            encoded=encode(s, vocab, seq_len),
            target=t,
            truth_mean=truth_mean(t),
        )
        for i, (s, t) in enumerate(zip(seqs, targets))
    ]
    embedding = build_embedding_matrix(vocab, PretrainedVectors({}, embed_dim), seed)
    return samples, vocab, seq_len, embedding


@pytest.fixture
def golden_fixtures():
    return load_golden_fixtures()
