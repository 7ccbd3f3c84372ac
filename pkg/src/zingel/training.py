"""Training loop: Adam with gradient clipping, epoch selection, ensembling."""

from __future__ import annotations

import concurrent.futures
import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .backprop import Gradients, add_gradients, model_backward, scale_gradients, zeros_like_gradients
from .data import FoldSplit, TruthRecord, Tweet, judgments_to_distribution, split_folds
from .embeddings import PretrainedVectors, build_embedding_matrix
from .errors import DataError, EmptySetError, ShapeMismatchError, TooFewSamplesError
from .model import DropoutRates, ModelParams, cross_entropy_from_logits, init_params, model_forward
from .scoring import mse, truth_mean
from .serialization import load_model, save_model
from .text import EncodedTweet, PAD_INDEX, Vocabulary, encode, normalize, tokenize

logger = logging.getLogger(__name__)

ENSEMBLE_MANIFEST = "ensemble.json"
THREADS_ENV_VAR = "ZINGEL_THREADS"


@dataclass
class TrainConfig:
    """Hyperparameters; the defaults are the tuned values the model ships with."""

    batch_size: int = 32
    learning_rate: float = 0.005
    clip_threshold: float = 2.0
    max_epochs: int = 20
    dropout_embedding: float = 0.2
    dropout_encoder: float = 0.3
    dropout_attention_out: float = 0.5
    embed_dim: int = 100
    hidden_dim: int = 64
    k_folds: int = 5
    seed: int = 0

    def __post_init__(self):
        for name in ("batch_size", "max_epochs", "embed_dim", "hidden_dim", "k_folds"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0 or self.clip_threshold <= 0:
            raise ValueError("learning_rate and clip_threshold must be positive")
        for name in ("dropout_embedding", "dropout_encoder", "dropout_attention_out"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"{name}={rate} must be in [0, 1)")

    def rates(self) -> DropoutRates:
        return DropoutRates(
            embedding=self.dropout_embedding,
            encoder=self.dropout_encoder,
            attention_out=self.dropout_attention_out,
        )

    def replace(self, **overrides) -> "TrainConfig":
        return dataclasses.replace(self, **overrides)


def parse_config_file(path) -> dict:
    """Read a flat ``key = value`` file into typed TrainConfig overrides."""
    field_types = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    overrides: dict = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                if "=" not in stripped:
                    raise DataError(f"{path}:{lineno}: expected 'key = value'")
                key, _, value = stripped.partition("=")
                key = key.strip()
                value = value.strip()
                if key not in field_types:
                    raise DataError(f"{path}:{lineno}: unknown config key {key!r}")
                kind = field_types[key]
                try:
                    overrides[key] = int(value) if kind in ("int", int) else float(value)
                except ValueError as exc:
                    raise DataError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    return overrides


@dataclass
class AdamState:
    """Per-tensor moment accumulators for the Adam update."""

    first_moment: dict[str, np.ndarray]
    second_moment: dict[str, np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_adam_state(params: ModelParams) -> AdamState:
    first = {name: np.zeros_like(arr) for name, arr in params.named_tensors()}
    second = {name: np.zeros_like(arr) for name, arr in params.named_tensors()}
    return AdamState(first_moment=first, second_moment=second)


def clip_gradients(grads: Gradients, threshold: float) -> Gradients:
    """Scale all gradients down together if their global L2 norm exceeds the threshold."""
    if threshold <= 0:
        raise ValueError("clip threshold must be positive")
    total = 0.0
    for _, arr in grads.named_tensors():
        total += float((arr.astype(np.float64) ** 2).sum())
    norm = np.sqrt(total)
    if norm > threshold:
        scale_gradients(grads, threshold / norm)
    return grads


def adam_step(params: ModelParams, grads: Gradients, state: AdamState, lr: float) -> tuple[ModelParams, AdamState]:
    """Bias-corrected Adam update, applied in place.

    The padding embedding row is forced back to zero afterwards so it never
    accumulates updates.
    """
    state.step_count += 1
    t = state.step_count
    b1, b2, eps = state.beta1, state.beta2, state.epsilon
    for (name, theta), (gname, grad) in zip(params.named_tensors(), grads.named_tensors()):
        if gname != name or grad.shape != theta.shape:
            raise ShapeMismatchError(f"gradient for {name} is missing or misshaped")
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= b1
        m += (1.0 - b1) * grad
        v *= b2
        v += (1.0 - b2) * grad * grad
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        theta -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(theta.dtype)
    params.embedding[PAD_INDEX] = 0.0
    return params, state


@dataclass
class TrainSample:
    """One encoded tweet with its soft target and scalar regression target."""

    id: str
    encoded: EncodedTweet
    target: np.ndarray  # (4,) annotation distribution
    truth_mean: float


def select_best_epoch(curve: Sequence[float]) -> tuple[int, float]:
    """1-based epoch with the lowest validation MSE; ties go to the earlier epoch."""
    if not curve:
        raise EmptySetError("validation curve is empty")
    best = min(range(len(curve)), key=lambda i: (curve[i], i))
    return best + 1, curve[best]


@dataclass
class TrainedModel:
    params: ModelParams
    vocab: Vocabulary
    seq_len: int
    best_epoch: int
    validation_mse: float
    val_curve: list[float] = field(default_factory=list)
    init_seed: int = 0


def _validation_mse(params: ModelParams, val_set: Sequence[TrainSample]) -> float:
    pairs = []
    for sample in val_set:
        p, _, _ = model_forward(sample.encoded, params, mode="infer")
        pairs.append((truth_mean(p), sample.truth_mean))
    return mse(pairs)


def train_fold(
    train_set: Sequence[TrainSample],
    val_set: Sequence[TrainSample],
    config: TrainConfig,
    fold_seed: int,
    *,
    vocab: Vocabulary,
    seq_len: int,
    embedding_init: np.ndarray,
    embedding_seed: int = 0,
) -> TrainedModel:
    """Train one model, keeping the parameter snapshot with the best validation MSE.

    Each epoch reshuffles the training set, walks it in batches (the final
    short batch included), averages per-sample gradients, clips them by
    global norm and applies one Adam step per batch.
    """
    if not train_set or not val_set:
        raise EmptySetError("train and validation sets must both be non-empty")
    root = np.random.SeedSequence([config.seed, fold_seed])
    init_ss, shuffle_ss, dropout_ss = root.spawn(3)
    init_rng = np.random.default_rng(init_ss)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    dropout_rng = np.random.default_rng(dropout_ss)

    params = init_params(embedding_init.copy(), config.hidden_dim, seq_len, init_rng)
    state = init_adam_state(params)
    rates = config.rates()

    best_params = params.copy()
    best_so_far = np.inf
    curve: list[float] = []
    order = np.arange(len(train_set))
    for epoch in range(1, config.max_epochs + 1):
        shuffle_rng.shuffle(order)
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            total = zeros_like_gradients(params)
            for idx in batch:
                sample = train_set[idx]
                _, _, cache = model_forward(
                    sample.encoded, params, mode="train", rates=rates, rng=dropout_rng
                )
                epoch_loss += cross_entropy_from_logits(cache.logits, sample.target)
                add_gradients(total, model_backward(cache, sample.target, params))
            scale_gradients(total, 1.0 / len(batch))
            clip_gradients(total, config.clip_threshold)
            adam_step(params, total, state, config.learning_rate)
        val_mse = _validation_mse(params, val_set)
        curve.append(val_mse)
        if val_mse < best_so_far:  # ties keep the earlier snapshot
            best_so_far = val_mse
            best_params = params.copy()
        logger.info(
            "fold %d epoch %d: train_loss=%.4f val_mse=%.5f",
            fold_seed,
            epoch,
            epoch_loss / len(train_set),
            val_mse,
        )
    best_epoch, best_mse = select_best_epoch(curve)
    return TrainedModel(
        params=best_params,
        vocab=vocab,
        seq_len=seq_len,
        best_epoch=best_epoch,
        validation_mse=best_mse,
        val_curve=curve,
        init_seed=embedding_seed,
    )


@dataclass
class EnsembleModel:
    """Five models sharing one vocabulary and input length."""

    members: list[TrainedModel]
    vocab: Vocabulary
    seq_len: int
    config: TrainConfig
    corpus_fingerprint: str = ""

    def __post_init__(self):
        if len(self.members) != self.config.k_folds:
            raise ValueError(
                f"expected {self.config.k_folds} members, found {len(self.members)}"
            )


def corpus_fingerprint(pairs: Sequence[tuple[Tweet, TruthRecord]]) -> str:
    digest = hashlib.sha256()
    for tweet, record in pairs:
        digest.update(f"{tweet.id}\t{tweet.post_text}\t{record.truth_mean}\n".encode("utf-8"))
    return digest.hexdigest()


def prepare_samples(
    pairs: Sequence[tuple[Tweet, TruthRecord]],
) -> tuple[list[list[str]], int]:
    """Token sequences for every tweet plus the maximum sequence length."""
    token_seqs = [tokenize(normalize(tweet.post_text)) for tweet, _ in pairs]
    seq_len = max((len(seq) for seq in token_seqs), default=0)
    return token_seqs, max(seq_len, 1)


def _member_seed(config_seed: int, fold_index: int) -> int:
    return int(np.random.SeedSequence([config_seed, fold_index]).generate_state(1)[0])


def _worker_count(k: int) -> int:
    raw = os.environ.get(THREADS_ENV_VAR, "").strip()
    if raw:
        try:
            requested = int(raw)
        except ValueError as exc:
            raise DataError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}") from exc
        if requested < 0:
            raise DataError(f"{THREADS_ENV_VAR} must be >= 0")
        if requested:
            return min(requested, k)
    return min(k, os.cpu_count() or 1)


def train_ensemble(
    pairs: Sequence[tuple[Tweet, TruthRecord]],
    pretrained: PretrainedVectors,
    config: TrainConfig,
) -> EnsembleModel:
    """Train k members on disjoint validation folds of one seeded partition.

    The vocabulary and input length come from the full corpus; member i
    validates on fold i and trains on the rest.  Members run independently
    (in parallel when allowed) with per-member seeds derived from
    (config.seed, fold index).
    """
    if len(pairs) < config.k_folds:
        raise TooFewSamplesError(
            f"need at least {config.k_folds} samples, got {len(pairs)}"
        )
    token_seqs, seq_len = prepare_samples(pairs)
    vocab = Vocabulary.build(token_seqs, pretrained.vectors)
    samples = [
        TrainSample(
            id=tweet.id,
            encoded=encode(tokens, vocab, seq_len),
            target=judgments_to_distribution(record.judgments),
            truth_mean=record.truth_mean,
        )
        for (tweet, record), tokens in zip(pairs, token_seqs)
    ]
    by_id = {sample.id: sample for sample in samples}
    split: FoldSplit = split_folds([s.id for s in samples], config.k_folds, config.seed)

    jobs = []
    for fold_index, fold_ids in enumerate(split.folds):
        val_ids = set(fold_ids)
        train_set = [s for s in samples if s.id not in val_ids]
        val_set = [by_id[i] for i in fold_ids]
        emb_seed = _member_seed(config.seed, fold_index)
        embedding = build_embedding_matrix(vocab, pretrained, emb_seed)
        jobs.append((train_set, val_set, fold_index, embedding, emb_seed))

    workers = _worker_count(config.k_folds)
    members: list[TrainedModel]
    if workers <= 1:
        members = [
            train_fold(
                train_set,
                val_set,
                config,
                fold_index,
                vocab=vocab,
                seq_len=seq_len,
                embedding_init=embedding,
                embedding_seed=emb_seed,
            )
            for train_set, val_set, fold_index, embedding, emb_seed in jobs
        ]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(
                    train_fold,
                    train_set,
                    val_set,
                    config,
                    fold_index,
                    vocab=vocab,
                    seq_len=seq_len,
                    embedding_init=embedding,
                    embedding_seed=emb_seed,
                )
                for train_set, val_set, fold_index, embedding, emb_seed in jobs
            ]
            members = [f.result() for f in futures]
    return EnsembleModel(
        members=members,
        vocab=vocab,
        seq_len=seq_len,
        config=config,
        corpus_fingerprint=corpus_fingerprint(pairs),
    )


def predict_distribution(ensemble: EnsembleModel, tweet: Tweet) -> np.ndarray:
    """Arithmetic mean of the members' predicted annotation distributions."""
    p, _, _ = predict_with_attention(ensemble, tweet)
    return p


def predict_with_attention(
    ensemble: EnsembleModel, tweet: Tweet
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Ensemble distribution plus member-averaged attention over the kept tokens."""
    tokens = tokenize(normalize(tweet.post_text))
    encoded = encode(tokens, ensemble.vocab, ensemble.seq_len)
    p_total = np.zeros(4, dtype=np.float64)
    alpha_total = np.zeros(ensemble.seq_len, dtype=np.float64)
    for member in ensemble.members:
        p, alpha, _ = model_forward(encoded, member.params, mode="infer")
        p_total += p
        alpha_total += alpha
    count = len(ensemble.members)
    return p_total / count, alpha_total[: encoded.true_length] / count, tokens[: encoded.true_length]


def save_ensemble(directory, ensemble: EnsembleModel) -> None:
    os.makedirs(directory, exist_ok=True)
    member_dirs = []
    members_info = []
    for i, member in enumerate(ensemble.members):
        name = f"member_{i}"
        save_model(os.path.join(directory, name), member.params, ensemble.vocab, member.init_seed)
        member_dirs.append(name)
        members_info.append(
            {
                "fold": i,
                "best_epoch": member.best_epoch,
                "validation_mse": member.validation_mse,
                "init_seed": member.init_seed,
                "val_curve": list(member.val_curve),
            }
        )
    manifest = {
        "format_version": 1,
        "members": member_dirs,
        "config": dataclasses.asdict(ensemble.config),
        "corpus_fingerprint": ensemble.corpus_fingerprint,
        "seed": ensemble.config.seed,
        "members_info": members_info,
    }
    with open(os.path.join(directory, ENSEMBLE_MANIFEST), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def load_ensemble(directory) -> EnsembleModel:
    try:
        with open(os.path.join(directory, ENSEMBLE_MANIFEST), encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read ensemble manifest in {directory}: {exc}") from exc
    try:
        config = TrainConfig(**manifest["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"ensemble config is invalid: {exc}") from exc
    members = []
    vocab = None
    seq_len = None
    for entry, info in zip(manifest["members"], manifest["members_info"]):
        params, member_vocab, model_manifest = load_model(os.path.join(directory, entry))
        if vocab is None:
            vocab = member_vocab
            seq_len = params.config.seq_len
        elif member_vocab != vocab or params.config.seq_len != seq_len:
            raise DataError("ensemble members disagree on vocabulary or input length")
        members.append(
            TrainedModel(
                params=params,
                vocab=member_vocab,
                seq_len=params.config.seq_len,
                best_epoch=int(info["best_epoch"]),
                validation_mse=float(info["validation_mse"]),
                val_curve=[float(v) for v in info.get("val_curve", [])],
                init_seed=int(info.get("init_seed", model_manifest.get("init_seed", 0))),
            )
        )
    return EnsembleModel(
        members=members,
        vocab=vocab,
        seq_len=seq_len,
        config=config,
        corpus_fingerprint=manifest.get("corpus_fingerprint", ""),
    )
