"""Zingel: a self-attentive biGRU clickbait scorer for tweets.

The package covers the full lifecycle: text normalization and encoding,
pretrained-vector loading, the numpy network with hand-derived gradients,
Adam training with gradient clipping and validation-based epoch selection,
5-fold ensembling, scoring and evaluation over the challenge JSONL formats.
"""

from .backprop import finite_difference_check, gradcheck_trials, model_backward
from .data import (
    FoldSplit,
    TruthClass,
    TruthRecord,
    Tweet,
    judgments_to_distribution,
    load_instances,
    load_truth,
    split_folds,
)
from .embeddings import PretrainedVectors, build_embedding_matrix, load_pretrained
from .model import (
    DropoutRates,
    ModelConfig,
    ModelParams,
    attention_forward,
    bigru_forward,
    cross_entropy,
    gru_cell,
    init_params,
    model_forward,
    output_forward,
)
from .scoring import (
    Metrics,
    Prediction,
    classification_metrics,
    mse,
    truth_class,
    truth_mean,
    write_predictions,
)
from .serialization import load_model, save_model
from .text import EncodedTweet, Vocabulary, encode, normalize, tokenize
from .training import (
    AdamState,
    EnsembleModel,
    TrainConfig,
    TrainedModel,
    adam_step,
    clip_gradients,
    load_ensemble,
    predict_distribution,
    save_ensemble,
    train_ensemble,
    train_fold,
)

__version__ = "0.1.0"
