"""Loading pretrained word vectors and assembling the embedding matrix."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, UnreadableFileError
from .text import PAD_INDEX, Vocabulary


@dataclass
class PretrainedVectors:
    """Token-to-vector map parsed from the plain-text vector format."""

    vectors: dict[str, np.ndarray] = field(default_factory=dict)
    dim: int = 0

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def get(self, token: str):
        return self.vectors.get(token)

    def __len__(self) -> int:
        return len(self.vectors)


def load_pretrained(path, expected_dim: int) -> PretrainedVectors:
    """Parse ``token v1 ... vd`` lines; duplicates keep the first occurrence.

    Trailing whitespace and CRLF endings are tolerated.  A line whose value
    count differs from ``expected_dim`` raises ``DimensionMismatchError``
    with its line number.
    """
    vectors: dict[str, np.ndarray] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.split()
                if not parts:
                    continue
                token, values = parts[0], parts[1:]
                if len(values) != expected_dim:
                    raise DimensionMismatchError(
                        path, lineno, f"expected {expected_dim} values, found {len(values)}"
                    )
                if token in vectors:
                    continue
                try:
                    vectors[token] = np.array([float(v) for v in values], dtype=np.float32)
                except ValueError as exc:
                    raise DimensionMismatchError(path, lineno, f"non-numeric value: {exc}") from exc
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from exc
    return PretrainedVectors(vectors=vectors, dim=expected_dim)


#: Half-width of the uniform range used for tokens without pretrained vectors.
RANDOM_ROW_LIMIT = 0.1


def build_embedding_matrix(vocab: Vocabulary, pretrained: PretrainedVectors, rng_seed) -> np.ndarray:
    """Assemble the trainable (vocab x dim) float32 matrix.

    Rows for tokens with a pretrained vector copy it unscaled; every other
    row except padding is drawn i.i.d. uniform from
    [-RANDOM_ROW_LIMIT, RANDOM_ROW_LIMIT] using the seeded generator, in
    vocabulary index order.  The padding row is all zeros and must stay
    zero for the lifetime of the model.
    """
    rng = np.random.default_rng(rng_seed)
    matrix = np.zeros((len(vocab), pretrained.dim), dtype=np.float32)
    for idx, token in enumerate(vocab.tokens):
        if idx == PAD_INDEX:
            continue
        vector = pretrained.get(token)
        if vector is not None:
            matrix[idx] = vector
        else:
            matrix[idx] = rng.uniform(-RANDOM_ROW_LIMIT, RANDOM_ROW_LIMIT, pretrained.dim)
    return matrix
