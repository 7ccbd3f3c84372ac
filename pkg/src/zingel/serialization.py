"""Model artifact layout: manifest.json + weights.bin + vocab.txt.

``weights.bin`` holds every tensor as little-endian float32, row-major,
concatenated in the fixed order of ``ModelParams.named_tensors``.  The
manifest records the byte offset and length of each tensor so readers can
slice tensors without knowing the architecture.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import DataError
from .model import (
    AttentionParams,
    GruDirection,
    GruParams,
    ModelConfig,
    ModelParams,
    OutputParams,
)
from .text import PREPROCESS_VERSION, Vocabulary

MANIFEST_NAME = "manifest.json"
WEIGHTS_NAME = "weights.bin"
VOCAB_NAME = "vocab.txt"
FORMAT_VERSION = 1

_GATE_FIELDS = (
    "w_update",
    "w_reset",
    "w_cand",
    "u_update",
    "u_reset",
    "u_cand",
    "b_update",
    "b_reset",
    "b_cand",
)


def save_model(directory, params: ModelParams, vocab: Vocabulary, init_seed: int) -> None:
    """Write one model to a directory, creating it if needed."""
    os.makedirs(directory, exist_ok=True)
    table = []
    blobs = []
    offset = 0
    for name, arr in params.named_tensors():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        table.append({"name": name, "shape": list(arr.shape), "offset": offset, "length": len(data)})
        blobs.append(data)
        offset += len(data)
    with open(os.path.join(directory, WEIGHTS_NAME), "wb") as fh:
        fh.write(b"".join(blobs))
    with open(os.path.join(directory, VOCAB_NAME), "w", encoding="utf-8") as fh:
        for token in vocab.tokens:
            fh.write(token)
            fh.write("\n")
    manifest = {
        "format_version": FORMAT_VERSION,
        "d0": params.config.embed_dim,
        "d1": params.config.hidden_dim,
        "n": params.config.seq_len,
        "tensors": table,
        "preprocessing_version": PREPROCESS_VERSION,
        "vocab_file": VOCAB_NAME,
        "init_seed": int(init_seed),
    }
    with open(os.path.join(directory, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def load_model(directory) -> tuple[ModelParams, Vocabulary, dict]:
    """Read a model directory back; returns (params, vocabulary, manifest)."""
    try:
        with open(os.path.join(directory, MANIFEST_NAME), encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model manifest in {directory}: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported model format version {manifest.get('format_version')!r}")
    if manifest.get("preprocessing_version") != PREPROCESS_VERSION:
        raise DataError(
            f"model was built with preprocessing version "
            f"{manifest.get('preprocessing_version')!r}, this build uses {PREPROCESS_VERSION}"
        )
    vocab_path = os.path.join(directory, manifest.get("vocab_file", VOCAB_NAME))
    try:
        with open(vocab_path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh]
        with open(os.path.join(directory, WEIGHTS_NAME), "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read model files in {directory}: {exc}") from exc
    vocab = Vocabulary(tokens)

    tensors: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        if entry["length"] != count * 4:
            raise DataError(f"tensor {entry['name']} length does not match its shape")
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=entry["offset"])
        tensors[entry["name"]] = arr.reshape(shape).astype(np.float32)

    def direction(prefix: str) -> GruDirection:
        try:
            return GruDirection(**{f: tensors[f"{prefix}.{f}"] for f in _GATE_FIELDS})
        except KeyError as exc:
            raise DataError(f"model is missing tensor {exc}") from exc

    try:
        params = ModelParams(
            embedding=tensors["embedding"],
            gru=GruParams(fwd=direction("gru.fwd"), bwd=direction("gru.bwd")),
            attention=AttentionParams(
                proj=tensors["attention.proj"], score=tensors["attention.score"]
            ),
            output=OutputParams(weight=tensors["output.weight"], bias=tensors["output.bias"]),
            config=ModelConfig(
                embed_dim=int(manifest["d0"]),
                hidden_dim=int(manifest["d1"]),
                seq_len=int(manifest["n"]),
            ),
        )
    except KeyError as exc:
        raise DataError(f"model is missing tensor {exc}") from exc
    try:
        params.validate_shapes()
    except Exception as exc:
        raise DataError(f"model tensors are inconsistent: {exc}") from exc
    if params.embedding.shape[0] != len(vocab):
        raise DataError("embedding row count does not match the vocabulary size")
    return params, vocab, manifest
