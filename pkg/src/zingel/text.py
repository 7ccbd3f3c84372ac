"""Tweet text normalization, tokenization, vocabulary and integer encoding.

The normalizer rewrites URLs, mentions, emoticons, hearts, numbers and
hashtags into angle-bracket tag tokens, marks repeated punctuation,
elongated word endings and all-caps words, lowercases everything and emits
space-separated tokens.  Its behaviour is pinned by golden fixtures in the
test suite rather than by any third-party tokenizer.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyCorpusError

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1

#: Tag tokens the normalizer can emit; always present in a vocabulary.
TAG_TOKENS = (
    "<url>",
    "<user>",
    "<smile>",
    "<lolface>",
    "<sadface>",
    "<neutralface>",
    "<heart>",
    "<number>",
    "<hashtag>",
    "<repeat>",
    "<elong>",
    "<allcaps>",
)

#: Bumped whenever normalization behaviour changes; recorded in model
#: artifacts so vocabularies built under older rules are detectable.
PREPROCESS_VERSION = 1

_EYES = r"[8:=;]"
_NOSE = r"['`\-]?"

_URL_RE = re.compile(r"https?://\S+\b|www\.(\w+\.)+\S*")
_URL_REMNANT_RE = re.compile(r"https?://\S*")  # urls with no word characters
_MENTION_RE = re.compile(r"@\w+")
_SMILE_RE = re.compile(rf"{_EYES}{_NOSE}[)d]+|[)d]+{_NOSE}{_EYES}", re.IGNORECASE)
_LOLFACE_RE = re.compile(rf"{_EYES}{_NOSE}p+", re.IGNORECASE)
_SADFACE_RE = re.compile(rf"{_EYES}{_NOSE}\(+|\)+{_NOSE}{_EYES}")
_NEUTRALFACE_RE = re.compile(rf"{_EYES}{_NOSE}[/|l*]")
_NUMBER_RE = re.compile(r"[-+]?[.\d]*[\d]+[:,.\d]*")
_HASHTAG_RE = re.compile(r"#\S+")
_REPEAT_RE = re.compile(r"([!?.]){2,}")
_ELONG_RE = re.compile(r"\b(\S*?)(.)\2{2,}\b")
_ALLCAPS_RE = re.compile(r"([A-Z]){2,}")

# Tag tokens pass through whole; words keep internal apostrophes and
# hyphens; any other non-space character becomes its own token.
_TOKEN_RE = re.compile(r"<[a-z]+>|\w+(?:['’\-]\w+)*|[^\w\s]")


def _expand_hashtag(match: re.Match) -> str:
    body = match.group().lstrip("#")
    if not body:
        return "<hashtag>"
    if body.upper() == body:
        # All-caps bodies stay intact here; the all-caps rule further down
        # the cascade lowercases them and appends its marker.
        return "<hashtag> " + body
    parts = [part for part in re.split(r"(?=[A-Z])", body) if part]
    return "<hashtag> " + " ".join(parts)


def normalize(raw: str) -> str:
    """Run the substitution cascade and return space-joined tokens.

    Rules apply in a fixed order: URLs, slash spacing, @-mentions, emoticon
    classes, ``<3`` hearts, number literals, hashtags (camel-case bodies are
    split on capitals, all-caps bodies gain ``<allcaps>``), repeated
    ``!?.`` runs, elongated word endings, all-caps words, then a final
    lowercasing.  The result is stable under re-normalization.
    """
    text = _URL_RE.sub("<url>", raw)
    text = _URL_REMNANT_RE.sub("<url>", text)
    text = text.replace("/", " / ")
    text = _MENTION_RE.sub("<user>", text)
    text = _SMILE_RE.sub("<smile>", text)
    text = _LOLFACE_RE.sub("<lolface>", text)
    text = _SADFACE_RE.sub("<sadface>", text)
    text = _NEUTRALFACE_RE.sub("<neutralface>", text)
    text = text.replace("<3", "<heart>")
    text = _NUMBER_RE.sub("<number>", text)
    text = _HASHTAG_RE.sub(_expand_hashtag, text)
    text = _REPEAT_RE.sub(r"\1 <repeat>", text)
    text = _ELONG_RE.sub(r"\1\2 <elong>", text)
    text = _ALLCAPS_RE.sub(lambda m: m.group().lower() + " <allcaps>", text)
    return " ".join(_TOKEN_RE.findall(text.lower()))


def tokenize(normalized: str) -> list[str]:
    """Split normalized text into tokens, keeping ``<...>`` tags intact."""
    return _TOKEN_RE.findall(normalized)


class Vocabulary:
    """Immutable token-to-index map with reserved padding and unknown slots.

    Index 0 is ``<pad>``, index 1 is ``<unk>``; the remaining indices are
    assigned in sorted token order so construction is deterministic.
    """

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("vocabulary must start with the pad and unk tokens")
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")
        self._index_to_token = tuple(tokens)
        self._token_to_index = {tok: i for i, tok in enumerate(tokens)}

    @classmethod
    def build(cls, corpus: Iterable[Sequence[str]], pretrained_tokens) -> "Vocabulary":
        """Keep corpus tokens covered by pretrained vectors, plus all tags.

        Tokens without a pretrained vector are left out and fall back to
        ``<unk>`` at encode time.
        """
        total = 0
        kept: set[str] = set()
        for seq in corpus:
            total += len(seq)
            kept.update(tok for tok in seq if tok in pretrained_tokens)
        if total == 0:
            raise EmptyCorpusError("corpus contains no tokens")
        kept.update(TAG_TOKENS)
        kept.discard(PAD_TOKEN)
        kept.discard(UNK_TOKEN)
        return cls([PAD_TOKEN, UNK_TOKEN, *sorted(kept)])

    @property
    def tokens(self) -> tuple[str, ...]:
        return self._index_to_token

    def index_of(self, token: str) -> int:
        return self._token_to_index.get(token, UNK_INDEX)

    def token_at(self, index: int) -> str:
        return self._index_to_token[index]

    def __len__(self) -> int:
        return len(self._index_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_index

    def __eq__(self, other) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self._index_to_token == other._index_to_token

    def __repr__(self) -> str:
        return f"Vocabulary(size={len(self)})"


@dataclass
class EncodedTweet:
    """Fixed-length index vector plus its validity mask.

    ``mask`` is a prefix of ones followed by zeros; ``indices`` holds the
    pad index exactly where the mask is zero.
    """

    indices: np.ndarray  # (n,) int64
    mask: np.ndarray  # (n,) bool
    true_length: int


def encode(tokens: Sequence[str], vocab: Vocabulary, n: int) -> EncodedTweet:
    """Map tokens to indices, truncating the tail or padding up to ``n``."""
    if n < 1:
        raise ValueError("sequence length must be at least 1")
    length = min(len(tokens), n)
    indices = np.full(n, PAD_INDEX, dtype=np.int64)
    for i, tok in enumerate(tokens[:n]):
        indices[i] = vocab.index_of(tok)
    mask = np.zeros(n, dtype=bool)
    mask[:length] = True
    return EncodedTweet(indices=indices, mask=mask, true_length=length)
