"""Text cleaning, tokenization, stemming, and fixed-length id encoding.

The pipeline is clean -> tokenize/stop-filter/stem -> vocabulary lookup ->
pad/truncate to a fixed length. Ids 0 and 1 are reserved for padding and
out-of-vocabulary tokens; real tokens start at id 2.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

from . import porter

PAD_ID = 0
OOV_ID = 1
OOV_TOKEN = "<oov>"

_NON_ALNUM = re.compile(r"[^a-z0-9 ]")
_SPACES = re.compile(r" +")


def clean(text: str) -> str:
    """Lowercase, strip everything outside [a-z0-9 ], collapse spaces, trim."""
    text = text.lower()
    text = _NON_ALNUM.sub(" ", text)
    return _SPACES.sub(" ", text).strip()


@lru_cache(maxsize=8)
def load_stopwords(path: str | None = None) -> frozenset[str]:
    """Load the stop-word list, one token per line (default: bundled list)."""
    if path is None:
        raw = resources.files("sidm.data").joinpath("stopwords.txt").read_text("utf-8")
    else:
        raw = Path(path).read_text("utf-8")
    return frozenset(line.strip() for line in raw.splitlines() if line.strip())


def tokenize_stem(text: str, stoplist: frozenset[str]) -> list[str]:
    """Whitespace-split cleaned text, drop stop words, Porter-stem survivors."""
    return [porter.stem(tok) for tok in text.split() if tok not in stoplist]


@dataclass
class Vocabulary:
    """Frequency-capped token -> id map; ids are contiguous starting at 2."""

    token_to_id: dict[str, int]
    max_size: int = 10_000
    _id_to_token: dict[int, str] = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        if len(self.token_to_id) > self.max_size - 2:
            raise ValueError("vocabulary exceeds max_size - 2 entries")
        ids = sorted(self.token_to_id.values())
        if ids and (ids[0] < 2 or ids != list(range(2, 2 + len(ids)))):
            raise ValueError("token ids must be contiguous starting at 2")
        self._id_to_token = {i: t for t, i in self.token_to_id.items()}

    @property
    def size(self) -> int:
        """Embedding-table size: reserved ids plus assigned tokens."""
        return len(self.token_to_id) + 2

    def id_for(self, token: str) -> int:
        return self.token_to_id.get(token, OOV_ID)

    def token_for(self, token_id: int) -> str:
        if token_id == PAD_ID:
            return ""
        return self._id_to_token.get(token_id, OOV_TOKEN)


def build_vocab(corpus: Iterable[list[str]], max_size: int = 10_000) -> Vocabulary:
    """Assign ids 2,3,... by descending frequency, ties lexicographic ascending.

    Must be fed the training split only; anything else leaks test tokens into
    the embedding table.
    """
    counts: Counter[str] = Counter()
    n_docs = 0
    for tokens in corpus:
        counts.update(tokens)
        n_docs += 1
    if n_docs == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = ranked[: max_size - 2]
    return Vocabulary({tok: i + 2 for i, (tok, _) in enumerate(kept)}, max_size=max_size)


def encode_pad(tokens: list[str], vocab: Vocabulary, max_len: int = 100) -> np.ndarray:
    """Map tokens to ids, truncate to the first max_len, post-pad with PAD (0)."""
    ids = np.full(max_len, PAD_ID, dtype=np.int32)
    for i, tok in enumerate(tokens[:max_len]):
        ids[i] = vocab.id_for(tok)
    return ids


@dataclass
class EncodedExample:
    """Fixed-length id vector plus its binary label; the unit fed to training."""

    ids: np.ndarray
    label: int

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int32)
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


def encode_records(
    texts: Iterable[str],
    labels: Iterable[int],
    vocab: Vocabulary,
    stoplist: frozenset[str],
    max_len: int = 100,
) -> tuple[np.ndarray, np.ndarray]:
    """Run the full pipeline over a split; returns (ids[n, max_len], labels[n])."""
    rows = []
    labs = []
    for text, label in zip(texts, labels):
        tokens = tokenize_stem(clean(text), stoplist)
        rows.append(encode_pad(tokens, vocab, max_len))
        labs.append(label)
    if rows:
        return np.stack(rows), np.asarray(labs, dtype=np.int8)
    return np.zeros((0, max_len), dtype=np.int32), np.zeros(0, dtype=np.int8)
