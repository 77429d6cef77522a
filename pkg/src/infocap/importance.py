"""Per-word importance statistics driving the weighted training loss.

Three quantities, all counted over UNK-substituted encoded captions of
the training split with the framing <bos>/<eos> tokens excluded:

* relevance   R(y|V) = (captions of V containing y) / (captions of V),
              presence-based: a repeated word counts once per caption.
* content     I(y) = ln(videos total / videos containing y), an
              idf-style rarity measure; zero for words seen everywhere.
* importance  f(y,V) = R(y|V)^gamma * I(y), with 0^0 = 1 so gamma=0
              reduces exactly to I(y).

<pad>/<bos>/<eos> are forced to importance 0: their placement is
structural, not informative.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np

from .corpus import BOS, EOS, PAD, CaptionCorpus, VideoEntry, Vocabulary, encode_caption

_STRUCTURAL = (PAD, BOS, EOS)


class ImportanceError(ValueError):
    """Queried a word with no defined statistics, or a mismatched table."""


def _caption_word_set(caption, vocab: Vocabulary) -> set[int]:
    # Counting domain: encoded (UNK-substituted) tokens, framing stripped.
    return set(encode_caption(caption, vocab)[1:-1])


def relevance(word: int, video: VideoEntry, vocab: Vocabulary) -> float:
    """Fraction of the video's captions that contain the word."""
    if video.caption_count < 1:
        raise ImportanceError(f"video {video.video_id!r} has no captions")
    containing = sum(1 for c in video.captions if word in _caption_word_set(c, vocab))
    return containing / video.caption_count


def information_content(word: int, corpus: CaptionCorpus, vocab: Vocabulary) -> float:
    """ln(|videos| / |videos containing the word|), natural log.

    Raises:
        ImportanceError: the word appears in no video (querying outside
            the training vocabulary's occurrence set).
    """
    containing = sum(
        1 for video in corpus
        if any(word in _caption_word_set(c, vocab) for c in video.captions)
    )
    if containing == 0:
        raise ImportanceError(
            f"undefined information content: word index {word} appears in no video"
        )
    return math.log(len(corpus) / containing)


@dataclass
class ImportanceTable:
    """Materialized statistics for one (corpus, vocabulary, gamma) triple.

    ``info_content`` is dense over the vocabulary with NaN marking words
    that never occur; ``relevance`` is sparse, absent entries mean 0.
    """

    gamma: float
    video_count: int
    info_content: np.ndarray
    relevance: dict[tuple[str, int], float]
    vocab_hash: str = ""
    video_ids: list[str] = field(default_factory=list)

    def relevance_of(self, video_id: str, word: int) -> float:
        return self.relevance.get((video_id, word), 0.0)

    def content_of(self, word: int) -> float:
        value = self.info_content[word]
        if math.isnan(value):
            raise ImportanceError(
                f"undefined information content: word index {word} appears in no video"
            )
        return float(value)

    def importance(self, word: int, video_id: str) -> float:
        """f(word, video) = R^gamma * I, with 0^0 = 1 and specials forced to 0."""
        if word in _STRUCTURAL:
            return 0.0
        r = self.relevance_of(video_id, word)
        if r == 0.0 and self.gamma > 0.0:
            return 0.0
        return (r ** self.gamma) * self.content_of(word)


def importance(word: int, video_id: str, table: ImportanceTable) -> float:
    return table.importance(word, video_id)


def build_importance_table(corpus: CaptionCorpus, vocab: Vocabulary,
                           gamma: float = 2.0) -> ImportanceTable:
    """One deterministic pass over the training split.

    Counts are pure integers until the final ratios, so every entry is
    exactly reproducible by an independent recount.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be non-negative, got {gamma}")
    n_videos = len(corpus)
    videos_containing = np.zeros(len(vocab), dtype=np.int64)
    rel: dict[tuple[str, int], float] = {}

    for video in corpus:
        present: set[int] = set()
        per_word_captions: dict[int, int] = {}
        for caption in video.captions:
            words = _caption_word_set(caption, vocab)
            present.update(words)
            for w in words:
                per_word_captions[w] = per_word_captions.get(w, 0) + 1
        for w in present:
            videos_containing[w] += 1
        for w, n in sorted(per_word_captions.items()):
            rel[(video.video_id, w)] = n / video.caption_count

    # math.log keeps entries bit-comparable with any per-word recount.
    info = np.full(len(vocab), np.nan, dtype=np.float64)
    for w, containing in enumerate(videos_containing):
        if containing > 0:
            info[w] = math.log(n_videos / containing)

    return ImportanceTable(
        gamma=float(gamma),
        video_count=n_videos,
        info_content=info,
        relevance=rel,
        vocab_hash=vocab.content_hash(),
        video_ids=corpus.video_ids(),
    )


def save_importance_table(table: ImportanceTable, path: str | Path,
                          vocab: Vocabulary) -> None:
    """Structured-text export: token -> I and video -> {token -> R}."""
    info = {
        vocab.token(i): float(v)
        for i, v in enumerate(table.info_content)
        if not math.isnan(v)
    }
    rel: dict[str, dict[str, float]] = {}
    for (video_id, word), value in table.relevance.items():
        rel.setdefault(video_id, {})[vocab.token(word)] = value
    payload = {
        "gamma": table.gamma,
        "video_count": table.video_count,
        "vocab_hash": table.vocab_hash,
        "video_ids": table.video_ids,
        "info_content": info,
        "relevance": {vid: dict(sorted(words.items())) for vid, words in sorted(rel.items())},
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n",
                          encoding="utf-8")


def load_importance_table(path: str | Path, vocab: Vocabulary) -> ImportanceTable:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload["vocab_hash"] != vocab.content_hash():
        raise ImportanceError(f"{path}: table was built against a different vocabulary")
    info = np.full(len(vocab), np.nan, dtype=np.float64)
    for token, value in payload["info_content"].items():
        info[vocab.index[token]] = value
    rel = {
        (video_id, vocab.index[token]): value
        for video_id, words in payload["relevance"].items()
        for token, value in words.items()
    }
    return ImportanceTable(
        gamma=float(payload["gamma"]),
        video_count=int(payload["video_count"]),
        info_content=info,
        relevance=rel,
        vocab_hash=payload["vocab_hash"],
        video_ids=list(payload.get("video_ids", [])),
    )
