"""Multi-reference caption corpus: loading, tokenization, vocabulary.

Special token indices are fixed:

    <pad> = 0   batching filler, never a prediction target
    <bos> = 1   decoder start symbol
    <eos> = 2   decoder stop symbol
    <unk> = 3   replacement for sub-threshold words

Corpus tokens can never collide with the specials because tokenization
strips the angle brackets.
"""

from __future__ import annotations

import hashlib
import json
import math
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")

_PUNCT_TABLE = str.maketrans({ch: " " for ch in string.punctuation})


class CorpusError(ValueError):
    """Malformed caption file or corpus invariant violation."""


def tokenize(raw: str) -> list[str]:
    """Lowercase, turn ASCII punctuation into separators, split on whitespace.

    Deterministic and dependency-free; empty input yields an empty list.
    """
    return raw.lower().translate(_PUNCT_TABLE).split()


@dataclass
class VideoEntry:
    """One video and its reference captions (each a token list)."""

    video_id: str
    captions: list[list[str]]

    @property
    def caption_count(self) -> int:
        return len(self.captions)


@dataclass
class CaptionCorpus:
    """An ordered collection of videos with at least one caption each."""

    videos: list[VideoEntry]
    split_tag: str = "train"

    def __post_init__(self):
        seen: set[str] = set()
        for entry in self.videos:
            if entry.video_id in seen:
                raise CorpusError(f"duplicate video id {entry.video_id!r}")
            seen.add(entry.video_id)
            if not entry.captions:
                raise CorpusError(f"video {entry.video_id!r} has no captions")
            for caption in entry.captions:
                if not caption or any(tok == "" for tok in caption):
                    raise CorpusError(f"video {entry.video_id!r} has an empty caption")

    def __len__(self) -> int:
        return len(self.videos)

    def __iter__(self) -> Iterator[VideoEntry]:
        return iter(self.videos)

    def video_ids(self) -> list[str]:
        return [v.video_id for v in self.videos]

    def get(self, video_id: str) -> VideoEntry:
        for entry in self.videos:
            if entry.video_id == video_id:
                return entry
        raise KeyError(video_id)

    def all_captions(self) -> Iterator[list[str]]:
        for entry in self.videos:
            yield from entry.captions


def load_corpus(path: str | Path, format: str = "tsv",
                split_tag: str = "train") -> CaptionCorpus:
    """Load a caption file.

    ``tsv``: one ``video_id<TAB>caption text`` record per line; lines
    sharing a video id accumulate captions, ordering follows first
    appearance. ``json``: a list of ``{"video_id": ..., "captions":
    [...]}`` records, one per video.

    Raises:
        CorpusError: empty file, unparsable record (with its locator),
            duplicate video id, or a caption that tokenizes to nothing.
    """
    path = Path(path)
    if format == "tsv":
        order: list[str] = []
        captions: dict[str, list[list[str]]] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                if "\t" not in line:
                    raise CorpusError(f"{path}:{lineno}: expected video_id<TAB>caption")
                video_id, text = line.split("\t", 1)
                video_id = video_id.strip()
                if not video_id:
                    raise CorpusError(f"{path}:{lineno}: empty video id")
                tokens = tokenize(text)
                if not tokens:
                    raise CorpusError(f"{path}:{lineno}: caption has no tokens")
                if video_id not in captions:
                    order.append(video_id)
                    captions[video_id] = []
                captions[video_id].append(tokens)
        videos = [VideoEntry(vid, captions[vid]) for vid in order]
    elif format == "json":
        records = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(records, list):
            raise CorpusError(f"{path}: expected a JSON list of video records")
        videos = []
        seen: set[str] = set()
        for i, rec in enumerate(records):
            if not isinstance(rec, dict) or "video_id" not in rec or "captions" not in rec:
                raise CorpusError(f"{path}: record {i}: expected video_id and captions fields")
            video_id = str(rec["video_id"])
            if video_id in seen:
                raise CorpusError(f"{path}: record {i}: duplicate video id {video_id!r}")
            seen.add(video_id)
            caps = [tokenize(c) if isinstance(c, str) else list(c) for c in rec["captions"]]
            if not caps:
                raise CorpusError(f"{path}: record {i}: video {video_id!r} has no captions")
            for c in caps:
                if not c:
                    raise CorpusError(f"{path}: record {i}: empty caption for {video_id!r}")
            videos.append(VideoEntry(video_id, caps))
    else:
        raise ValueError(f"unknown corpus format {format!r}")

    if not videos:
        raise CorpusError(f"{path}: empty corpus")
    return CaptionCorpus(videos, split_tag=split_tag)


def save_corpus(corpus: CaptionCorpus, path: str | Path) -> None:
    """Write a corpus back out in the tsv format."""
    with open(path, "w", encoding="utf-8") as fh:
        for entry in corpus:
            for caption in entry.captions:
                fh.write(f"{entry.video_id}\t{' '.join(caption)}\n")


class Vocabulary:
    """Frequency-thresholded token-to-index bijection with fixed specials."""

    def __init__(self, words: Sequence[str], min_count: int = 1):
        for special in SPECIAL_TOKENS:
            if special in words:
                raise CorpusError(f"corpus token collides with special {special!r}")
        self.tokens: list[str] = list(SPECIAL_TOKENS) + list(words)
        self.index: dict[str, int] = {tok: i for i, tok in enumerate(self.tokens)}
        self.min_count = min_count
        if len(self.index) != len(self.tokens):
            raise CorpusError("vocabulary contains a repeated token")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def token(self, idx: int) -> str:
        return self.tokens[idx]

    def lookup(self, token: str) -> int:
        return self.index.get(token, UNK)

    def is_special(self, idx: int) -> bool:
        return idx < len(SPECIAL_TOKENS)

    def content_hash(self) -> str:
        """Stable fingerprint used to tie tables/checkpoints to this vocab."""
        digest = hashlib.sha256("\n".join(self.tokens).encode("utf-8"))
        return digest.hexdigest()[:16]

    def save(self, path: str | Path) -> None:
        payload = {
            "min_count": self.min_count,
            "specials": {tok: i for i, tok in enumerate(SPECIAL_TOKENS)},
            "tokens": self.tokens[len(SPECIAL_TOKENS):],
            "hash": self.content_hash(),
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        vocab = cls(payload["tokens"], min_count=payload.get("min_count", 1))
        if payload.get("hash") and payload["hash"] != vocab.content_hash():
            raise CorpusError(f"{path}: vocabulary hash mismatch")
        return vocab


def build_vocabulary(corpus: CaptionCorpus, min_count: int = 5) -> Vocabulary:
    """Keep words appearing at least ``min_count`` times in the corpus.

    Kept words are ordered by descending frequency, ties broken
    lexicographically, so two builds over the same corpus produce
    identical index maps.
    """
    counts: Counter[str] = Counter()
    for caption in corpus.all_captions():
        counts.update(caption)
    kept = sorted((tok for tok, c in counts.items() if c >= min_count),
                  key=lambda tok: (-counts[tok], tok))
    return Vocabulary(kept, min_count=min_count)


def encode_caption(caption: Sequence[str], vocab: Vocabulary) -> list[int]:
    """Map tokens to indices, OOV to <unk>, and frame with <bos>/<eos>."""
    return [BOS] + [vocab.lookup(tok) for tok in caption] + [EOS]


def decode_caption(indices: Iterable[int], vocab: Vocabulary) -> list[str]:
    """Inverse of encode_caption modulo UNK: strips framing and padding."""
    out = []
    for idx in indices:
        if idx in (PAD, BOS, EOS):
            continue
        out.append(vocab.token(idx))
    return out


@dataclass
class BiasReport:
    """How much of the corpus the most frequent vocabulary words cover.

    ``share`` is the fraction of all counted token occurrences produced
    by the ``top_words`` most frequent vocabulary entries;
    ``video_occurrence`` maps each word to the number of videos whose
    captions contain it.
    """

    top_fraction: float
    top_words: int
    ranked_vocab_size: int
    covered_tokens: int
    total_tokens: int
    share: float
    video_occurrence: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "top_fraction": self.top_fraction,
            "top_words": self.top_words,
            "ranked_vocab_size": self.ranked_vocab_size,
            "covered_tokens": self.covered_tokens,
            "total_tokens": self.total_tokens,
            "share": self.share,
            "video_occurrence": dict(sorted(self.video_occurrence.items())),
        }


def corpus_bias_report(corpus: CaptionCorpus, vocab: Vocabulary,
                       top_fraction: float) -> BiasReport:
    """Token-count share of the top-fraction of the vocabulary.

    Counting runs over UNK-substituted encoded captions with <bos>/<eos>
    excluded, so every occurrence belongs to some vocabulary entry and
    ``top_fraction=1`` yields share 1.0 exactly. The cut keeps
    ``ceil(top_fraction * R)`` words where R is the number of vocabulary
    entries that actually occur.
    """
    if not (0.0 < top_fraction <= 1.0):
        raise ValueError(f"top_fraction must be in (0, 1], got {top_fraction}")

    freq: Counter[int] = Counter()
    video_presence: Counter[int] = Counter()
    for entry in corpus:
        present: set[int] = set()
        for caption in entry.captions:
            encoded = encode_caption(caption, vocab)[1:-1]
            freq.update(encoded)
            present.update(encoded)
        video_presence.update(present)

    ranked = sorted(freq, key=lambda idx: (-freq[idx], idx))
    total = sum(freq.values())
    top_words = max(1, math.ceil(top_fraction * len(ranked)))
    covered = sum(freq[idx] for idx in ranked[:top_words])
    return BiasReport(
        top_fraction=top_fraction,
        top_words=top_words,
        ranked_vocab_size=len(ranked),
        covered_tokens=covered,
        total_tokens=total,
        share=covered / total if total else 0.0,
        video_occurrence={vocab.token(idx): c for idx, c in video_presence.items()},
    )
