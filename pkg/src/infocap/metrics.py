"""Caption quality metrics implemented from their standard definitions.

BLEU-4: geometric mean of clipped n-gram precisions with uniform
weights times a brevity penalty (closest reference length, ties to the
shorter). Two small-candidate conventions, both documented in report
headers: a zero-match precision is smoothed to 1/(2 * candidate n-gram
count), and orders for which the candidate has no n-grams at all
(candidate shorter than n) are dropped with the weights renormalized,
so a short candidate that exactly matches a short reference still
scores 1.0.

CIDEr: the plain tf-idf cosine consensus variant. Per order n, captions
become tf-idf vectors over their n-grams (tf is the raw in-caption
count, idf = ln(videos / videos whose references contain the n-gram));
per-video score is the mean over n of 10 times the mean cosine
similarity against each reference. No length-penalty Gaussian.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .captioner import ModelParams
from .corpus import CaptionCorpus, Vocabulary
from .decoding import DecodeConfig, generate
from .features import VideoFeatures

MAX_ORDER = 4

BLEU_VARIANT = ("clipped precisions n=1..4, uniform weights over orders the "
                "candidate supports, smoothing 1/(2*count) for zero matches, "
                "brevity penalty on closest reference length (ties shorter)")
CIDER_VARIANT = ("plain tf-idf cosine consensus, idf = ln(videos/df), "
                 "10x mean cosine per order, mean over orders 1..4, "
                 "no length penalty")


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu4(candidate: Sequence[str], references: Sequence[Sequence[str]]) -> float:
    """Sentence BLEU-4 of a token list against reference token lists.

    An empty candidate scores 0 by convention; references must be
    non-empty.
    """
    if not references:
        raise ValueError("bleu4 requires at least one reference")
    candidate = list(candidate)
    if not candidate:
        return 0.0
    c = len(candidate)
    r = min((len(ref) for ref in references), key=lambda l: (abs(l - c), l))
    brevity = 1.0 if c >= r else math.exp(1.0 - r / c)

    orders = [n for n in range(1, MAX_ORDER + 1) if c - n + 1 >= 1]
    log_sum = 0.0
    for n in orders:
        cand_counts = _ngram_counts(candidate, n)
        total = c - n + 1
        max_ref: Counter = Counter()
        for ref in references:
            for gram, count in _ngram_counts(ref, n).items():
                max_ref[gram] = max(max_ref[gram], count)
        matched = sum(min(count, max_ref[gram]) for gram, count in cand_counts.items())
        precision = matched / total if matched > 0 else 1.0 / (2.0 * total)
        log_sum += math.log(precision) / len(orders)
    return brevity * math.exp(log_sum)


def _tfidf_vector(counts: Counter, idf: Mapping[tuple, float],
                  default_idf: float) -> dict:
    return {gram: count * idf.get(gram, default_idf) for gram, count in counts.items()}


def _cosine(a: Mapping[tuple, float], b: Mapping[tuple, float]) -> float:
    dot = sum(v * b[g] for g, v in a.items() if g in b)
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


def cider(candidates: Mapping[str, Sequence[str]],
          references: Mapping[str, Sequence[Sequence[str]]],
          ) -> tuple[float, dict[str, float]]:
    """Corpus and per-video CIDEr.

    Document frequencies are presence counts over the reference sets of
    all videos in ``references``. Candidate n-grams absent from every
    reference get the maximal idf ln(videos); they never match anything,
    so they only enter through the candidate norm.
    """
    for video_id in candidates:
        if video_id not in references:
            raise KeyError(f"candidate for unknown video {video_id!r}")
    n_videos = len(references)
    df: dict[int, Counter] = {n: Counter() for n in range(1, MAX_ORDER + 1)}
    for refs in references.values():
        for n in range(1, MAX_ORDER + 1):
            seen = set()
            for ref in refs:
                seen.update(_ngram_counts(ref, n))
            df[n].update(seen)
    idf = {
        n: {gram: math.log(n_videos / count) for gram, count in df[n].items()}
        for n in range(1, MAX_ORDER + 1)
    }
    default_idf = math.log(n_videos) if n_videos > 0 else 0.0

    per_video: dict[str, float] = {}
    for video_id, candidate in candidates.items():
        refs = references[video_id]
        order_scores = []
        for n in range(1, MAX_ORDER + 1):
            cand_vec = _tfidf_vector(_ngram_counts(candidate, n), idf[n], default_idf)
            sims = []
            for ref in refs:
                ref_vec = _tfidf_vector(_ngram_counts(ref, n), idf[n], default_idf)
                sims.append(_cosine(cand_vec, ref_vec))
            order_scores.append(10.0 * sum(sims) / len(sims))
        per_video[video_id] = sum(order_scores) / MAX_ORDER
    corpus_score = sum(per_video.values()) / len(per_video) if per_video else 0.0
    return corpus_score, per_video


@dataclass
class VideoEval:
    video_id: str
    generated: list[str]
    references: list[list[str]]
    bleu4: float
    cider: float

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "generated": " ".join(self.generated),
            "references": [" ".join(r) for r in self.references],
            "bleu4": self.bleu4,
            "cider": self.cider,
        }


@dataclass
class EvalReport:
    """Corpus-level scores plus the per-video breakdown.

    ``bleu4`` is the mean of per-video sentence BLEU; ``cider`` is the
    corpus CIDEr over the same candidates.
    """

    bleu4: float
    cider: float
    per_video: list[VideoEval] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "bleu4": self.bleu4,
            "cider": self.cider,
            "bleu_variant": BLEU_VARIANT,
            "cider_variant": CIDER_VARIANT,
            "per_video": [v.to_dict() for v in self.per_video],
        }


def evaluate(params: ModelParams, vocab: Vocabulary, corpus: CaptionCorpus,
             features: Mapping[str, VideoFeatures],
             decode_config: DecodeConfig) -> EvalReport:
    """Generate one caption per video and score both metrics."""
    missing = [v.video_id for v in corpus if v.video_id not in features]
    if missing:
        raise ValueError(f"missing features for videos: {missing}")
    candidates = {
        video.video_id: generate(features[video.video_id], params, vocab, decode_config)
        for video in corpus
    }
    references = {video.video_id: video.captions for video in corpus}
    corpus_cider, per_video_cider = cider(candidates, references)
    per_video = []
    bleu_values = []
    for video in corpus:
        b = bleu4(candidates[video.video_id], video.captions)
        bleu_values.append(b)
        per_video.append(VideoEval(
            video_id=video.video_id,
            generated=candidates[video.video_id],
            references=video.captions,
            bleu4=b,
            cider=per_video_cider[video.video_id],
        ))
    return EvalReport(
        bleu4=sum(bleu_values) / len(bleu_values),
        cider=corpus_cider,
        per_video=per_video,
    )
