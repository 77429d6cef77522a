"""Independent brute-force oracles the implementation is checked against.

Everything here is written from the definitions with naive loops and
plain dicts, deliberately sharing no code with the package.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def finite_difference_grad(f, arrays: dict[str, np.ndarray],
                           h: float = 1e-6) -> dict[str, np.ndarray]:
    """Central-difference gradient of a scalar function of named arrays.

    ``f`` is called with no arguments and must read the (mutated)
    arrays; entries are perturbed in place and restored.
    """
    grads = {}
    for name, arr in arrays.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = f()
            flat[i] = orig - h
            down = f()
            flat[i] = orig
            gf[i] = (up - down) / (2.0 * h)
        grads[name] = g
    return grads


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray,
                floor: float = 1e-6) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


# ---------------------------------------------------------------------------
# Importance statistics
# ---------------------------------------------------------------------------

def importance_oracle(corpus, vocab, gamma):
    """Recount R, I and f per (video, word) the slow way.

    Returns (info: dict word->I, rel: dict (video_id, word)->R,
    f: dict (video_id, word)->f). Counting runs over UNK-substituted
    encoded captions without the <bos>/<eos> framing, like the package.
    """
    from infocap.corpus import encode_caption

    def caption_words(caption):
        return set(encode_caption(caption, vocab)[1:-1])

    all_words = set()
    for video in corpus:
        for caption in video.captions:
            all_words |= caption_words(caption)

    info = {}
    for word in all_words:
        containing = 0
        for video in corpus:
            if any(word in caption_words(c) for c in video.captions):
                containing += 1
        info[word] = math.log(len(corpus.videos) / containing)

    rel = {}
    for video in corpus:
        for word in all_words:
            n = sum(1 for c in video.captions if word in caption_words(c))
            if n:
                rel[(video.video_id, word)] = n / len(video.captions)

    f = {}
    for video in corpus:
        for word in all_words:
            r = rel.get((video.video_id, word), 0.0)
            f[(video.video_id, word)] = (r ** gamma) * info[word]
    return info, rel, f


# ---------------------------------------------------------------------------
# BLEU-4
# ---------------------------------------------------------------------------

def _grams(tokens, n):
    out = {}
    for i in range(len(tokens) - n + 1):
        g = tuple(tokens[i:i + n])
        out[g] = out.get(g, 0) + 1
    return out


def bleu4_oracle(candidate, references):
    """Sentence BLEU-4 from first principles, exact rational precisions."""
    if len(candidate) == 0:
        return 0.0
    c = len(candidate)
    best = None
    for ref in references:
        key = (abs(len(ref) - c), len(ref))
        if best is None or key < best:
            best = key
    r = best[1]
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)

    precisions = []
    for n in (1, 2, 3, 4):
        total = c - n + 1
        if total < 1:
            continue
        cand = _grams(candidate, n)
        matched = 0
        for g, count in cand.items():
            best_ref = 0
            for ref in references:
                in_ref = _grams(ref, n).get(g, 0)
                if in_ref > best_ref:
                    best_ref = in_ref
            matched += min(count, best_ref)
        if matched > 0:
            precisions.append(Fraction(matched, total))
        else:
            precisions.append(Fraction(1, 2 * total))
    geo = 1.0
    for p in precisions:
        geo *= float(p) ** (1.0 / len(precisions))
    return bp * geo


# ---------------------------------------------------------------------------
# CIDEr
# ---------------------------------------------------------------------------

def cider_oracle(candidates, references):
    """Plain tf-idf cosine CIDEr, mean of 10x cosine per order 1..4."""
    video_ids = list(references)
    n_videos = len(video_ids)

    def idf(gram, n):
        containing = 0
        for vid in video_ids:
            found = False
            for ref in references[vid]:
                if gram in _grams(ref, n):
                    found = True
            if found:
                containing += 1
        if containing == 0:
            containing = 1
        return math.log(n_videos / containing)

    per_video = {}
    for vid, cand in candidates.items():
        scores = []
        for n in (1, 2, 3, 4):
            cand_grams = _grams(cand, n)
            cand_vec = {g: count * idf(g, n) for g, count in cand_grams.items()}
            cand_norm = math.sqrt(sum(v * v for v in cand_vec.values()))
            sims = []
            for ref in references[vid]:
                ref_grams = _grams(ref, n)
                ref_vec = {g: count * idf(g, n) for g, count in ref_grams.items()}
                ref_norm = math.sqrt(sum(v * v for v in ref_vec.values()))
                dot = 0.0
                for g, v in cand_vec.items():
                    if g in ref_vec:
                        dot += v * ref_vec[g]
                if cand_norm == 0.0 or ref_norm == 0.0:
                    sims.append(0.0)
                else:
                    sims.append(dot / (cand_norm * ref_norm))
            scores.append(10.0 * sum(sims) / len(sims))
        per_video[vid] = sum(scores) / 4.0
    corpus = sum(per_video.values()) / len(per_video) if per_video else 0.0
    return corpus, per_video
