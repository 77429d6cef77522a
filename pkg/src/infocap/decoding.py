"""Caption generation: greedy argmax and length-normalized beam search.

Both strategies run in eval mode (no dropout, no tape). Ties always
resolve to the lowest token index, so beam_width=1 reproduces greedy
output exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .captioner import EncoderOutput, ModelParams, decode_step, encode
from .corpus import BOS, EOS, Vocabulary
from .features import VideoFeatures


@dataclass
class DecodeConfig:
    strategy: str = "greedy"
    beam_width: int = 3
    max_length: int = 20

    def __post_init__(self):
        if self.strategy not in ("greedy", "beam"):
            raise ValueError(f"strategy must be greedy or beam, got {self.strategy!r}")
        if self.beam_width < 1 or self.max_length < 1:
            raise ValueError("beam_width and max_length must be >= 1")


def generate(features: VideoFeatures, params: ModelParams, vocab: Vocabulary,
             config: DecodeConfig) -> list[str]:
    """Generate one caption (token list, <eos> stripped) for a video."""
    with ad.no_grad():
        enc = encode(features, params, train=False)
        if config.strategy == "greedy":
            indices = _greedy(enc, params, config.max_length)
        else:
            indices = _beam(enc, params, config.beam_width, config.max_length)
    return [vocab.token(i) for i in indices]


def _greedy(enc: EncoderOutput, params: ModelParams, max_length: int) -> list[int]:
    h = ad.zeros(params.dims.hidden)
    c = ad.zeros(params.dims.hidden)
    y = BOS
    out: list[int] = []
    for _ in range(max_length):
        step = decode_step(y, h, c, enc, params, train=False)
        y = int(np.argmax(step.logits.data))  # argmax takes the lowest index on ties
        if y == EOS:
            break
        out.append(y)
        h, c = step.h, step.c
    return out


@dataclass
class _Hypothesis:
    tokens: list[int]
    log_prob: float
    steps: int
    h: Tensor | None
    c: Tensor | None
    finished: bool

    @property
    def normalized(self) -> float:
        return self.log_prob / max(1, self.steps)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max()
    return logits - (m + np.log(np.exp(logits - m).sum()))


def _beam(enc: EncoderOutput, params: ModelParams, width: int,
          max_length: int) -> list[int]:
    start = _Hypothesis([], 0.0, 0, ad.zeros(params.dims.hidden),
                        ad.zeros(params.dims.hidden), False)
    beams = [start]
    for _ in range(max_length):
        if all(b.finished for b in beams):
            break
        candidates: list[_Hypothesis] = []
        for hyp in beams:
            if hyp.finished:
                candidates.append(hyp)
                continue
            y_prev = hyp.tokens[-1] if hyp.tokens else BOS
            step = decode_step(y_prev, hyp.h, hyp.c, enc, params, train=False)
            logp = _log_softmax(step.logits.data)
            # Stable sort keeps the lowest index first among equal scores.
            for idx in np.argsort(-logp, kind="stable")[:width]:
                idx = int(idx)
                if idx == EOS:
                    candidates.append(_Hypothesis(
                        hyp.tokens, hyp.log_prob + logp[idx], hyp.steps + 1,
                        None, None, True))
                else:
                    candidates.append(_Hypothesis(
                        hyp.tokens + [idx], hyp.log_prob + logp[idx],
                        hyp.steps + 1, step.h, step.c, False))
        candidates.sort(key=lambda b: -b.log_prob)
        beams = candidates[:width]
    # Hypotheses still running at max_length count as finished.
    best = max(beams, key=lambda b: b.normalized)
    return best.tokens
