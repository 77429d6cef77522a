"""Training objectives: plain and importance-weighted cross-entropy.

The weighted variant multiplies each position's negative log-likelihood
by 1 + lam * f(word, video), where f comes from the importance table.
Weights are constants with respect to the gradient: nothing
backpropagates into the corpus statistics. With lam = 0 the weighted
loss is the plain one, op for op, so losses and gradients are
bit-identical.

Losses are summed over the positions of a caption (batch averaging is
the trainer's job). <bos> is never a prediction target; <eos> is, with
importance 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import Vocabulary
from .importance import ImportanceTable

LOSS_KINDS = ("cross_entropy", "information_loss")


@dataclass
class LossConfig:
    kind: str = "information_loss"
    lam: float = 0.5
    gamma: float = 2.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"kind must be one of {LOSS_KINDS}, got {self.kind!r}")
        if self.lam < 0 or self.gamma < 0:
            raise ValueError("lam and gamma must be non-negative")


def _check_targets(logits: Sequence[Tensor], targets: Sequence[int]) -> None:
    if len(logits) != len(targets):
        raise ValueError(f"{len(logits)} logit rows for {len(targets)} targets")
    for t, (logit, y) in enumerate(zip(logits, targets)):
        if not (0 <= y < logit.shape[0]):
            raise IndexError(f"target {y} at position {t} out of range "
                             f"for {logit.shape[0]} classes")


def cross_entropy(logits: Sequence[Tensor], targets: Sequence[int]) -> Tensor:
    """Sum over positions of -log softmax(logits_t)[y_t] (log-sum-exp form)."""
    _check_targets(logits, targets)
    terms = [ad.nll_from_logits(logit, y) for logit, y in zip(logits, targets)]
    return terms[0] if len(terms) == 1 else ad.add_n(terms)


def information_loss(logits: Sequence[Tensor], targets: Sequence[int],
                     video_id: str, table: ImportanceTable,
                     lam: float) -> Tensor:
    """Importance-weighted cross-entropy over one caption.

    Each position's nll is scaled by 1 + lam * f(y_t, video); unit
    weights skip the scaling op so lam = 0 rebuilds exactly the plain
    cross-entropy graph.
    """
    _check_targets(logits, targets)
    if lam < 0:
        raise ValueError(f"lam must be non-negative, got {lam}")
    if table.video_ids and video_id not in table.video_ids:
        raise KeyError(f"video {video_id!r} not covered by the importance table")
    terms = []
    for logit, y in zip(logits, targets):
        nll = ad.nll_from_logits(logit, y)
        weight = 1.0 + lam * table.importance(y, video_id)
        terms.append(nll if weight == 1.0 else ad.scale(nll, weight))
    return terms[0] if len(terms) == 1 else ad.add_n(terms)


def sequence_loss(logits: Sequence[Tensor], targets: Sequence[int],
                  video_id: str, table: ImportanceTable | None,
                  config: LossConfig) -> Tensor:
    """Dispatch on the configured loss kind."""
    if config.kind == "cross_entropy":
        return cross_entropy(logits, targets)
    if table is None:
        raise ValueError("information_loss requires an importance table")
    return information_loss(logits, targets, video_id, table, config.lam)


@dataclass
class PositionLoss:
    """One prediction position of the per-caption loss report."""

    position: int
    token_index: int
    token: str | None
    nll: float
    importance: float
    weight: float
    weighted_nll: float


def loss_report(logits: Sequence[Tensor], targets: Sequence[int],
                video_id: str, table: ImportanceTable, lam: float,
                vocab: Vocabulary | None = None) -> list[PositionLoss]:
    """Per-position breakdown of the weighted loss (inspection aid).

    The weighted_nll column sums to the information_loss value on the
    same inputs.
    """
    _check_targets(logits, targets)
    records = []
    with ad.no_grad():
        for t, (logit, y) in enumerate(zip(logits, targets)):
            nll = ad.nll_from_logits(logit, y).item()
            f = table.importance(y, video_id)
            weight = 1.0 + lam * f
            records.append(PositionLoss(
                position=t,
                token_index=y,
                token=vocab.token(y) if vocab is not None else None,
                nll=nll,
                importance=f,
                weight=weight,
                weighted_nll=weight * nll,
            ))
    return records
