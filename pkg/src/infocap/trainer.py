"""Training loop: Adam, stepped learning-rate annealing, teacher forcing.

Every (video, caption) pair is an independent training sample. Losses
are summed within a caption and averaged across the batch by dividing
the accumulated gradients by the batch size, which keeps learning-rate
semantics independent of batch size. Runs are bit-reproducible for a
fixed seed: shuffling and dropout draw from generators derived from it
and nothing else is stochastic.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .captioner import ModelParams, forward_teacher_forced, save_checkpoint
from .corpus import CaptionCorpus, Vocabulary, encode_caption
from .features import VideoFeatures
from .importance import ImportanceTable
from .objective import LossConfig, sequence_loss


class TrainingDiverged(RuntimeError):
    """Raised when the loss goes non-finite; carries the diagnostic dump."""

    def __init__(self, message: str, dump: dict):
        super().__init__(message)
        self.dump = dump


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    anneal_factor: float = 0.8
    anneal_every: int = 30
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 16
    max_epochs: int = 100
    dropout_keep: float = 0.5
    grad_clip: float | None = 5.0
    seed: int = 0
    stop_per_token_ce: float | None = None
    val_every: int = 10

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if not (0 < self.anneal_factor <= 1):
            raise ValueError("anneal_factor must be in (0, 1]")
        if not (0 < self.dropout_keep <= 1):
            raise ValueError("dropout_keep must be in (0, 1]")
        if self.batch_size < 1 or self.anneal_every < 1:
            raise ValueError("batch_size and anneal_every must be positive")


@dataclass
class OptimizerState:
    """Per-parameter Adam moments plus the shared step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "OptimizerState":
        return cls(
            m={name: np.zeros(params[name].shape) for name in params.names()},
            v={name: np.zeros(params[name].shape) for name in params.names()},
        )


def adam_step(params: ModelParams, grads: dict[str, np.ndarray],
              state: OptimizerState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, in place."""
    if set(grads) != set(params.names()):
        raise ValueError("gradient map does not cover the parameter set")
    state.step += 1
    t = state.step
    for name in params.names():
        g = grads[name]
        if g.shape != params[name].shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient for {name}",
                                   {"parameter": name, "step": t})
        state.m[name] = beta1 * state.m[name] + (1 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1 - beta2) * g * g
        m_hat = state.m[name] / (1 - beta1 ** t)
        v_hat = state.v[name] / (1 - beta2 ** t)
        params[name].data -= lr * m_hat / (np.sqrt(v_hat) + eps)


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    """base * factor^floor(epoch / every); non-increasing in epoch."""
    return config.learning_rate * config.anneal_factor ** (epoch // config.anneal_every)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Global-norm clipping in place; returns the pre-clip norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm > 0:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    mean_loss: float
    per_token_ce: float
    wall_time: float
    val_cider: float | None = None

    def to_dict(self) -> dict:
        d = {"epoch": self.epoch, "lr": self.lr, "mean_loss": self.mean_loss,
             "per_token_ce": self.per_token_ce, "wall_time": self.wall_time}
        if self.val_cider is not None:
            d["val_cider"] = self.val_cider
        return d


@dataclass
class TrainResult:
    params: ModelParams
    log: list[EpochRecord] = field(default_factory=list)
    best_val_cider: float | None = None
    best_epoch: int | None = None


def _build_samples(corpus: CaptionCorpus, vocab: Vocabulary) -> list[tuple[str, list[int]]]:
    samples = []
    for video in corpus:
        for caption in video.captions:
            samples.append((video.video_id, encode_caption(caption, vocab)))
    return samples


def train(corpus: CaptionCorpus, features: dict[str, VideoFeatures],
          vocab: Vocabulary, table: ImportanceTable | None,
          params: ModelParams, train_config: TrainConfig,
          loss_config: LossConfig, out_dir: str | Path | None = None,
          validation: tuple[CaptionCorpus, dict[str, VideoFeatures]] | None = None,
          ) -> TrainResult:
    """Optimize ``params`` in place; returns the per-epoch log.

    When ``out_dir`` is given, writes ``train_log.jsonl`` (one record
    per epoch) and ``checkpoint_final`` there, plus ``checkpoint_best``
    whenever validation data is supplied (selected on CIDEr).
    """
    if loss_config.kind == "information_loss" and table is None:
        raise ValueError("information_loss requires an importance table")
    if table is not None and table.vocab_hash and table.vocab_hash != vocab.content_hash():
        raise ValueError("importance table was built against a different vocabulary")
    missing = [v.video_id for v in corpus if v.video_id not in features]
    if missing:
        raise ValueError(f"missing features for videos: {missing}")

    samples = _build_samples(corpus, vocab)
    shuffle_rng = np.random.default_rng([train_config.seed, 0])
    dropout_rng = np.random.default_rng([train_config.seed, 1])

    out_dir = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_fh = open(out_dir / "train_log.jsonl", "w", encoding="utf-8")

    result = TrainResult(params=params)
    manifest = {
        "vocab_hash": vocab.content_hash(),
        "loss_config": asdict(loss_config),
        "train_config": asdict(train_config),
    }
    state = OptimizerState.for_params(params)

    try:
        for epoch in range(train_config.max_epochs):
            t0 = time.perf_counter()
            lr = lr_schedule(epoch, train_config)
            order = shuffle_rng.permutation(len(samples))
            total_loss = 0.0
            total_ce = 0.0
            total_tokens = 0
            for start in range(0, len(order), train_config.batch_size):
                batch = order[start:start + train_config.batch_size]
                params.zero_grads()
                for idx in batch:
                    video_id, target = samples[idx]
                    fwd = forward_teacher_forced(
                        features[video_id], target, params, train=True,
                        rng=dropout_rng, dropout_keep=train_config.dropout_keep)
                    loss = sequence_loss(fwd.logits, target[1:], video_id,
                                         table, loss_config)
                    value = loss.item()
                    if not math.isfinite(value):
                        dump = {"epoch": epoch, "video_id": video_id, "loss": value}
                        if out_dir is not None:
                            save_checkpoint(out_dir / "checkpoint_diverged",
                                            params, {**manifest, "diverged": dump})
                            (out_dir / "diverged.json").write_text(
                                json.dumps(dump, sort_keys=True))
                        raise TrainingDiverged(
                            f"non-finite loss at epoch {epoch} on {video_id!r}", dump)
                    total_loss += value
                    with ad.no_grad():
                        total_ce += sum(
                            ad.nll_from_logits(logit, y).item()
                            for logit, y in zip(fwd.logits, target[1:]))
                    total_tokens += len(target) - 1
                    loss.backward()
                grads = {name: g / len(batch) for name, g in params.grads().items()}
                if train_config.grad_clip is not None:
                    clip_gradients(grads, train_config.grad_clip)
                adam_step(params, grads, state, lr,
                          beta1=train_config.adam_beta1,
                          beta2=train_config.adam_beta2,
                          eps=train_config.adam_eps)

            record = EpochRecord(
                epoch=epoch, lr=lr,
                mean_loss=total_loss / len(samples),
                per_token_ce=total_ce / total_tokens,
                wall_time=time.perf_counter() - t0,
            )

            if validation is not None and (epoch + 1) % train_config.val_every == 0:
                record.val_cider = _validation_cider(params, vocab, validation)
                if result.best_val_cider is None or record.val_cider > result.best_val_cider:
                    result.best_val_cider = record.val_cider
                    result.best_epoch = epoch
                    if out_dir is not None:
                        save_checkpoint(out_dir / "checkpoint_best", params,
                                        {**manifest, "epoch": epoch,
                                         "val_cider": record.val_cider})

            result.log.append(record)
            if log_fh is not None:
                log_fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
                log_fh.flush()

            if (train_config.stop_per_token_ce is not None
                    and record.per_token_ce < train_config.stop_per_token_ce):
                break
    finally:
        if log_fh is not None:
            log_fh.close()

    if out_dir is not None:
        save_checkpoint(out_dir / "checkpoint_final", params,
                        {**manifest, "epoch": len(result.log)})
    return result


def _validation_cider(params: ModelParams, vocab: Vocabulary,
                      validation: tuple[CaptionCorpus, dict[str, VideoFeatures]]) -> float:
    from .decoding import DecodeConfig, generate
    from .metrics import cider

    val_corpus, val_features = validation
    config = DecodeConfig(strategy="greedy")
    candidates = {}
    references = {}
    for video in val_corpus:
        candidates[video.video_id] = generate(val_features[video.video_id],
                                              params, vocab, config)
        references[video.video_id] = video.captions
    score, _ = cider(candidates, references)
    return score
