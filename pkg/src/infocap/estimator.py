"""Scikit-learn style front door for the captioning pipeline.

X is the feature side (VideoFeatures per video), y the caption side
(reference captions per video). ``fit`` builds the vocabulary and the
importance statistics from y, then trains the hierarchical attention
model; ``predict`` decodes captions; ``score`` returns corpus CIDEr of
the predictions against the references.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .captioner import ModelDims, init_params
from .decoding import DecodeConfig, generate
from .importance import build_importance_table
from .metrics import cider
from .objective import LossConfig
from .trainer import TrainConfig, train
from .corpus import build_vocabulary
from .validation import as_feature_map, captions_to_corpus, check_feature_geometry


class HierarchicalAttentionCaptioner(BaseEstimator):
    """Video captioner with object- and frame-level attention.

    Parameters mirror the training/decoding configs one to one; see
    TrainConfig, LossConfig and DecodeConfig. Defaults are desk-scale
    (small model, no dropout) so fitting a toy corpus takes seconds.
    """

    def __init__(self, hidden_size: int = 32, embed_size: int = 32,
                 min_count: int = 1, loss: str = "information_loss",
                 lam: float = 0.5, gamma: float = 2.0,
                 learning_rate: float = 1e-2, anneal_factor: float = 0.8,
                 anneal_every: int = 30, batch_size: int = 16,
                 max_epochs: int = 200, dropout_keep: float = 1.0,
                 grad_clip: float | None = 5.0, strategy: str = "greedy",
                 beam_width: int = 3, max_length: int = 20, seed: int = 0):
        self.hidden_size = hidden_size
        self.embed_size = embed_size
        self.min_count = min_count
        self.loss = loss
        self.lam = lam
        self.gamma = gamma
        self.learning_rate = learning_rate
        self.anneal_factor = anneal_factor
        self.anneal_every = anneal_every
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.dropout_keep = dropout_keep
        self.grad_clip = grad_clip
        self.strategy = strategy
        self.beam_width = beam_width
        self.max_length = max_length
        self.seed = seed

    def _loss_config(self) -> LossConfig:
        return LossConfig(kind=self.loss, lam=self.lam, gamma=self.gamma)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            anneal_factor=self.anneal_factor,
            anneal_every=self.anneal_every,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            dropout_keep=self.dropout_keep,
            grad_clip=self.grad_clip,
            seed=self.seed,
        )

    def _decode_config(self) -> DecodeConfig:
        return DecodeConfig(strategy=self.strategy, beam_width=self.beam_width,
                            max_length=self.max_length)

    def fit(self, X, y):
        """Train on (features, reference captions) pairs.

        Args:
            X: mapping video_id -> VideoFeatures, or a sequence of
                VideoFeatures.
            y: captions per video, aligned with X (mapping or sequence);
                each caption is a raw string or a token list.
        """
        loss_config = self._loss_config()
        video_ids, features = as_feature_map(X)
        d1, d2, d3 = check_feature_geometry(features)
        corpus = captions_to_corpus(y, video_ids)

        self.vocab_ = build_vocabulary(corpus, min_count=self.min_count)
        self.table_ = (build_importance_table(corpus, self.vocab_, gamma=self.gamma)
                       if loss_config.kind == "information_loss" else None)
        self.dims_ = ModelDims(vocab_size=len(self.vocab_), hidden=self.hidden_size,
                               embed=self.embed_size, d1=d1, d2=d2, d3=d3)
        self.params_ = init_params(self.dims_, self.seed)
        result = train(corpus, features, self.vocab_, self.table_, self.params_,
                       self._train_config(), loss_config)
        self.train_log_ = result.log
        return self

    def predict(self, X) -> list[str]:
        """Decode one caption string per video, in X order."""
        check_is_fitted(self, "params_")
        video_ids, features = as_feature_map(X)
        config = self._decode_config()
        return [" ".join(generate(features[vid], self.params_, self.vocab_, config))
                for vid in video_ids]

    def score(self, X, y) -> float:
        """Corpus CIDEr of the predictions against reference captions."""
        check_is_fitted(self, "params_")
        video_ids, features = as_feature_map(X)
        corpus = captions_to_corpus(y, video_ids)
        config = self._decode_config()
        candidates = {vid: generate(features[vid], self.params_, self.vocab_, config)
                      for vid in video_ids}
        references = {video.video_id: video.captions for video in corpus}
        corpus_score, _ = cider(candidates, references)
        return corpus_score
