"""Input validation helpers for the estimator API."""

from __future__ import annotations

from typing import Mapping, Sequence

from .corpus import CaptionCorpus, VideoEntry, tokenize
from .features import VideoFeatures


def as_feature_map(X) -> tuple[list[str], dict[str, VideoFeatures]]:
    """Accept a mapping id -> VideoFeatures or a sequence of VideoFeatures.

    Returns the video ids in input order plus the id-keyed map.
    """
    if isinstance(X, Mapping):
        items = list(X.items())
    elif isinstance(X, Sequence):
        items = [(feats.video_id, feats) for feats in X]
    else:
        raise TypeError(
            "X must be a mapping video_id -> VideoFeatures or a sequence of "
            f"VideoFeatures, got {type(X).__name__}")
    ids = []
    mapping = {}
    for video_id, feats in items:
        if not isinstance(feats, VideoFeatures):
            raise TypeError(f"expected VideoFeatures for {video_id!r}, "
                            f"got {type(feats).__name__}")
        if video_id in mapping:
            raise ValueError(f"duplicate video id {video_id!r}")
        ids.append(video_id)
        mapping[video_id] = feats
    if not ids:
        raise ValueError("X is empty")
    return ids, mapping


def check_feature_geometry(features: Mapping[str, VideoFeatures]) -> tuple[int, int, int]:
    """All streams must agree on widths; returns (d1, d2, d3)."""
    widths = None
    for video_id, feats in features.items():
        w = (feats.object_feats.shape[2], feats.frame_feats.shape[1],
             feats.clip_feats.shape[1])
        if widths is None:
            widths = w
        elif w != widths:
            raise ValueError(f"feature widths differ: {video_id!r} has {w}, "
                             f"expected {widths}")
    return widths


def captions_to_corpus(y, video_ids: Sequence[str]) -> CaptionCorpus:
    """Align reference captions with video ids and tokenize raw strings.

    ``y`` is either a mapping video_id -> captions or a sequence aligned
    with ``video_ids``; each caption may be a raw string or a token list.
    """
    if isinstance(y, Mapping):
        missing = [vid for vid in video_ids if vid not in y]
        if missing:
            raise ValueError(f"captions missing for videos: {missing}")
        per_video = [y[vid] for vid in video_ids]
    else:
        per_video = list(y)
        if len(per_video) != len(video_ids):
            raise ValueError(f"{len(per_video)} caption groups for "
                             f"{len(video_ids)} videos")
    videos = []
    for video_id, captions in zip(video_ids, per_video):
        if isinstance(captions, str):
            captions = [captions]
        tokenized = [tokenize(c) if isinstance(c, str) else list(c) for c in captions]
        videos.append(VideoEntry(video_id, tokenized))
    return CaptionCorpus(videos)
