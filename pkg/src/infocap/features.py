"""Three-stream video features: file format, validation, and synthesis.

A video is represented by aligned streams sharing one frame count n:
object-level regions (n, k, d1), frame-level vectors (n, d2) and
clip-level vectors (n, d3). Real extractor networks are out of scope;
this module loads externally precomputed streams from the tensor
container format and can synthesize learnable stand-ins whose feature
content is correlated with caption words.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import CaptionCorpus, VideoEntry
from .tensor_io import load_tensors, save_tensors

STREAM_NAMES = ("VR", "VF", "VC")


class FeatureError(ValueError):
    """Malformed feature file or stream shape violation."""


@dataclass
class FeatureConfig:
    """Stream geometry. Defaults are the full-scale extractor dims."""

    n_frames: int = 40
    k_objects: int = 16
    d1: int = 2048
    d2: int = 2048
    d3: int = 4096

    def __post_init__(self):
        for name in ("n_frames", "k_objects", "d1", "d2", "d3"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def desk(cls) -> "FeatureConfig":
        """Small dims so gradient checks and overfit runs finish in seconds."""
        return cls(n_frames=8, k_objects=4, d1=32, d2=32, d3=32)


@dataclass
class VideoFeatures:
    """One video's aligned feature streams."""

    video_id: str
    object_feats: np.ndarray
    frame_feats: np.ndarray
    clip_feats: np.ndarray

    def __post_init__(self):
        vr, vf, vc = self.object_feats, self.frame_feats, self.clip_feats
        if vr.ndim != 3 or vf.ndim != 2 or vc.ndim != 2:
            raise FeatureError(
                f"{self.video_id}: expected ranks (3, 2, 2), got "
                f"({vr.ndim}, {vf.ndim}, {vc.ndim})"
            )
        if not (vr.shape[0] == vf.shape[0] == vc.shape[0]):
            raise FeatureError(
                f"{self.video_id}: streams disagree on frame count: "
                f"{vr.shape[0]}, {vf.shape[0]}, {vc.shape[0]}"
            )
        for name, arr in zip(STREAM_NAMES, (vr, vf, vc)):
            if not np.all(np.isfinite(arr)):
                raise FeatureError(f"{self.video_id}: non-finite value in stream {name}")

    @property
    def n_frames(self) -> int:
        return self.object_feats.shape[0]

    def save(self, path: str | Path) -> None:
        save_tensors(path, {
            "VR": self.object_feats,
            "VF": self.frame_feats,
            "VC": self.clip_feats,
        }, meta={"video_id": self.video_id})


def load_features(path: str | Path, config: FeatureConfig) -> VideoFeatures:
    """Load one video's streams and validate them against ``config``.

    Videos shorter than ``config.n_frames`` are padded with all-zero
    frames on the frame axis; longer ones are rejected.
    """
    path = Path(path)
    arrays, meta = load_tensors(path)
    for name in STREAM_NAMES:
        if name not in arrays:
            raise FeatureError(f"{path}: missing stream {name}")
        if not np.all(np.isfinite(arrays[name])):
            raise FeatureError(f"{path}: non-finite value in stream {name}")
    vr, vf, vc = arrays["VR"], arrays["VF"], arrays["VC"]
    if vr.ndim != 3 or vf.ndim != 2 or vc.ndim != 2:
        raise FeatureError(f"{path}: stream ranks must be VR=3, VF=2, VC=2")
    if not (vr.shape[0] == vf.shape[0] == vc.shape[0]):
        raise FeatureError(f"{path}: streams disagree on frame count")
    if vr.shape[1] != config.k_objects:
        raise FeatureError(f"{path}: VR has {vr.shape[1]} regions, expected {config.k_objects}")
    expected = {"VR": config.d1, "VF": config.d2, "VC": config.d3}
    for name, arr in zip(STREAM_NAMES, (vr, vf, vc)):
        if arr.shape[-1] != expected[name]:
            raise FeatureError(
                f"{path}: stream {name} has width {arr.shape[-1]}, expected {expected[name]}"
            )
    n = vr.shape[0]
    if n > config.n_frames:
        raise FeatureError(f"{path}: {n} frames exceeds configured {config.n_frames}")
    if n < config.n_frames:
        pad = config.n_frames - n
        vr = np.concatenate([vr, np.zeros((pad,) + vr.shape[1:])], axis=0)
        vf = np.concatenate([vf, np.zeros((pad, vf.shape[1]))], axis=0)
        vc = np.concatenate([vc, np.zeros((pad, vc.shape[1]))], axis=0)
    video_id = str(meta.get("video_id", path.name))
    return VideoFeatures(video_id, vr, vf, vc)


def save_features_dir(features: dict[str, VideoFeatures], directory: str | Path) -> None:
    """One file per video, filename = video id."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for video_id, feats in features.items():
        feats.save(directory / video_id)


def load_features_dir(directory: str | Path, config: FeatureConfig,
                      video_ids: list[str]) -> dict[str, VideoFeatures]:
    directory = Path(directory)
    out = {}
    for video_id in video_ids:
        path = directory / video_id
        if not path.exists():
            raise FeatureError(f"missing feature file for video {video_id!r}: {path}")
        out[video_id] = load_features(path, config)
    return out


# ---------------------------------------------------------------------------
# Synthesis
# ---------------------------------------------------------------------------

def _stable_ints(text: str) -> tuple[int, int]:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return (int.from_bytes(digest[:8], "little"),
            int.from_bytes(digest[8:16], "little"))


def concept_direction(word: str, dim: int, seed: int) -> np.ndarray:
    """Fixed unit vector assigned to a word; same (word, dim, seed) in,
    same direction out, distinct words get independent draws."""
    h1, h2 = _stable_ints(word)
    rng = np.random.default_rng([seed, dim, h1, h2])
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def synthesize_features(corpus: CaptionCorpus, config: FeatureConfig,
                        seed: int, noise: float = 0.1) -> dict[str, VideoFeatures]:
    """Generate per-video streams whose content encodes the caption words.

    Each distinct word in a video's captions contributes its fixed
    concept direction: into one object slot per frame (round-robin over
    slots), into every frame-level vector, and into the clip-level
    vectors, on top of Gaussian noise. Captions are therefore learnable
    from features, and videos with disjoint caption words receive
    disjoint direction sets.
    """
    out: dict[str, VideoFeatures] = {}
    for video in corpus:
        words = sorted({tok for caption in video.captions for tok in caption})
        h1, h2 = _stable_ints(video.video_id)
        rng = np.random.default_rng([seed, h1, h2])
        n, k = config.n_frames, config.k_objects
        vr = noise * rng.standard_normal((n, k, config.d1))
        vf = noise * rng.standard_normal((n, config.d2))
        vc = noise * rng.standard_normal((n, config.d3))
        for rank, word in enumerate(words):
            d1 = concept_direction(word, config.d1, seed)
            d2 = concept_direction(word, config.d2, seed)
            d3 = concept_direction(word, config.d3, seed)
            for i in range(n):
                vr[i, (rank + i) % k] += d1
            vf += d2 / max(1.0, np.sqrt(len(words)))
            vc += d3 / max(1.0, np.sqrt(len(words)))
        out[video.video_id] = VideoFeatures(video.video_id, vr, vf, vc)
    return out


# Word pools for the toy corpus generator.
_SUBJECTS = ("man", "woman", "dog", "cat", "girl", "boy", "chef", "band",
             "monkey", "player", "baby", "horse")
_VERBS = ("running", "cooking", "dancing", "singing", "jumping", "playing",
          "riding", "walking", "swimming", "drawing", "climbing", "eating")
_PROPS = ("guitar", "ball", "bike", "pan", "piano", "kite", "rope", "drum",
          "stick", "board", "book", "wheel")


def synthetic_corpus(n_videos: int, captions_per_video: int, seed: int,
                     distinct_captions: bool = True,
                     split_tag: str = "train") -> CaptionCorpus:
    """A small corpus of templated captions, deterministic per seed.

    With ``distinct_captions=False`` every reference of a video is the
    same sentence, which makes the corpus exactly memorizable (useful
    for overfit fixtures).
    """
    rng = np.random.default_rng(seed)
    videos = []
    for v in range(n_videos):
        subject = _SUBJECTS[rng.integers(len(_SUBJECTS))]
        verb = _VERBS[rng.integers(len(_VERBS))]
        prop = _PROPS[rng.integers(len(_PROPS))]
        base = f"a {subject} is {verb} with a {prop}"
        variants = [
            base,
            f"the {subject} is {verb} near a {prop}",
            f"a {subject} keeps {verb} by the {prop}",
            f"some {subject} is {verb} holding a {prop}",
        ]
        captions = []
        for c in range(captions_per_video):
            text = base if not distinct_captions else variants[c % len(variants)]
            captions.append(text.split())
        videos.append(VideoEntry(f"vid{v:03d}", captions))
    return CaptionCorpus(videos, split_tag=split_tag)


# Rare, video-specific words planted by the biased corpus generator.
_RARE_WORDS = ("zebra", "violin", "kayak", "origami", "telescope", "anvil",
               "cactus", "jellyfish", "accordion", "lantern", "tricycle",
               "waffle", "compass", "helmet", "magnet", "parrot")


def biased_corpus(n_videos: int, captions_per_video: int, seed: int,
                  split_tag: str = "train") -> tuple[CaptionCorpus, dict[str, str]]:
    """A corpus with the word-frequency imbalance planted on purpose.

    Every caption is mostly a fixed filler phrase shared by all videos
    (the common-word mass) plus one video-specific rare word present in
    every caption of its video. Returns the corpus and the map
    video id -> rare word.
    """
    if n_videos > len(_RARE_WORDS):
        raise ValueError(f"at most {len(_RARE_WORDS)} videos supported")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(_RARE_WORDS))[:n_videos]
    videos = []
    rare_by_video: dict[str, str] = {}
    for v in range(n_videos):
        rare = _RARE_WORDS[order[v]]
        video_id = f"vid{v:03d}"
        rare_by_video[video_id] = rare
        caption = f"a man is doing something with a {rare}".split()
        videos.append(VideoEntry(video_id, [list(caption) for _ in range(captions_per_video)]))
    return CaptionCorpus(videos, split_tag=split_tag), rare_by_video
