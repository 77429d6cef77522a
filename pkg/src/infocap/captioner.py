"""Hierarchical attention captioner.

Encoder: per frame, additive attention pools the k region vectors into
one frame representation (the pooling query is the previous encoder
state), which feeds a recurrent cell; the n encoder states form the
sequence H_R. Decoder: at each word step, three independent additive
attention heads pool H_R, the frame stream and the clip stream using
the previous decoder state; the contexts are concatenated with the
previous word's embedding and fed to a second recurrent cell, whose
state is projected to vocabulary logits.

Encoder steps and decoder steps are fully decoupled: any (n, T) pair
runs. Dropout (inverted, train-time only) is applied at the input and
the emitted output of both cells; the recurrent path stays clean.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import BOS, EOS
from .features import VideoFeatures
from .tensor_io import load_tensors, save_tensors

_GATES = 4  # input, forget, output, candidate


@dataclass
class ModelDims:
    """Static shape record; everything else is derived from it."""

    vocab_size: int
    hidden: int = 512
    embed: int = 512
    d1: int = 2048
    d2: int = 2048
    d3: int = 4096

    @property
    def att(self) -> int:
        # Attention hidden width; tied to the cell width.
        return self.hidden


def _param_shapes(dims: ModelDims) -> dict[str, tuple[int, ...]]:
    h, e, a = dims.hidden, dims.embed, dims.att
    shapes: dict[str, tuple[int, ...]] = {
        "embed.W": (dims.vocab_size, e),
        "lstm_r.W": (_GATES * h, dims.d1 + h),
        "lstm_r.b": (_GATES * h,),
        # input = [embedding; ctx_HR; ctx_VF; ctx_VC], then the recurrent h
        "lstm_f.W": (_GATES * h, (e + h + dims.d2 + dims.d3) + h),
        "lstm_f.b": (_GATES * h,),
        "out.W": (dims.vocab_size, h),
    }
    for name, width in (("att_obj", dims.d1), ("att_hr", h),
                        ("att_vf", dims.d2), ("att_vc", dims.d3)):
        shapes[f"{name}.w"] = (a,)
        shapes[f"{name}.W"] = (h, a)
        shapes[f"{name}.U"] = (width, a)
        shapes[f"{name}.z"] = (a,)
    return shapes


class ModelParams:
    """All learnable weights, addressable by name."""

    def __init__(self, dims: ModelDims, tensors: dict[str, Tensor]):
        expected = _param_shapes(dims)
        if set(tensors) != set(expected):
            missing = set(expected) - set(tensors)
            extra = set(tensors) - set(expected)
            raise ValueError(f"parameter set mismatch: missing={sorted(missing)}, "
                             f"unexpected={sorted(extra)}")
        for name, shape in expected.items():
            if tensors[name].shape != shape:
                raise ValueError(f"{name}: shape {tensors[name].shape}, expected {shape}")
        self.dims = dims
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def names(self) -> list[str]:
        return sorted(self.tensors)

    def zero_grads(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for name in self.names():
            g = self.tensors[name].grad
            out[name] = np.zeros(self.tensors[name].shape) if g is None else g
        return out

    def as_arrays(self) -> dict[str, np.ndarray]:
        return {name: self.tensors[name].data.copy() for name in self.names()}

    def copy(self) -> "ModelParams":
        return ModelParams(self.dims, {
            name: Tensor(t.data.copy(), requires_grad=True)
            for name, t in self.tensors.items()
        })


def init_params(dims: ModelDims, seed: int) -> ModelParams:
    """Scaled-uniform init for matrices, zero biases, forget bias 1."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, Tensor] = {}
    for name, shape in sorted(_param_shapes(dims).items()):
        if name.endswith(".b") or name.endswith(".z"):
            data = np.zeros(shape)
            if name == "lstm_r.b" or name == "lstm_f.b":
                h = dims.hidden
                data[h:2 * h] = 1.0
        else:
            fan = (shape[0] + shape[1]) if len(shape) == 2 else (shape[0] + 1)
            s = np.sqrt(6.0 / fan)
            data = rng.uniform(-s, s, size=shape)
        tensors[name] = Tensor(data, requires_grad=True)
    return ModelParams(dims, tensors)


def _lstm_step(W: Tensor, b: Tensor, x: Tensor, h: Tensor, c: Tensor,
               hidden: int) -> tuple[Tensor, Tensor]:
    z = ad.add(ad.matmul(W, ad.concat([x, h])), b)
    i = ad.sigmoid(ad.slice1d(z, 0, hidden))
    f = ad.sigmoid(ad.slice1d(z, hidden, 2 * hidden))
    o = ad.sigmoid(ad.slice1d(z, 2 * hidden, 3 * hidden))
    g = ad.tanh(ad.slice1d(z, 3 * hidden, 4 * hidden))
    c_next = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_next = ad.mul(o, ad.tanh(c_next))
    return h_next, c_next


def _attention(h_prev: Tensor, X: Tensor, params: ModelParams,
               head: str) -> tuple[Tensor, Tensor]:
    """Additive attention over the rows of X, queried by h_prev.

    Returns (weights over rows, weighted-sum context).
    """
    query = ad.add(ad.matmul(h_prev, params[f"{head}.W"]), params[f"{head}.z"])
    scores = ad.matmul(ad.tanh(ad.add_rows(ad.matmul(X, params[f"{head}.U"]), query)),
                       params[f"{head}.w"])
    weights = ad.softmax(scores)
    context = ad.matmul(weights, X)
    return weights, context


def object_attention(h_prev: Tensor, regions: Tensor,
                     params: ModelParams) -> tuple[Tensor, Tensor]:
    """Pool the k region vectors of one frame into a single context."""
    return _attention(h_prev, regions, params, "att_obj")


def frame_attention(h_prev: Tensor, X: Tensor, params: ModelParams,
                    head: str) -> tuple[Tensor, Tensor]:
    """Pool a per-frame stream (rows of X) into a single context."""
    return _attention(h_prev, X, params, head)


@dataclass
class EncoderOutput:
    h_r: Tensor                      # (n, hidden) stacked encoder states
    object_attention: np.ndarray     # (n, k) pooling weights, detached
    frame_feats: Tensor              # (n, d2) constant stream
    clip_feats: Tensor               # (n, d3) constant stream


@dataclass
class DecoderStepOutput:
    logits: Tensor                   # (vocab,) pre-softmax scores
    h: Tensor                        # recurrent state for the next step
    c: Tensor
    frame_attention_weights: np.ndarray  # (3, n): H_R, VF, VC heads, detached


def encode(features: VideoFeatures, params: ModelParams,
           train: bool = False, rng: np.random.Generator | None = None,
           dropout_keep: float = 1.0) -> EncoderOutput:
    dims = params.dims
    n = features.n_frames
    drop = train and dropout_keep < 1.0
    h = ad.zeros(dims.hidden)
    c = ad.zeros(dims.hidden)
    emitted: list[Tensor] = []
    alphas = np.zeros((n, features.object_feats.shape[1]))
    for i in range(n):
        regions = Tensor(features.object_feats[i])
        weights, context = object_attention(h, regions, params)
        alphas[i] = weights.data
        x = ad.dropout(context, dropout_keep, rng) if drop else context
        h, c = _lstm_step(params["lstm_r.W"], params["lstm_r.b"], x, h, c, dims.hidden)
        emitted.append(ad.dropout(h, dropout_keep, rng) if drop else h)
    return EncoderOutput(
        h_r=ad.stack_rows(emitted),
        object_attention=alphas,
        frame_feats=Tensor(features.frame_feats),
        clip_feats=Tensor(features.clip_feats),
    )


def decode_step(y_prev: int, h_prev: Tensor, c_prev: Tensor, enc: EncoderOutput,
                params: ModelParams, train: bool = False,
                rng: np.random.Generator | None = None,
                dropout_keep: float = 1.0) -> DecoderStepOutput:
    dims = params.dims
    if not (0 <= y_prev < dims.vocab_size):
        raise IndexError(f"token index {y_prev} out of range for vocab {dims.vocab_size}")
    drop = train and dropout_keep < 1.0
    emb = ad.row(params["embed.W"], y_prev)
    beta_hr, ctx_hr = frame_attention(h_prev, enc.h_r, params, "att_hr")
    beta_vf, ctx_vf = frame_attention(h_prev, enc.frame_feats, params, "att_vf")
    beta_vc, ctx_vc = frame_attention(h_prev, enc.clip_feats, params, "att_vc")
    x = ad.concat([emb, ctx_hr, ctx_vf, ctx_vc])
    if drop:
        x = ad.dropout(x, dropout_keep, rng)
    h, c = _lstm_step(params["lstm_f.W"], params["lstm_f.b"], x, h_prev, c_prev, dims.hidden)
    h_out = ad.dropout(h, dropout_keep, rng) if drop else h
    logits = ad.matmul(params["out.W"], h_out)
    return DecoderStepOutput(
        logits=logits, h=h, c=c,
        frame_attention_weights=np.stack([beta_hr.data, beta_vf.data, beta_vc.data]),
    )


@dataclass
class ForwardResult:
    logits: list[Tensor]             # one (vocab,) tensor per prediction step
    object_attention: np.ndarray     # (n, k)
    frame_attention: np.ndarray      # (T, 3, n)


def forward_teacher_forced(features: VideoFeatures, target: Sequence[int],
                           params: ModelParams, train: bool = False,
                           rng: np.random.Generator | None = None,
                           dropout_keep: float = 1.0) -> ForwardResult:
    """Run the encoder once, then T decoder steps fed with ground truth.

    ``target`` must be a <bos>-framed, <eos>-terminated index sequence;
    step t predicts target[t + 1] from target[t].
    """
    target = list(target)
    if len(target) < 2:
        raise ValueError("target must contain at least <bos> and <eos>")
    if target[0] != BOS or target[-1] != EOS:
        raise ValueError("target must start with <bos> and end with <eos>")
    enc = encode(features, params, train=train, rng=rng, dropout_keep=dropout_keep)
    h = ad.zeros(params.dims.hidden)
    c = ad.zeros(params.dims.hidden)
    logits: list[Tensor] = []
    betas = []
    for t in range(len(target) - 1):
        step = decode_step(target[t], h, c, enc, params, train=train,
                           rng=rng, dropout_keep=dropout_keep)
        logits.append(step.logits)
        betas.append(step.frame_attention_weights)
        h, c = step.h, step.c
    return ForwardResult(
        logits=logits,
        object_attention=enc.object_attention,
        frame_attention=np.stack(betas),
    )


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path: str | Path, params: ModelParams,
                    manifest: dict | None = None) -> None:
    """Serialize all named parameters plus a manifest."""
    meta = {"format": "infocap-checkpoint", "dims": asdict(params.dims)}
    meta.update(manifest or {})
    save_tensors(path, params.as_arrays(), meta=meta)


def load_checkpoint(path: str | Path) -> tuple[ModelParams, dict]:
    arrays, meta = load_tensors(path)
    if meta.get("format") != "infocap-checkpoint":
        raise ValueError(f"{path}: not a checkpoint file")
    dims = ModelDims(**meta["dims"])
    tensors = {name: Tensor(arr, requires_grad=True) for name, arr in arrays.items()}
    return ModelParams(dims, tensors), meta
