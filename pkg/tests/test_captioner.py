import numpy as np
import pytest

from infocap import autodiff as ad
from infocap.autodiff import Tensor
from infocap.captioner import (ModelDims, ModelParams, _lstm_step,
                               decode_step, encode, forward_teacher_forced,
                               frame_attention, init_params, load_checkpoint,
                               object_attention, save_checkpoint)
from infocap.corpus import BOS, EOS
from infocap.features import VideoFeatures
from infocap.objective import LossConfig, cross_entropy, sequence_loss

from oracles import finite_difference_grad, max_rel_err

DIMS = ModelDims(vocab_size=11, hidden=8, embed=8, d1=4, d2=4, d3=4)


def make_features(dims=DIMS, n=3, k=2, seed=0, video_id="v"):
    rng = np.random.default_rng(seed)
    return VideoFeatures(video_id,
                         rng.standard_normal((n, k, dims.d1)),
                         rng.standard_normal((n, dims.d2)),
                         rng.standard_normal((n, dims.d3)))


def zero_params(dims=DIMS):
    params = init_params(dims, seed=0)
    for name in params.names():
        params[name].data[:] = 0.0
    return params


# --------------------------------------------------------------------------
# parameters
# --------------------------------------------------------------------------

def test_init_forget_bias_one_other_biases_zero():
    params = init_params(DIMS, seed=1)
    h = DIMS.hidden
    for name in ("lstm_r.b", "lstm_f.b"):
        b = params[name].data
        assert np.all(b[h:2 * h] == 1.0)
        assert np.all(b[:h] == 0.0) and np.all(b[2 * h:] == 0.0)


def test_init_deterministic_and_bounded():
    a = init_params(DIMS, seed=3)
    b = init_params(DIMS, seed=3)
    for name in a.names():
        assert np.array_equal(a[name].data, b[name].data)
    W = a["out.W"].data
    s = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
    assert np.all(np.abs(W) <= s)


def test_params_reject_bad_shapes():
    params = init_params(DIMS, seed=0)
    tensors = params.tensors.copy()
    tensors["out.W"] = Tensor(np.zeros((2, 2)), requires_grad=True)
    with pytest.raises(ValueError, match="out.W"):
        ModelParams(DIMS, tensors)
    del tensors["out.W"]
    with pytest.raises(ValueError, match="missing"):
        ModelParams(DIMS, tensors)


def test_checkpoint_round_trip(tmp_path):
    params = init_params(DIMS, seed=7)
    path = tmp_path / "ckpt"
    save_checkpoint(path, params, {"vocab_hash": "abc123"})
    loaded, meta = load_checkpoint(path)
    assert meta["vocab_hash"] == "abc123"
    assert loaded.dims == DIMS
    for name in params.names():
        assert np.array_equal(loaded[name].data, params[name].data)


# --------------------------------------------------------------------------
# attention
# --------------------------------------------------------------------------

def test_object_attention_single_region():
    params = init_params(DIMS, seed=0)
    region = np.random.default_rng(1).standard_normal((1, DIMS.d1))
    weights, context = object_attention(ad.zeros(DIMS.hidden), Tensor(region), params)
    assert weights.data.tolist() == [1.0]
    assert np.array_equal(context.data, region[0])


def test_object_attention_identical_regions_uniform():
    params = init_params(DIMS, seed=0)
    row = np.random.default_rng(2).standard_normal(DIMS.d1)
    regions = Tensor(np.tile(row, (5, 1)))
    weights, _ = object_attention(ad.zeros(DIMS.hidden), regions, params)
    assert np.allclose(weights.data, 0.2, atol=1e-15)


def test_object_attention_zero_score_vector_forces_uniform():
    params = init_params(DIMS, seed=0)
    params["att_obj.w"].data[:] = 0.0
    regions = Tensor(np.random.default_rng(3).standard_normal((4, DIMS.d1)))
    h = Tensor(np.random.default_rng(4).standard_normal(DIMS.hidden))
    weights, _ = object_attention(h, regions, params)
    assert np.allclose(weights.data, 0.25, atol=1e-15)


def test_frame_attention_single_row():
    params = init_params(DIMS, seed=0)
    X = Tensor(np.random.default_rng(5).standard_normal((1, DIMS.hidden)))
    weights, _ = frame_attention(ad.zeros(DIMS.hidden), X, params, "att_hr")
    assert weights.data.tolist() == [1.0]


def test_frame_attention_identical_rows_uniform():
    params = init_params(DIMS, seed=0)
    row = np.random.default_rng(6).standard_normal(DIMS.d2)
    X = Tensor(np.tile(row, (6, 1)))
    weights, _ = frame_attention(ad.zeros(DIMS.hidden), X, params, "att_vf")
    assert np.allclose(weights.data, 1 / 6, atol=1e-15)


def test_frame_attention_gradients_vs_finite_differences():
    params = init_params(DIMS, seed=8)
    rng = np.random.default_rng(9)
    X_data = rng.standard_normal((5, DIMS.d2))
    h_data = rng.standard_normal(DIMS.hidden)
    proj = rng.standard_normal(DIMS.d2)
    head = ["att_vf.w", "att_vf.W", "att_vf.U", "att_vf.z"]

    def loss_value():
        with ad.no_grad():
            _, ctx = frame_attention(Tensor(h_data), Tensor(X_data), params, "att_vf")
            return float(ctx.data @ proj)

    _, ctx = frame_attention(Tensor(h_data), Tensor(X_data), params, "att_vf")
    ad.sum_all(ad.mul(ctx, Tensor(proj))).backward()
    arrays = {name: params[name].data for name in head}
    numeric = finite_difference_grad(loss_value, arrays, h=1e-5)
    for name in head:
        assert max_rel_err(params[name].grad, numeric[name]) < 1e-4, name


# --------------------------------------------------------------------------
# encoder
# --------------------------------------------------------------------------

def test_encode_all_zero_params_and_inputs_gives_zero_states():
    params = zero_params()
    feats = VideoFeatures("v", np.zeros((3, 2, DIMS.d1)),
                          np.zeros((3, DIMS.d2)), np.zeros((3, DIMS.d3)))
    enc = encode(feats, params)
    assert np.all(enc.h_r.data == 0.0)
    assert np.allclose(enc.object_attention, 0.5)


def test_encode_single_frame_equals_one_lstm_step():
    params = init_params(DIMS, seed=10)
    feats = make_features(n=1, k=2, seed=11)
    enc = encode(feats, params)

    h0 = ad.zeros(DIMS.hidden)
    _, context = object_attention(h0, Tensor(feats.object_feats[0]), params)
    h1, _ = _lstm_step(params["lstm_r.W"], params["lstm_r.b"], context,
                       h0, ad.zeros(DIMS.hidden), DIMS.hidden)
    assert np.array_equal(enc.h_r.data[0], h1.data)


def test_encode_region_permutation_invariance():
    params = init_params(DIMS, seed=12)
    feats = make_features(n=4, k=4, seed=13)
    enc = encode(feats, params)

    rng = np.random.default_rng(14)
    shuffled = feats.object_feats.copy()
    for i in range(shuffled.shape[0]):
        shuffled[i] = shuffled[i][rng.permutation(shuffled.shape[1])]
    enc_perm = encode(VideoFeatures("v", shuffled, feats.frame_feats,
                                    feats.clip_feats), params)
    assert np.max(np.abs(enc.h_r.data - enc_perm.h_r.data)) <= 1e-12


# --------------------------------------------------------------------------
# decoder
# --------------------------------------------------------------------------

def test_decode_step_zero_params_give_uniform_distribution():
    params = zero_params()
    feats = VideoFeatures("v", np.zeros((3, 2, DIMS.d1)),
                          np.zeros((3, DIMS.d2)), np.zeros((3, DIMS.d3)))
    enc = encode(feats, params)
    step = decode_step(BOS, ad.zeros(DIMS.hidden), ad.zeros(DIMS.hidden),
                       enc, params)
    assert np.all(step.logits.data == 0.0)
    probs = ad.softmax(step.logits).data
    assert np.allclose(probs, 1 / DIMS.vocab_size, atol=1e-15)


def test_decoder_steps_decoupled_from_encoder_length():
    params = init_params(DIMS, seed=15)
    feats = make_features(n=8, k=2, seed=16)
    target = [BOS, 5, 6, EOS]   # 3 prediction steps over an n=8 encoding
    fwd = forward_teacher_forced(feats, target, params)
    assert len(fwd.logits) == 3
    assert fwd.frame_attention.shape == (3, 3, 8)


def test_decode_step_rejects_out_of_range_token():
    params = init_params(DIMS, seed=0)
    enc = encode(make_features(), params)
    with pytest.raises(IndexError):
        decode_step(DIMS.vocab_size, ad.zeros(DIMS.hidden),
                    ad.zeros(DIMS.hidden), enc, params)


def test_eval_mode_deterministic():
    params = init_params(DIMS, seed=17)
    feats = make_features(seed=18)
    target = [BOS, 4, 7, 5, EOS]
    a = forward_teacher_forced(feats, target, params)
    b = forward_teacher_forced(feats, target, params)
    for la, lb in zip(a.logits, b.logits):
        assert np.array_equal(la.data, lb.data)


def test_forward_shortest_caption_is_one_step():
    params = init_params(DIMS, seed=19)
    fwd = forward_teacher_forced(make_features(), [BOS, EOS], params)
    assert len(fwd.logits) == 1


def test_forward_rejects_unframed_target():
    params = init_params(DIMS, seed=0)
    feats = make_features()
    with pytest.raises(ValueError):
        forward_teacher_forced(feats, [5, 6], params)
    with pytest.raises(ValueError):
        forward_teacher_forced(feats, [BOS], params)


def test_attention_traces_are_simplex_points():
    params = init_params(DIMS, seed=20)
    feats = make_features(n=5, k=3, seed=21)
    fwd = forward_teacher_forced(feats, [BOS, 4, 9, EOS], params)
    assert np.max(np.abs(fwd.object_attention.sum(axis=1) - 1.0)) < 1e-12
    assert np.min(fwd.object_attention) >= 0.0
    assert np.max(np.abs(fwd.frame_attention.sum(axis=2) - 1.0)) < 1e-12
    assert np.min(fwd.frame_attention) >= 0.0


def test_dropout_draws_only_in_train_mode():
    params = init_params(DIMS, seed=22)
    feats = make_features(seed=23)
    target = [BOS, 4, 5, EOS]
    rng1 = np.random.default_rng(0)
    a = forward_teacher_forced(feats, target, params, train=True,
                               rng=rng1, dropout_keep=0.5)
    rng2 = np.random.default_rng(0)
    b = forward_teacher_forced(feats, target, params, train=True,
                               rng=rng2, dropout_keep=0.5)
    for la, lb in zip(a.logits, b.logits):
        assert np.array_equal(la.data, lb.data)
    # same rng state but eval mode: rng untouched, outputs differ from train
    c = forward_teacher_forced(feats, target, params, train=False,
                               rng=np.random.default_rng(0), dropout_keep=0.5)
    assert not np.array_equal(a.logits[0].data, c.logits[0].data)


# --------------------------------------------------------------------------
# end-to-end gradient check (small dims; spec dims run in acceptance)
# --------------------------------------------------------------------------

def test_full_model_gradient_matches_finite_differences():
    dims = ModelDims(vocab_size=7, hidden=4, embed=4, d1=3, d2=3, d3=3)
    params = init_params(dims, seed=24)
    feats = VideoFeatures("v",
                          np.random.default_rng(25).standard_normal((2, 2, 3)),
                          np.random.default_rng(26).standard_normal((2, 3)),
                          np.random.default_rng(27).standard_normal((2, 3)))
    target = [BOS, 4, 5, EOS]

    def loss_value():
        with ad.no_grad():
            fwd = forward_teacher_forced(feats, target, params)
            return cross_entropy(fwd.logits, target[1:]).item()

    fwd = forward_teacher_forced(feats, target, params)
    cross_entropy(fwd.logits, target[1:]).backward()
    arrays = {name: params[name].data for name in params.names()}
    numeric = finite_difference_grad(loss_value, arrays, h=1e-5)
    for name in params.names():
        grad = params[name].grad
        assert grad is not None, name
        err = max_rel_err(grad, numeric[name])
        assert err < 1e-4, f"{name}: rel err {err}"
