import json
import string
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from infocap.corpus import (BOS, EOS, PAD, UNK, CaptionCorpus, CorpusError,
                            VideoEntry, Vocabulary, build_vocabulary,
                            corpus_bias_report, decode_caption, encode_caption,
                            load_corpus, save_corpus, tokenize)


# --------------------------------------------------------------------------
# tokenize
# --------------------------------------------------------------------------

def test_tokenize_lowercases_and_strips_punctuation():
    assert tokenize("A man is Riding.") == ["a", "man", "is", "riding"]


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_punctuation_as_separator():
    assert tokenize("dog,dog dog") == ["dog", "dog", "dog"]


@given(st.text(max_size=80))
def test_tokenize_properties(raw):
    tokens = tokenize(raw)
    for tok in tokens:
        assert tok == tok.lower()
        assert tok != ""
        assert not any(ch in string.punctuation for ch in tok)
        assert not any(ch.isspace() for ch in tok)
    assert tokens == tokenize(raw)  # deterministic


# --------------------------------------------------------------------------
# load_corpus
# --------------------------------------------------------------------------

def test_load_tsv_accumulates_captions(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text(
        "v1\ta man is riding\n"
        "v1\tthe man rides\n"
        "v1\ta man on a horse\n"
        "v2\ta dog runs\n"
        "v2\tthe dog is running\n"
        "v2\tdogs run fast\n",
        encoding="utf-8")
    corpus = load_corpus(path)
    assert corpus.video_ids() == ["v1", "v2"]
    assert len(corpus) == 2
    assert all(v.caption_count == 3 for v in corpus)


def test_load_empty_file_rejected(tmp_path):
    path = tmp_path / "empty.tsv"
    path.write_text("", encoding="utf-8")
    with pytest.raises(CorpusError, match="empty corpus"):
        load_corpus(path)


def test_load_json_duplicate_id_named(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps([
        {"video_id": "v1", "captions": ["a man runs"]},
        {"video_id": "v1", "captions": ["a man walks"]},
    ]), encoding="utf-8")
    with pytest.raises(CorpusError, match="v1"):
        load_corpus(path, format="json")


def test_load_json_zero_captions_rejected(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps([{"video_id": "v9", "captions": []}]),
                    encoding="utf-8")
    with pytest.raises(CorpusError, match="v9"):
        load_corpus(path, format="json")


def test_load_tsv_bad_line_has_locator(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text("v1\tok caption\nno tab here\n", encoding="utf-8")
    with pytest.raises(CorpusError, match=":2"):
        load_corpus(path)


def test_load_tsv_tokenless_caption_rejected(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text("v1\t...\n", encoding="utf-8")
    with pytest.raises(CorpusError, match=":1"):
        load_corpus(path)


def test_save_load_round_trip(tmp_path, tiny_corpus):
    path = tmp_path / "out.tsv"
    save_corpus(tiny_corpus, path)
    loaded = load_corpus(path)
    assert loaded.video_ids() == tiny_corpus.video_ids()
    for a, b in zip(loaded, tiny_corpus):
        assert a.captions == b.captions


def test_corpus_invariants_enforced():
    with pytest.raises(CorpusError, match="duplicate"):
        CaptionCorpus([VideoEntry("x", [["a"]]), VideoEntry("x", [["b"]])])
    with pytest.raises(CorpusError, match="no captions"):
        CaptionCorpus([VideoEntry("x", [])])


# --------------------------------------------------------------------------
# build_vocabulary
# --------------------------------------------------------------------------

def _corpus_with_counts(counts: dict[str, int]) -> CaptionCorpus:
    # one caption per occurrence, one word per caption, all on one video
    captions = [[tok] for tok, n in counts.items() for _ in range(n)]
    return CaptionCorpus([VideoEntry("v", captions)])


def test_threshold_rule():
    corpus = _corpus_with_counts({"man": 7, "zebra": 2})
    vocab = build_vocabulary(corpus, min_count=5)
    assert "man" in vocab and "zebra" not in vocab


def test_min_count_one_keeps_all_tokens(tiny_corpus):
    vocab = build_vocabulary(tiny_corpus, min_count=1)
    distinct = {tok for cap in tiny_corpus.all_captions() for tok in cap}
    assert len(vocab) == len(distinct) + 4


def test_specials_occupy_first_indices(tiny_corpus):
    vocab = build_vocabulary(tiny_corpus, min_count=1)
    assert vocab.tokens[:4] == ["<pad>", "<bos>", "<eos>", "<unk>"]
    assert (PAD, BOS, EOS, UNK) == (0, 1, 2, 3)


def test_build_is_deterministic(tiny_corpus):
    a = build_vocabulary(tiny_corpus, min_count=1)
    b = build_vocabulary(tiny_corpus, min_count=1)
    assert a.tokens == b.tokens and a.index == b.index


def test_vocab_size_matches_brute_force_count():
    # independent oracle: plain dict counting over the same tokenization
    import numpy as np
    rng = np.random.default_rng(123)
    words = [f"w{i}" for i in range(40)]
    videos = []
    for v in range(30):
        captions = []
        for _ in range(4):
            k = rng.integers(3, 8)
            captions.append([words[rng.integers(len(words))] for _ in range(k)])
        videos.append(VideoEntry(f"v{v}", captions))
    corpus = CaptionCorpus(videos)

    counts = {}
    for video in videos:
        for caption in video.captions:
            for tok in caption:
                counts[tok] = counts.get(tok, 0) + 1
    for min_count in (1, 3, 5):
        expected = sum(1 for n in counts.values() if n >= min_count)
        vocab = build_vocabulary(corpus, min_count=min_count)
        assert len(vocab) == expected + 4


def test_frequency_sum_equals_total_tokens(tiny_corpus):
    total = sum(len(c) for c in tiny_corpus.all_captions())
    one_pass = Counter()
    for caption in tiny_corpus.all_captions():
        one_pass.update(caption)
    assert sum(one_pass.values()) == total


# --------------------------------------------------------------------------
# encode / decode
# --------------------------------------------------------------------------

def test_encode_known_tokens(tiny_corpus):
    vocab = build_vocabulary(tiny_corpus, min_count=1)
    out = encode_caption(["a", "man"], vocab)
    assert out == [BOS, vocab.index["a"], vocab.index["man"], EOS]


def test_encode_oov_becomes_unk(tiny_corpus):
    vocab = build_vocabulary(tiny_corpus, min_count=1)
    assert encode_caption(["qqq"], vocab) == [BOS, UNK, EOS]


def test_encode_empty(tiny_corpus):
    vocab = build_vocabulary(tiny_corpus, min_count=1)
    assert encode_caption([], vocab) == [BOS, EOS]


def test_round_trip_with_unk_masking(tiny_corpus):
    vocab = build_vocabulary(tiny_corpus, min_count=2)
    for caption in tiny_corpus.all_captions():
        masked = [tok if tok in vocab else "<unk>" for tok in caption]
        assert decode_caption(encode_caption(caption, vocab), vocab) == masked


@given(st.lists(st.sampled_from(["a", "man", "dog", "xyzzy", "cat"]), max_size=12))
def test_round_trip_property(tokens):
    vocab = Vocabulary(["a", "man", "dog", "cat"])
    masked = [tok if tok in vocab else "<unk>" for tok in tokens]
    assert decode_caption(encode_caption(tokens, vocab), vocab) == masked


def test_special_collision_rejected():
    with pytest.raises(CorpusError, match="special"):
        Vocabulary(["fine", "<unk>"])


def test_vocab_save_load_and_hash(tmp_path, tiny_corpus):
    vocab = build_vocabulary(tiny_corpus, min_count=1)
    path = tmp_path / "vocab.json"
    vocab.save(path)
    loaded = Vocabulary.load(path)
    assert loaded.tokens == vocab.tokens
    assert loaded.content_hash() == vocab.content_hash()

    payload = json.loads(path.read_text())
    payload["tokens"] = payload["tokens"][::-1]
    path.write_text(json.dumps(payload))
    with pytest.raises(CorpusError, match="hash"):
        Vocabulary.load(path)


# --------------------------------------------------------------------------
# corpus_bias_report
# --------------------------------------------------------------------------

def test_bias_share_single_dominant_token():
    captions = [["loud"] for _ in range(90)] + [[f"q{i}"] for i in range(10)]
    corpus = CaptionCorpus([VideoEntry("v", captions)])
    vocab = build_vocabulary(corpus, min_count=1)
    report = corpus_bias_report(corpus, vocab, top_fraction=1 / 11)
    assert report.top_words == 1
    assert report.share == 0.9


def test_bias_share_whole_vocabulary(tiny_corpus):
    vocab = build_vocabulary(tiny_corpus, min_count=1)
    assert corpus_bias_report(tiny_corpus, vocab, 1.0).share == 1.0


def test_bias_share_matches_brute_force_on_zipf_corpus():
    import numpy as np
    rng = np.random.default_rng(5)
    words = [f"w{i}" for i in range(30)]
    weights = 1.0 / np.arange(1, 31)
    weights /= weights.sum()
    videos = []
    for v in range(10):
        captions = []
        for _ in range(5):
            idx = rng.choice(30, size=6, p=weights)
            captions.append([words[i] for i in idx])
        videos.append(VideoEntry(f"v{v}", captions))
    corpus = CaptionCorpus(videos)
    vocab = build_vocabulary(corpus, min_count=1)

    counts: dict[str, int] = {}
    for caption in corpus.all_captions():
        for tok in caption:
            counts[tok] = counts.get(tok, 0) + 1
    import math
    for frac in (0.05, 0.2, 0.5):
        report = corpus_bias_report(corpus, vocab, frac)
        ranked = sorted(counts, key=lambda t: (-counts[t], vocab.index[t]))
        m = max(1, math.ceil(frac * len(ranked)))
        expected = sum(counts[t] for t in ranked[:m]) / sum(counts.values())
        assert report.share == expected


def test_bias_report_counts_video_occurrence(tiny_corpus):
    vocab = build_vocabulary(tiny_corpus, min_count=1)
    report = corpus_bias_report(tiny_corpus, vocab, 0.5)
    assert report.video_occurrence["a"] == 3     # 'a' appears in all 3 videos
    assert report.video_occurrence["dog"] == 1


def test_bias_report_rejects_bad_fraction(tiny_corpus):
    vocab = build_vocabulary(tiny_corpus, min_count=1)
    with pytest.raises(ValueError):
        corpus_bias_report(tiny_corpus, vocab, 0.0)
