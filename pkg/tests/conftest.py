import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from infocap.corpus import CaptionCorpus, VideoEntry


@pytest.fixture
def tiny_corpus():
    return CaptionCorpus([
        VideoEntry("v1", [
            ["a", "man", "is", "riding"],
            ["a", "man", "rides", "a", "horse"],
            ["the", "man", "is", "riding", "a", "horse"],
        ]),
        VideoEntry("v2", [
            ["a", "dog", "is", "running"],
            ["the", "dog", "runs", "fast"],
            ["a", "dog", "is", "running", "outside"],
        ]),
        VideoEntry("v3", [
            ["a", "cat", "is", "sleeping"],
            ["the", "cat", "sleeps"],
            ["a", "cat", "is", "sleeping", "indoors"],
        ]),
    ])
