import numpy as np
import pytest

from kineme_lab.errors import SchemaError
from kineme_lab.kineme import learn_codebook
from kineme_lab.pipeline import (
    encode_corpus,
    list_corpus,
    load_labels,
    load_pose_corpus_dir,
)
from kineme_lab.synth import SynthConfig, generate_corpus


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("pipe_corpus")
    config = SynthConfig(n_videos=6, video_len_s=15, n_templates=4, seed=13,
                         weight_kineme=0.6, weight_au=0.2, weight_speech=0.2)
    generate_corpus(config, out)
    return out


def test_list_corpus_finds_all_channels(corpus):
    videos = list_corpus(corpus)
    assert [v.video_id for v in videos] == [f"v{i:03d}" for i in range(6)]


def test_load_labels_shape(corpus):
    labels = load_labels(corpus / "labels.csv")
    assert set(labels) == {"E"}
    assert len(labels["E"]) == 6
    assert all(0.0 <= s <= 1.0 for s in labels["E"].values())


def test_encode_corpus_aligns_channels(corpus):
    series = load_pose_corpus_dir(corpus)
    codebook = learn_codebook(series, k=4, rank=6, seed=1)
    records = encode_corpus(corpus, codebook, "E")
    assert len(records) == 6
    for rec in records:
        n = rec.n_windows
        assert rec.kineme.shape == (n, 4)
        assert rec.au.shape == (n, 17)
        assert rec.speech.shape == (n, 23)
        np.testing.assert_array_equal(rec.kineme.sum(axis=1), 1.0)
        assert n == 14  # 15 s at the 2 s / 1 s plan


def test_unknown_trait_rejected(corpus):
    series = load_pose_corpus_dir(corpus)
    codebook = learn_codebook(series, k=4, rank=6, seed=1)
    with pytest.raises(SchemaError):
        encode_corpus(corpus, codebook, "Z")


def test_missing_channel_detected(corpus, tmp_path):
    broken = tmp_path / "broken"
    (broken / "pose").mkdir(parents=True)
    (broken / "pose" / "v0.csv").write_text("x\n", encoding="utf-8")
    with pytest.raises(SchemaError):
        list_corpus(broken)
