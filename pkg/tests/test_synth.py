import numpy as np
import pytest

from kineme_lab.errors import ConfigurationError
from kineme_lab.ingest import parse_au_csv, parse_pose_csv, read_wav
from kineme_lab.oracles import check_mfcc, oracle_suite
from kineme_lab.synth import (
    SynthConfig,
    config_from_toml,
    generate_corpus,
    load_manifest,
    planted_template_angles,
    template_frequencies,
)


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    config = SynthConfig(n_videos=4, video_len_s=15, n_templates=4, seed=5,
                         weight_kineme=1.0, weight_au=0.0, weight_speech=0.0,
                         angle_noise_sd=0.0)
    paths = generate_corpus(config, out)
    return config, paths


class TestGenerateCorpus:
    def test_file_layout(self, small_corpus):
        config, paths = small_corpus
        assert sorted(p.name for p in (paths.root / "pose").iterdir()) == [
            f"v{i:03d}.csv" for i in range(4)
        ]
        assert (paths.root / "au" / "v000.csv").exists()
        assert (paths.root / "audio" / "v000.wav").exists()
        assert paths.labels.exists() and paths.manifest.exists()

    def test_pose_csv_dimensions(self, small_corpus):
        config, paths = small_corpus
        series = parse_pose_csv(paths.root / "pose" / "v000.csv")
        assert len(series) == 450

    def test_round_trips_through_ingest(self, small_corpus):
        config, paths = small_corpus
        pose = parse_pose_csv(paths.root / "pose" / "v001.csv")
        au = parse_au_csv(paths.root / "au" / "v001.csv")
        track = read_wav(paths.root / "audio" / "v001.wav")
        assert len(pose) == len(au) == 450
        assert track.duration_s == pytest.approx(15.0)

    def test_zero_noise_kineme_rule_labels_exactly_match(self, small_corpus):
        config, paths = small_corpus
        manifest = load_manifest(paths.manifest)
        for record in manifest["videos"]:
            fraction = np.mean(np.array(record["block_ids"]) == 0)
            assert record["score"] == pytest.approx(fraction, abs=1e-12)

    def test_manifest_structure(self, small_corpus):
        config, paths = small_corpus
        manifest = load_manifest(paths.manifest)
        assert manifest["config"]["seed"] == 5
        record = manifest["videos"][0]
        assert len(record["block_ids"]) == 7  # full 2 s blocks in 15 s
        assert 0.0 <= record["score"] <= 1.0

    def test_fixed_seed_is_byte_identical(self, tmp_path):
        config = SynthConfig(n_videos=2, video_len_s=15, seed=9)
        a = generate_corpus(config, tmp_path / "a")
        b = generate_corpus(config, tmp_path / "b")
        for rel in ("pose/v000.csv", "au/v001.csv", "audio/v000.wav", "labels.csv",
                    "manifest.json"):
            assert (a.root / rel).read_bytes() == (b.root / rel).read_bytes()

    def test_template_frequencies_distinct_per_channel(self):
        config = SynthConfig(n_templates=4)
        freqs = template_frequencies(config)
        for ch in range(3):
            assert len(set(freqs[:, ch])) == 4

    def test_templates_are_one_second_periodic(self):
        config = SynthConfig(n_templates=4)
        angles = planted_template_angles(config, 2)
        np.testing.assert_allclose(angles[:30], angles[30:60], atol=1e-12)

    def test_invalid_config_rejected(self):
        with pytest.raises(ConfigurationError):
            SynthConfig(n_templates=1)
        with pytest.raises(ConfigurationError):
            SynthConfig(weight_kineme=0.0, weight_au=0.0, weight_speech=0.0)

    def test_config_from_toml(self, tmp_path):
        doc = tmp_path / "synth.toml"
        doc.write_text(
            "[synth]\nn_videos = 3\nseed = 2\nweight_au = 0.5\n", encoding="utf-8"
        )
        config = config_from_toml(doc)
        assert config.n_videos == 3
        assert config.weight_au == 0.5


class TestOracleSuite:
    def test_fast_suite_passes(self):
        report = oracle_suite(fast=True)
        assert report.passed
        names = {r.name for r in report.results}
        assert {"mfcc-direct-dft", "nnls-grid", "nmf-monotone", "em-monotone",
                "gradient-finite-difference", "gmm-nearest-centroid",
                "decision-fusion-grid"} <= names

    def test_every_result_reports_max_error(self):
        report = oracle_suite(fast=True)
        for line in report.summary_lines():
            assert "max error" in line

    def test_perturbed_mfcc_fails_the_oracle(self):
        from kineme_lab.speech import mfcc

        def crooked(frame, sr, n_mel=26, n_coef=20):
            out = mfcc(frame, sr, n_mel, n_coef)
            out = out.copy()
            out[3] += 1e-3  # deliberately perturbed coefficient
            return out

        result = check_mfcc(n_frames=5, impl=crooked)
        assert not result.passed
        assert result.failing_case is not None
        assert result.failing_case["max_abs_diff"] > 1e-6
