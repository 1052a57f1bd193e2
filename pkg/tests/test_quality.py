"""Tests for gain computation, the score map, and score file round trips."""

import hashlib
import json

import numpy as np
import pytest

from priq._errors import ManifestError, MissingFileError
from priq.features import FEATURE_DIM
from priq.mkl import TrainedModel, mklgl_train
from priq.quality import (
    QualityReport,
    gain_to_score_params,
    load_scores,
    save_scores,
    score_batch,
    score_image,
    training_gain,
)

from conftest import planted_diffset


def constant_vote_model(sign, rng, n_train=5):
    """A hand-built model whose decision has a fixed sign for every nonzero
    probe: one support vector at the origin on the full-group kernel, so
    f(x) = sign * exp(-||x||^2 / (2 * 16 * 84)) which never crosses zero."""
    theta = np.zeros(45)
    theta[-1] = 1.0
    model = TrainedModel(
        theta=theta,
        alpha=np.array([1.0]),
        labels=np.array([float(sign)]),
        sv_rows=np.zeros((1, FEATURE_DIM)),
        norm_mu=np.zeros(FEATURE_DIM),
        norm_sd=np.ones(FEATURE_DIM),
        bias=0.0,
        config={"C": 1.0, "p": 1.0},
        objective_trace=(0.0,),
    )
    ids = np.arange(n_train, dtype=np.int64) + 10
    feats = rng.standard_normal((n_train, FEATURE_DIM))
    return model.with_training_table(ids, feats), feats


class TestTrainingGain:
    def test_sums_votes(self):
        assert training_gain([1, 1, -1, 1]) == 2
        assert training_gain([-1, -1]) == -2
        assert training_gain([]) == 0

    def test_rejects_non_votes(self):
        with pytest.raises(ValueError):
            training_gain([1, 0, -1])
        with pytest.raises(ValueError):
            training_gain([2])


class TestGainToScoreParams:
    def test_endpoints_of_the_affine_map(self):
        for n in (2, 3, 5, 17, 100):
            a, b = gain_to_score_params(n)
            np.testing.assert_allclose(a * (n - 1) + b, 100.0, rtol=1e-12)
            np.testing.assert_allclose(a * -(n - 1) + b, 0.0, atol=1e-9)

    def test_known_values(self):
        assert gain_to_score_params(2) == (50.0, 50.0)
        assert gain_to_score_params(11) == (5.0, 50.0)

    def test_rejects_single_image(self):
        with pytest.raises(ValueError):
            gain_to_score_params(1)


class TestScoreImage:
    def test_training_member_that_wins_all_scores_exactly_100(self):
        rng = np.random.default_rng(42)
        model, feats = constant_vote_model(+1, rng, n_train=4)
        report = score_image(model, feats[2], image_id=12)
        assert report.gain == 3
        assert report.score == 100.0
        assert report.n_train == 4
        assert report.image_id == 12

    def test_training_member_that_loses_all_scores_exactly_0(self):
        rng = np.random.default_rng(42)
        model, feats = constant_vote_model(-1, rng, n_train=4)
        report = score_image(model, feats[0])
        assert report.gain == -3
        assert report.score == 0.0

    def test_outside_image_can_leave_the_unit_range(self):
        rng = np.random.default_rng(42)
        model, _ = constant_vote_model(+1, rng, n_train=5)
        probe = rng.standard_normal(FEATURE_DIM)
        report = score_image(model, probe)
        assert report.gain == 5
        np.testing.assert_allclose(report.score, 50.0 * (5.0 / 4.0 + 1.0), rtol=1e-12)
        assert report.score > 100.0

    def test_requires_training_table(self):
        rng = np.random.default_rng(42)
        tabled, _ = constant_vote_model(+1, rng)
        from dataclasses import replace

        bare = replace(tabled, train_ids=None, train_features=None)
        with pytest.raises(ValueError):
            score_image(bare, np.zeros(FEATURE_DIM))

    def test_rejects_bad_feature_vector(self):
        rng = np.random.default_rng(42)
        model, _ = constant_vote_model(+1, rng)
        with pytest.raises(ValueError):
            score_image(model, np.zeros(FEATURE_DIM - 1))

    def test_rejects_single_row_training_table(self):
        rng = np.random.default_rng(42)
        model, _ = constant_vote_model(+1, rng, n_train=1)
        with pytest.raises(ValueError):
            score_image(model, np.zeros(FEATURE_DIM))


@pytest.fixture(scope="module")
def trained():
    rng = np.random.default_rng(42)
    D = planted_diffset(rng, 60, 68, 20)
    model = mklgl_train(D)
    feats = rng.standard_normal((6, FEATURE_DIM))
    return model.with_training_table(np.arange(6), feats), feats


class TestScoreBatch:
    def test_matches_scalar_scoring(self, trained):
        model, feats = trained
        rng = np.random.default_rng(42)
        probes = np.vstack([rng.standard_normal((3, FEATURE_DIM)), feats[1]])
        batch = score_batch(model, probes, image_ids=[7, 8, 9, 1])
        singles = [
            score_image(model, row, image_id=i)
            for row, i in zip(probes, [7, 8, 9, 1])
        ]
        assert batch == singles

    def test_default_ids_are_positional(self, trained):
        model, feats = trained
        batch = score_batch(model, feats[:3])
        assert [r.image_id for r in batch] == [0, 1, 2]

    def test_accepts_a_single_vector(self, trained):
        model, feats = trained
        batch = score_batch(model, feats[0])
        assert len(batch) == 1
        assert batch[0].gain == score_image(model, feats[0], 0).gain

    def test_rejects_mismatched_ids(self, trained):
        model, feats = trained
        with pytest.raises(ValueError):
            score_batch(model, feats[:3], image_ids=[1, 2])


class TestScoreIO:
    def reports(self):
        return [
            QualityReport(image_id=3, gain=-4, score=0.0, n_train=5),
            QualityReport(image_id=7, gain=1, score=62.5, n_train=5),
            QualityReport(image_id=9, gain=4, score=100.0, n_train=5),
        ]

    def test_round_trip_is_exact(self, tmp_path):
        path = tmp_path / "scores.csv"
        save_scores(self.reports(), path)
        back = load_scores(path)
        assert back == self.reports()

    def test_float_scores_survive_repr_round_trip(self, tmp_path):
        score = 50.0 * (3.0 / 7.0 + 1.0)
        rep = QualityReport(image_id=1, gain=3, score=score, n_train=8)
        path = tmp_path / "scores.csv"
        save_scores([rep], path)
        assert load_scores(path)[0].score == score

    def test_saved_bytes_are_deterministic(self, tmp_path):
        p1 = tmp_path / "a.csv"
        p2 = tmp_path / "b.csv"
        save_scores(self.reports(), p1, manifest_name="toy")
        save_scores(self.reports(), p2, manifest_name="toy")
        assert p1.read_bytes() == p2.read_bytes()
        assert (
            p1.with_suffix(".meta.json").read_bytes()
            == p2.with_suffix(".meta.json").read_bytes()
        )

    def test_sidecar_records_parameters_and_model_digest(self, tmp_path):
        model_file = tmp_path / "model.bin"
        model_file.write_bytes(b"not a real model, just bytes to hash")
        path = tmp_path / "scores.csv"
        save_scores(
            self.reports(), path, model_path=model_file, manifest_name="toy"
        )
        meta = json.loads(path.with_suffix(".meta.json").read_text())
        assert meta["n_images"] == 3
        assert meta["n_train"] == 5
        assert meta["manifest"] == "toy"
        assert meta["score_map"] == "50*(gain/(n_train-1)+1)"
        expect = hashlib.sha256(model_file.read_bytes()).hexdigest()
        assert meta["model_sha256"] == expect

    def test_empty_report_list_round_trips(self, tmp_path):
        path = tmp_path / "scores.csv"
        save_scores([], path)
        assert load_scores(path) == []

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(MissingFileError):
            load_scores(tmp_path / "nope.csv")

    def test_bad_header_raises(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("id,score\n1,50.0\n")
        with pytest.raises(ManifestError):
            load_scores(path)

    def test_bad_row_raises(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("id,gain,score\n1,two,50.0\n")
        with pytest.raises(ManifestError):
            load_scores(path)
