"""Vote aggregation and image-level detection."""

import numpy as np
import pytest

from mirrorghost.classifier import CompatibilityError, Model
from mirrorghost.dataset import DatasetSpec, generate_dataset
from mirrorghost.detector import (
    aggregate_votes,
    batch_detect,
    classify_image,
    write_detection_csv,
)
from mirrorghost.ghost import synth_ground_image
from mirrorghost.spectral import FEATURE_LENGTH, feature_fingerprint


def constant_model(predicted_class: int, n_classes: int, patch_size: int) -> Model:
    """A model whose bias makes every patch vote for one class."""
    bias = np.zeros(n_classes)
    bias[predicted_class] = 10.0
    return Model(
        input_dim=FEATURE_LENGTH,
        hidden_dim=0,
        n_classes=n_classes,
        norm_mean=np.zeros(FEATURE_LENGTH),
        norm_std=np.ones(FEATURE_LENGTH),
        layers=[(np.zeros((FEATURE_LENGTH, n_classes)), bias)],
        feature_fingerprint=feature_fingerprint(patch_size),
    )


class TestAggregateVotes:
    def test_fraction_is_exact(self):
        for n in (1, 2, 7, 81):
            for m in range(n + 1):
                votes = np.array([1] * m + [0] * (n - m))
                fraction, _, _ = aggregate_votes(votes)
                assert fraction == m / n

    def test_threshold_is_inclusive(self):
        _, flagged, _ = aggregate_votes(np.array([1, 0]), tau=0.5)
        assert flagged  # fraction == tau trips the verdict
        _, flagged, _ = aggregate_votes(np.array([1, 0, 0]), tau=0.5)
        assert not flagged

    def test_lower_median(self):
        cases = [
            ([2], 2),
            ([1, 3], 1),  # even count takes the lower middle
            ([3, 1], 1),
            ([1, 2, 3, 4], 2),
            ([2, 3, 3], 3),
            ([0, 0, 5, 7], 5),  # zeros are excluded before the median
        ]
        for votes, expected in cases:
            _, flagged, estimated = aggregate_votes(np.array(votes), tau=0.0)
            assert flagged and estimated == expected

    def test_not_flagged_means_no_estimate(self):
        fraction, flagged, estimated = aggregate_votes(np.array([0, 0, 0, 1]), tau=0.5)
        assert fraction == 0.25 and not flagged and estimated is None

    def test_all_aligned_with_zero_tau(self):
        # flagged vacuously, but there is no nonzero vote to estimate from
        fraction, flagged, estimated = aggregate_votes(np.array([0, 0]), tau=0.0)
        assert fraction == 0.0 and flagged and estimated is None

    def test_order_invariance(self):
        rng = np.random.default_rng(4)
        votes = rng.integers(0, 4, size=81)
        expected = aggregate_votes(votes)
        for _ in range(5):
            assert aggregate_votes(rng.permutation(votes)) == expected

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            aggregate_votes(np.array([]))
        with pytest.raises(ValueError):
            aggregate_votes(np.array([[1, 0]]))
        with pytest.raises(ValueError):
            aggregate_votes(np.array([0.5, 1.0]))
        with pytest.raises(ValueError):
            aggregate_votes(np.array([-1, 1]))
        with pytest.raises(ValueError):
            aggregate_votes(np.array([1, 0]), tau=1.5)


class TestClassifyImage:
    def test_unanimous_votes(self):
        img = synth_ground_image(64, seed=3)
        verdict = classify_image(constant_model(2, 4, 32), img, 32)
        assert verdict.n_patches == 4
        assert verdict.ghosted_patch_fraction == 1.0
        assert verdict.is_misaligned and verdict.estimated_k == 2
        assert len(verdict.votes) == 4
        assert {(v.row, v.col) for v in verdict.votes} == {
            (0, 0), (0, 1), (1, 0), (1, 1)
        }
        assert all(v.predicted_class == 2 for v in verdict.votes)
        assert all(0 <= v.max_probability <= 1 for v in verdict.votes)

    def test_aligned_votes(self):
        img = synth_ground_image(64, seed=3)
        verdict = classify_image(constant_model(0, 4, 32), img, 32)
        assert verdict.ghosted_patch_fraction == 0.0
        assert not verdict.is_misaligned and verdict.estimated_k is None

    def test_fingerprint_mismatch(self):
        img = synth_ground_image(64, seed=3)
        with pytest.raises(CompatibilityError):
            classify_image(constant_model(0, 4, 16), img, 32)


@pytest.fixture(scope="module")
def aligned_manifest(tmp_path_factory):
    out = tmp_path_factory.mktemp("aligned")
    spec = DatasetSpec(
        n_images=6,
        image_size=32,
        corruption="none",
        classes="binary",
        seed=2,
    )
    return generate_dataset(spec, out)


class TestBatchDetect:
    def test_trivial_model_on_clean_corpus(self, aligned_manifest):
        # an always-aligned verdict is perfect when nothing is corrupted
        result = batch_detect(constant_model(0, 2, 16), aligned_manifest, 16)
        assert result.n_images == 6
        assert result.image_accuracy == 1.0
        assert result.k_accuracy == 1.0
        assert result.failures == []
        assert all(row["true_k"] == 0 for row in result.rows)

    def test_always_flagging_model_is_always_wrong(self, aligned_manifest):
        result = batch_detect(constant_model(1, 2, 16), aligned_manifest, 16)
        assert result.image_accuracy == 0.0
        assert result.k_accuracy == 0.0

    def test_unreadable_image_is_recorded_and_skipped(self, tmp_path):
        spec = DatasetSpec(
            n_images=4, image_size=32, corruption="none", classes="binary", seed=0
        )
        manifest = generate_dataset(spec, tmp_path)
        victim = tmp_path / manifest.records[1].path
        victim.write_bytes(b"P5\nnot actually a pgm")
        result = batch_detect(constant_model(0, 2, 16), manifest, 16)
        assert len(result.failures) == 1
        assert result.failures[0][0] == manifest.records[1].path
        assert len(result.rows) == 3
        assert result.n_images == 4
        assert result.image_accuracy == 1.0  # scored over readable images only

    def test_detection_csv(self, aligned_manifest, tmp_path):
        result = batch_detect(constant_model(0, 2, 16), aligned_manifest, 16)
        out = tmp_path / "verdicts.csv"
        write_detection_csv(result, out)
        lines = out.read_text().splitlines()
        assert lines[0] == "path,n_patches,ghosted_fraction,is_misaligned,estimated_k,true_k"
        assert len(lines) == 1 + 6
        first = lines[1].split(",")
        assert first[1] == "4" and first[3] == "0" and first[4] == ""
