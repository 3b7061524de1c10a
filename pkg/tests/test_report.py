"""Experiment pipeline: featurization tables, baselines, the cell grid."""

import json

import numpy as np
import pytest

from mirrorghost.classifier import TrainConfig
from mirrorghost.dataset import DatasetSpec, generate_dataset
from mirrorghost.report import (
    PAPER_REFERENCE,
    PAPER_REFERENCE_LABEL,
    RunReport,
    ThresholdBaseline,
    baseline_sweeps,
    featurize_manifest,
    read_features_csv,
    render_markdown,
    report_json_dict,
    run_cell,
    run_matrix,
    threshold_sweep,
    write_features_csv,
    write_report,
)
from mirrorghost.spectral import FEATURE_LENGTH

TINY_TRAIN = TrainConfig(hidden_dim=0, epochs=3, batch_size=16)


@pytest.fixture(scope="module")
def tiny_manifest(tmp_path_factory):
    out = tmp_path_factory.mktemp("tinydata")
    spec = DatasetSpec(
        n_images=8, image_size=32, offset_mode="random", classes="binary", seed=3
    )
    return generate_dataset(spec, out)


class TestFeaturizeManifest:
    def test_layout_and_labels(self, tiny_manifest):
        mf = featurize_manifest(tiny_manifest, 16)
        assert mf.features.shape == (8 * 4, FEATURE_LENGTH)
        assert mf.patch_size == 16
        for i, record in enumerate(tiny_manifest.records):
            rows = mf.image_index == i
            assert rows.sum() == 4
            assert set(mf.k_labels[rows]) == {record.k}
            assert set(mf.binary_labels[rows]) == {record.binary_label()}
            assert set(mf.splits[rows]) == {record.split}
            coords = set(zip(mf.patch_rows[rows], mf.patch_cols[rows]))
            assert coords == {(0, 0), (0, 1), (1, 0), (1, 1)}

    def test_split_masks_partition_rows(self, tiny_manifest):
        mf = featurize_manifest(tiny_manifest, 16)
        total = sum(mf.mask(s).sum() for s in ("train", "val", "test"))
        assert total == mf.features.shape[0]

    def test_parallel_matches_serial(self, tiny_manifest):
        serial = featurize_manifest(tiny_manifest, 16, jobs=1)
        parallel = featurize_manifest(tiny_manifest, 16, jobs=2)
        assert np.array_equal(serial.features, parallel.features)
        assert np.array_equal(serial.image_index, parallel.image_index)
        assert serial.fingerprint == parallel.fingerprint


class TestFeaturesCsv:
    def test_round_trip(self, tiny_manifest, tmp_path):
        mf = featurize_manifest(tiny_manifest, 16)
        path = tmp_path / "features.csv"
        write_features_csv(mf, tiny_manifest, path)
        keys, matrix, fingerprint, patch_size = read_features_csv(path)
        assert np.array_equal(matrix, mf.features)  # repr round-trips exactly
        assert fingerprint == mf.fingerprint and patch_size == 16
        assert keys[0] == (tiny_manifest.records[0].path, 0, 0)
        assert keys[3] == (tiny_manifest.records[0].path, 1, 1)
        assert len(keys) == mf.features.shape[0]

    def test_rejects_bad_header(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("# fingerprint: x\npath,wrong\n")
        with pytest.raises(ValueError):
            read_features_csv(bad)
        bad.write_text("# only comments\n")
        with pytest.raises(ValueError):
            read_features_csv(bad)


class TestThresholdSweep:
    def test_separable_above(self):
        best = threshold_sweep([0.0, 1.0, 2.0, 10.0, 11.0, 12.0], [0, 0, 0, 1, 1, 1])
        assert best.accuracy == 1.0
        assert best.direction == "above"
        assert 2.0 < best.threshold < 10.0

    def test_separable_below(self):
        best = threshold_sweep([0.0, 1.0, 2.0, 10.0, 11.0], [1, 1, 1, 0, 0])
        assert best.accuracy == 1.0 and best.direction == "below"

    def test_matches_exhaustive_search(self):
        rng = np.random.default_rng(8)
        v = rng.normal(size=40)
        y = rng.integers(0, 2, size=40)
        best = threshold_sweep(v, y)
        # independent brute force over midpoints and sentinels
        distinct = np.unique(v)
        candidates = (
            [distinct[0] - 1.0]
            + [(a + b) / 2 for a, b in zip(distinct[:-1], distinct[1:])]
            + [distinct[-1] + 1.0]
        )
        expected = 0.0
        for t in candidates:
            for pred in ((v > t), (v < t)):
                hits = sum(int(p == bool(label)) for p, label in zip(pred, y))
                expected = max(expected, hits / len(y))
        assert best.accuracy == expected
        # the reported rule really achieves the reported accuracy
        pred = v > best.threshold if best.direction == "above" else v < best.threshold
        assert np.mean(pred == (y > 0)) == best.accuracy

    def test_constant_metric_predicts_majority(self):
        best = threshold_sweep([3.0, 3.0, 3.0, 3.0], [1, 1, 1, 0])
        assert best.accuracy == 0.75

    def test_k_labels_collapse_to_binary(self):
        best = threshold_sweep([0.0, 5.0, 6.0], [0, 2, 3])  # any k > 0 is corrupted
        assert best.accuracy == 1.0

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            threshold_sweep([], [])
        with pytest.raises(ValueError):
            threshold_sweep([1.0, 2.0], [0])

    def test_tie_with_threshold_counts_as_clean(self):
        # strict comparison: a metric exactly at the threshold is not flagged
        above = ThresholdBaseline("m", "above", 5.0, 1.0)
        below = ThresholdBaseline("m", "below", 5.0, 1.0)
        assert list(above.flags([5.0, 5.1])) == [False, True]
        assert list(below.flags([5.0, 4.9])) == [False, True]
        assert above.score([5.0], [1]) == 0.0

    def test_fitted_rule_scores_unseen_data(self):
        rule = threshold_sweep([0.0, 1.0, 2.0, 10.0, 11.0, 12.0], [0, 0, 0, 1, 1, 1])
        # one unseen point falls on the clean side of the fitted boundary
        assert rule.score([3.0, 20.0, 1.5], [0, 1, 1]) == pytest.approx(2 / 3)

    def test_baseline_sweeps_names_and_metrics(self):
        features = np.zeros((6, FEATURE_LENGTH))
        features[:, 64] = [0.1, 0.2, 0.3, 5.0, 6.0, 7.0]  # Laplacian variance column
        labels = np.array([1, 1, 1, 0, 0, 0])  # blur lowers the variance
        sweeps = baseline_sweeps(features, labels)
        assert [b.metric for b in sweeps] == ["laplacian_variance", "high_freq_energy"]
        assert sweeps[0].accuracy == 1.0 and sweeps[0].direction == "below"
        assert sweeps[1].accuracy == 0.5  # all-zero energy column carries no signal
        assert all(b.holdout_accuracy is None for b in sweeps)  # no eval set given

    def test_baseline_sweeps_holdout_protocol(self):
        train = np.zeros((6, FEATURE_LENGTH))
        train[:, 64] = [0.1, 0.2, 0.3, 5.0, 6.0, 7.0]
        train_labels = np.array([1, 1, 1, 0, 0, 0])
        test = np.zeros((4, FEATURE_LENGTH))
        test[:, 64] = [0.15, 4.0, 6.5, 8.0]  # 4.0 crosses the fitted boundary
        test_labels = np.array([1, 1, 0, 0])
        sweeps = baseline_sweeps(train, train_labels, test, test_labels)
        lapvar = sweeps[0]
        assert lapvar.accuracy == 1.0  # separable on the fit split
        assert lapvar.holdout_accuracy == 0.75  # the boundary-crossing point misses
        assert lapvar.holdout_accuracy == lapvar.score(test[:, 64], test_labels)


@pytest.fixture(scope="module")
def tiny_matrix(tmp_path_factory):
    """The same tiny grid run twice into different directories."""
    kwargs = dict(
        seeds=(1,),
        n_images=28,
        image_size=32,
        patch_size=16,
        segment_counts=(4,),
        config=TINY_TRAIN,
    )
    dir_a = tmp_path_factory.mktemp("matrix_a")
    dir_b = tmp_path_factory.mktemp("matrix_b")
    report_a = run_matrix(dir_a, **kwargs)
    report_b = run_matrix(dir_b, **kwargs)
    write_report(report_a, dir_a)
    write_report(report_b, dir_b)
    return dir_a, report_a, dir_b, report_b


class TestRunCell:
    def test_artifacts_and_scores(self, tmp_path):
        cell = run_cell(
            tmp_path,
            task="binary",
            n_segments=4,
            offset_mode="random",
            seed=1,
            n_images=14,
            image_size=32,
            patch_size=16,
            config=TINY_TRAIN,
            with_baselines=True,
        )
        assert cell.error is None
        assert cell.name == "binary-n4-random-seed1"
        assert 0.0 <= cell.patch_accuracy <= 1.0
        assert 0.0 <= cell.image_accuracy <= 1.0
        assert cell.n_test_patches > 0 and cell.n_test_images > 0
        assert (tmp_path / cell.manifest_path).exists()
        assert (tmp_path / cell.model_path).exists()
        assert [b.metric for b in cell.baselines] == [
            "laplacian_variance",
            "high_freq_energy",
        ]
        for b in cell.baselines:  # rules fitted on train, scored on test
            assert 0.0 <= b.accuracy <= 1.0
            assert b.holdout_accuracy is not None and 0.0 <= b.holdout_accuracy <= 1.0


class TestRunMatrix:
    def test_grid_completes(self, tiny_matrix):
        _, report, _, _ = tiny_matrix
        names = [c.name for c in report.cells]
        assert names == [
            "binary-n4-random-seed1",
            "intensity-n4-proportional-seed1",
            "intensity-n4-random-seed1",
        ]
        assert all(c.error is None for c in report.cells)
        assert all(0.0 <= c.patch_accuracy <= 1.0 for c in report.cells)
        assert report.cell("intensity", 4, "random", 1).task == "intensity"
        with pytest.raises(KeyError):
            report.cell("intensity", 6, "random", 1)
        assert set(report.timings) == set(names) | {"total"}

    def test_outputs_are_byte_identical_across_runs(self, tiny_matrix):
        dir_a, report_a, dir_b, _ = tiny_matrix
        for name in ("report.json", "report.md"):
            assert (dir_a / name).read_bytes() == (dir_b / name).read_bytes()
        for cell in report_a.cells:
            assert (dir_a / cell.manifest_path).read_bytes() == (
                dir_b / cell.manifest_path
            ).read_bytes()
            assert (dir_a / cell.model_path).read_bytes() == (
                dir_b / cell.model_path
            ).read_bytes()

    def test_report_files(self, tiny_matrix):
        dir_a, report, _, _ = tiny_matrix
        doc = json.loads((dir_a / "report.json").read_text())
        assert doc["experiment_id"] == report.experiment_id
        # JSON stringifies the integer segment-count keys
        assert doc["paper_reference"] == json.loads(json.dumps(PAPER_REFERENCE))
        assert len(doc["cells"]) == 3
        assert "timings" not in doc  # wall-clock stays out of the stable document
        timings = json.loads((dir_a / "timings.json").read_text())
        assert "total" in timings
        md = (dir_a / "report.md").read_text()
        assert PAPER_REFERENCE_LABEL in md
        assert "0.9859" in md and "0.6231" in md and "0.9875" in md

    def test_failed_cell_is_annotated_and_run_continues(self, tmp_path):
        report = run_matrix(
            tmp_path,
            seeds=(1,),
            n_images=14,
            image_size=32,
            patch_size=48,  # larger than the image: every cell must fail
            segment_counts=(4,),
            config=TINY_TRAIN,
        )
        assert len(report.cells) == 3
        assert all(c.error for c in report.cells)
        md = render_markdown(report)
        assert "Incomplete cells" in md

    def test_time_budget_skips_cells(self, tmp_path):
        report = run_matrix(
            tmp_path,
            seeds=(1,),
            n_images=14,
            image_size=32,
            patch_size=16,
            segment_counts=(4,),
            config=TINY_TRAIN,
            time_budget_s=0.0,
        )
        assert all(c.error == "skipped: time budget exhausted" for c in report.cells)

    def test_json_dict_is_serializable_and_stable(self, tiny_matrix):
        _, report_a, _, report_b = tiny_matrix
        a = json.dumps(report_json_dict(report_a), sort_keys=True)
        b = json.dumps(report_json_dict(report_b), sort_keys=True)
        assert a == b


def test_run_report_defaults():
    report = RunReport(experiment_id="x", config={}, cells=[])
    assert report.paper_reference["intensity_random"][8] == 0.3567
    assert report.paper_reference_label == PAPER_REFERENCE_LABEL
