"""Ranking metrics against brute-force oracles; region overlap against an
exhaustive sweep."""
import numpy as np
import pytest

from cddlab.errors import LabelAccessError, MetricError
from cddlab.metrics import (
    MetricsReport, auc_trapezoid, evaluate, pixel_auc, pro, roc_auc, save_scores,
)

from oracles import pairwise_auc, pro_exhaustive


class TestRocAuc:
    def test_perfect_separation(self):
        assert roc_auc([1, 2, 3, 4], [0, 0, 1, 1]) == 1.0

    def test_inverted(self):
        assert roc_auc([4, 3, 2, 1], [0, 0, 1, 1]) == 0.0

    def test_three_quarters(self):
        # pairs: (0.35 vs 0.1 ok), (0.35 vs 0.4 bad), (0.8 vs both ok) -> 3/4
        assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75

    def test_ties_count_half(self):
        assert roc_auc([1.0, 1.0], [0, 1]) == 0.5

    def test_single_class_rejected(self):
        with pytest.raises(MetricError):
            roc_auc([1, 2, 3], [1, 1, 1])

    def test_matches_brute_force_exactly(self):
        rng = np.random.default_rng(0)
        for trial in range(100):
            n = int(rng.integers(4, 120))
            # a small value grid forces plenty of ties
            scores = rng.integers(0, 12, size=n) / 3.0
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            expected = pairwise_auc(scores, labels)
            assert roc_auc(scores, labels) == expected
            assert auc_trapezoid(scores, labels) == expected

    def test_monotone_invariance(self):
        rng = np.random.default_rng(1)
        scores = rng.normal(size=80)
        labels = rng.integers(0, 2, size=80)
        labels[:2] = [0, 1]
        base = roc_auc(scores, labels)
        assert roc_auc(np.exp(scores) + 3, labels) == pytest.approx(base, abs=1e-12)
        assert roc_auc(2.0 * scores + 1.0, labels) == pytest.approx(base, abs=1e-12)


class TestPixelAuc:
    def test_map_equals_mask(self):
        masks = [np.array([[0, 1], [1, 0]]), np.array([[0, 0], [0, 1]])]
        maps = [m.astype(float) for m in masks]
        assert pixel_auc(maps, masks) == 1.0

    def test_constant_map_is_half(self):
        masks = [np.array([[0, 1], [1, 0]])]
        maps = [np.full((2, 2), 0.7)]
        assert pixel_auc(maps, masks) == 0.5

    def test_tiny_cases_match_brute_force(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            maps = [rng.integers(0, 4, size=(2, 2)) / 2.0 for _ in range(2)]
            masks = [rng.integers(0, 2, size=(2, 2)) for _ in range(2)]
            flat_labels = np.concatenate([m.ravel() for m in masks])
            if flat_labels.min() == flat_labels.max():
                continue
            flat_scores = np.concatenate([m.ravel() for m in maps])
            assert pixel_auc(maps, masks) == pairwise_auc(flat_scores, flat_labels)

    def test_shape_mismatch(self):
        with pytest.raises(MetricError):
            pixel_auc([np.zeros((2, 2))], [np.zeros((3, 3))])


class TestPro:
    def test_map_equals_mask_is_one(self):
        mask = np.zeros((8, 8), dtype=int)
        mask[1:3, 1:3] = 1
        mask[5:7, 5:7] = 1
        assert pro([mask.astype(float)], [mask]) == pytest.approx(1.0, abs=1e-12)

    def test_inverted_map_matches_oracle(self):
        mask = np.zeros((4, 4), dtype=int)
        mask[1:3, 1:3] = 1
        inv = 1.0 - mask
        got = pro([inv], [mask])
        want = pro_exhaustive([inv], [mask])
        assert got == pytest.approx(want, abs=1e-6)
        assert got == pytest.approx(0.0, abs=1e-6)

    def test_one_region_detected_one_missed_is_half(self):
        """Detected region scores above every normal pixel, missed region
        below; the mean overlap stays 0.5 across the whole FPR range."""
        mask = np.zeros((8, 8), dtype=int)
        mask[0:2, 0:2] = 1  # detected region
        mask[6:8, 6:8] = 1  # missed region
        values = np.zeros((8, 8))
        values[0:2, 0:2] = 1.0
        normal = ~mask.astype(bool)
        spread = np.linspace(0.01, 0.99, normal.sum())
        values[normal] = spread
        got = pro([values], [mask], n_thresholds=500)
        assert got == pytest.approx(0.5, abs=1e-6)
        assert got == pytest.approx(pro_exhaustive([values], [mask]), abs=1e-6)

    def test_constructed_cases_match_exhaustive_oracle(self):
        rng = np.random.default_rng(3)
        for trial in range(20):
            size = int(rng.integers(6, 17))
            mask = np.zeros((size, size), dtype=int)
            n_regions = int(rng.integers(1, 3))
            for _ in range(n_regions):
                h, w = rng.integers(2, 4, size=2)
                y = int(rng.integers(0, size - h))
                x = int(rng.integers(0, size - w))
                mask[y:y + h, x:x + w] = 1
            values = rng.integers(0, 9, size=(size, size)) / 8.0
            got = pro([values], [mask], n_thresholds=300)
            want = pro_exhaustive([values], [mask])
            assert got == pytest.approx(want, abs=1e-6), f"trial {trial}"

    def test_bounds(self):
        rng = np.random.default_rng(4)
        mask = np.zeros((8, 8), dtype=int)
        mask[2:4, 2:4] = 1
        for _ in range(10):
            values = rng.random((8, 8))
            assert 0.0 <= pro([values], [mask]) <= 1.0

    def test_monotone_invariance(self):
        rng = np.random.default_rng(5)
        mask = np.zeros((8, 8), dtype=int)
        mask[2:5, 3:6] = 1
        values = rng.random((8, 8))
        base = pro([values], [mask])
        assert pro([np.exp(values) * 2], [mask]) == pytest.approx(base, abs=1e-9)

    def test_no_regions_rejected(self):
        with pytest.raises(MetricError):
            pro([np.zeros((4, 4))], [np.zeros((4, 4), dtype=int)])


class TestEvaluate:
    def _micro_split(self, identical_pixels=False):
        from cddlab.datagen import GenSpec, build_fuad_split, generate_corpus

        spec = GenSpec(image_size=16, defect_size=(2, 4), n_train_normal=12, n_test_normal=6,
                       n_anomalous_pool=8, seed=5)
        normals, pool = generate_corpus(spec)
        if identical_pixels:
            ref = normals[0].pixels
            for s in normals + pool:
                s.pixels = ref.copy()
        return build_fuad_split(normals[:12], normals[12:], pool, 0.1, "overlap", seed=1)

    def _models(self, image_size=16):
        from cddlab.models import ModelConfig, build_student, build_teacher

        cfg = ModelConfig(image_size=image_size, level_channels=(4, 6, 8), bottleneck_width=6)
        return build_teacher(cfg, seed=1), build_student(cfg, seed=2)

    class _Cfg:
        smooth_sigma = 1.0

    def test_identical_inputs_give_half_image_auc(self):
        # every sample shares one pixel array, so image scores are constant
        split = self._micro_split(identical_pixels=True)
        teacher, student = self._models()
        report = evaluate(split, teacher, student.params, self._Cfg())
        assert report.i_auc == 0.5
        assert report.train_i_auc == 0.5

    def test_counts_and_setting(self):
        split = self._micro_split()
        teacher, student = self._models()
        report = evaluate(split, teacher, student.params, self._Cfg())
        assert report.setting == "overlap"
        assert report.n_test == {"normal": 6, "anomalous": 8}
        assert 0.0 <= report.pro <= 1.0

    def test_report_text_roundtrip(self):
        report = MetricsReport(i_auc=0.75, p_auc=0.5, pro=0.25, setting="no_overlap",
                               n_test={"normal": 3, "anomalous": 2}, train_i_auc=None)
        parsed = MetricsReport.from_text(report.to_text())
        assert parsed == report

    def test_golden_report_stability(self, tmp_path):
        """Full pipeline on a fixed micro split and frozen parameters gives
        a byte-identical serialized report on every run."""
        split = self._micro_split()
        teacher, student = self._models()
        r1 = evaluate(split, teacher, student.params, self._Cfg()).to_text()
        r2 = evaluate(split, teacher, student.params, self._Cfg()).to_text()
        assert r1 == r2

    def test_golden_report_matches_committed_file(self):
        """Frozen checkpoint + fixed micro split reproduce the committed
        report exactly."""
        from pathlib import Path

        from cddlab.datagen import GenSpec, build_fuad_split, generate_corpus
        from cddlab.models import ModelConfig, build_teacher, load_checkpoint

        data = Path(__file__).parent / "data"
        spec = GenSpec(image_size=16, defect_size=(2, 4), n_train_normal=14, n_test_normal=8,
                       n_anomalous_pool=8, seed=21)
        normals, pool = generate_corpus(spec)
        split = build_fuad_split(normals[:14], normals[14:], pool, 0.1, "overlap", seed=2)
        cfg = ModelConfig(image_size=16, level_channels=(4, 6, 8), bottleneck_width=6)
        teacher = build_teacher(cfg, seed=5)
        params, _ = load_checkpoint(data / "golden_student.npz", cfg)
        report = evaluate(split, teacher, params, self._Cfg())
        assert report.to_text() == (data / "golden_metrics.txt").read_text()

    def test_save_scores_format(self, tmp_path):
        path = tmp_path / "scores.csv"
        save_scores(path, ["a", "b"], [0.25, 0.5], ["normal", "anomalous"])
        lines = path.read_text().splitlines()
        assert lines[0] == "id,score,label"
        assert lines[1] == "a,0.25,normal"


class TestLabelBlindness:
    def test_training_context_cannot_read_labels(self):
        from cddlab.datagen import GenSpec, build_fuad_split, generate_corpus

        spec = GenSpec(image_size=16, defect_size=(2, 4), n_train_normal=6, n_test_normal=2,
                       n_anomalous_pool=4, seed=0)
        normals, pool = generate_corpus(spec)
        split = build_fuad_split(normals[:6], normals[6:], pool, 0.2, "overlap", seed=0)

        def training_step(view):
            # a training routine must fail if it peeks at ground truth
            return [v.mask for v in view]

        with pytest.raises(LabelAccessError):
            training_step(split.train_view())
