"""Schedules, domain construction, selection, perturbation, and the
cross-domain training loop."""
from fractions import Fraction

import numpy as np
import pytest

from cddlab import models
from cddlab.cdd import (
    CddSchedules, ConfidenceTable, DomainPartition, _FeatureCache, _mean_cos_per_sample,
    affinity_select, compute_confidence, construct_domains, k_for_epoch, lambda_for_mode,
    lambda_schedule, perturb_teacher_features, r_schedule, run_cdd, train_domain_student,
    train_global_cross, train_global_hc,
)
from cddlab.datagen import GenSpec, ImageSample, LabelFreeSample, build_fuad_split, generate_corpus
from cddlab.distill import train_rd
from cddlab.errors import ConfigurationError, InputError
from cddlab.layers import Adam
from cddlab.models import FeaturePyramid, build_student, build_teacher, clone_params, params_hash
from cddlab.rng import derive_rng


class _RunSettings:
    def __init__(self, E=2, batch_size=4, lr=0.005, train_seed=0, strategy="consensual",
                 domain_steps=0, cross_steps=0, hc_steps=0, model_seed=0):
        self.learning_rate = lr
        self.batch_size = batch_size
        self.train_seed = train_seed
        self.model_seed = model_seed
        self.strategy = strategy
        self.domain_steps = domain_steps
        self.cross_steps = cross_steps
        self.hc_steps = hc_steps
        self.smooth_sigma = 1.0
        self.schedules = CddSchedules(E=E)


def _micro_split(n_train=12, n_pool=6, r_noise=0.2, seed=0, image_size=16):
    spec = GenSpec(image_size=image_size, defect_size=(2, 4), n_train_normal=n_train,
                   n_test_normal=2, n_anomalous_pool=n_pool, seed=seed)
    normals, pool = generate_corpus(spec)
    return build_fuad_split(normals[:n_train], normals[n_train:], pool, r_noise,
                            "overlap", seed=seed)


def _micro_models(image_size=16):
    cfg = models.ModelConfig(image_size=image_size, level_channels=(4, 6, 8),
                             bottleneck_width=6)
    return build_teacher(cfg, seed=1), build_student(cfg, seed=2)


class TestSchedules:
    def test_r_schedule_points(self):
        assert r_schedule(0, 200, 0.5) == 0.0
        assert r_schedule(100, 200, 0.5) == 0.5
        assert r_schedule(150, 200, 0.5) == 0.5
        assert r_schedule(30, 200, 0.5) == pytest.approx(0.15)

    def test_lambda_special_points(self):
        assert lambda_schedule(0, 200) == 0.0
        assert lambda_schedule(200, 200) == 1.0
        assert lambda_schedule(100, 200) == pytest.approx(0.5, abs=1e-15)
        assert lambda_schedule(50, 200) == pytest.approx(1.0 / 82.0, abs=1e-15)

    def test_schedules_match_exact_rational_arithmetic(self):
        """Exact-fraction oracle over a 1000-point grid, tolerance 1e-12."""
        p = 4
        for i in range(1000):
            E = 1 + i % 37
            e = i % (E + 1)
            want_r = min(Fraction(e, E), Fraction(1, 2))
            assert abs(r_schedule(e, E, 0.5) - float(want_r)) <= 1e-12
            x = Fraction(e, E)
            num = x ** p
            den = x ** p + (1 - x) ** p
            assert abs(lambda_schedule(e, E, p) - float(num / den)) <= 1e-12

    def test_lambda_modes(self):
        assert lambda_for_mode("zero", 10, 20) == 0.0
        assert lambda_for_mode("one", 10, 20) == 1.0
        assert lambda_for_mode("linear", 10, 20) == 0.5
        assert lambda_for_mode("s_shape", 10, 20) == 0.5

    def test_k_schedule_unrolls_evenly(self):
        sched = CddSchedules(E=4).k_schedule
        assert [k_for_epoch(e, 4, sched) for e in range(4)] == [2, 3, 3, 2]
        assert [k_for_epoch(e, 8, sched) for e in range(8)] == [2, 2, 3, 3, 3, 3, 2, 2]

    def test_k_schedule_ceil_remainders(self):
        sched = CddSchedules(E=5).k_schedule
        assert [k_for_epoch(e, 5, sched) for e in range(5)] == [2, 2, 3, 3, 2]

    def test_schedule_validation(self):
        with pytest.raises(ConfigurationError):
            CddSchedules(k_schedule=((0.5, 2), (0.4, 3)))
        with pytest.raises(ConfigurationError):
            CddSchedules(k_schedule=((1.0, 0),))
        with pytest.raises(ConfigurationError):
            CddSchedules(r_normal=1.5)


class TestConfidence:
    def test_identical_features_give_three(self):
        rng = derive_rng(0, "conf")
        levels = [rng.normal(size=(4, 3, 4, 4)), rng.normal(size=(4, 5, 2, 2)),
                  rng.normal(size=(4, 7, 1, 1))]
        np.testing.assert_allclose(_mean_cos_per_sample(levels, levels), 3.0, atol=1e-12)

    def test_orthogonal_features_give_zero(self):
        t, s = [], []
        for c, hw in ((2, 4), (2, 2), (2, 1)):
            a = np.zeros((3, c, hw, hw))
            b = np.zeros((3, c, hw, hw))
            a[:, 0] = 1.0
            b[:, 1] = 1.0
            t.append(a)
            s.append(b)
        np.testing.assert_allclose(_mean_cos_per_sample(t, s), 0.0, atol=1e-12)

    def test_one_parallel_two_orthogonal_gives_one(self):
        t, s = [], []
        for l, hw in enumerate((4, 2, 1)):
            a = np.zeros((1, 2, hw, hw))
            b = np.zeros((1, 2, hw, hw))
            a[:, 0] = 1.0
            if l == 0:
                b[:, 0] = 1.0  # parallel
            else:
                b[:, 1] = 1.0  # orthogonal
            t.append(a)
            s.append(b)
        np.testing.assert_allclose(_mean_cos_per_sample(t, s), 1.0, atol=1e-12)

    def test_public_op_contract(self):
        split = _micro_split()
        teacher, student = _micro_models()
        view = split.train_view()
        table = compute_confidence(view, teacher, student.params, epoch=3)
        assert table.epoch == 3
        assert set(table.values) == {v.id for v in view}
        assert all(-3.0 <= v <= 3.0 for v in table.values.values())
        again = compute_confidence(view, teacher, student.params, epoch=3)
        assert table.values == again.values


class TestConstructDomains:
    def _table(self, n, n_anom=0):
        # normals get high confidence, anomalies low; ids sort ties
        values = {}
        for i in range(n - n_anom):
            values[f"norm-{i:04d}"] = 2.0
        for i in range(n_anom):
            values[f"anom-{i:04d}"] = -1.0
        return ConfidenceTable(values=values, epoch=0)

    def test_sizes_n12_r_half_k2(self):
        part = construct_domains(self._table(12), 0.5, 2, seed=0)
        assert len(part.high_conf) == 6
        assert [len(s) for s in part.low_subsets] == [3, 3]
        assert len(part.domain(0)) == 9

    def test_k1_is_full_set(self):
        part = construct_domains(self._table(10), 0.0, 1, seed=0)
        assert sorted(part.domain(0)) == sorted(self._table(10).values)

    def test_top_confidence_forms_core(self):
        part = construct_domains(self._table(10, n_anom=4), 0.5, 2, seed=1)
        assert all(sid.startswith("norm") for sid in part.high_conf)

    def test_invariants_and_determinism(self):
        table = self._table(23, n_anom=5)
        p1 = construct_domains(table, 0.3, 3, seed=9)
        p2 = construct_domains(table, 0.3, 3, seed=9)
        assert p1.high_conf == p2.high_conf
        assert p1.low_subsets == p2.low_subsets
        assert p1.all_ids() == set(table.values)
        sizes = [len(s) for s in p1.low_subsets]
        assert max(sizes) - min(sizes) <= 1

    def test_k_larger_than_remaining_allows_empty_shards(self):
        part = construct_domains(self._table(4), 0.5, 5, seed=0)
        assert len(part.low_subsets) == 5
        assert sum(len(s) for s in part.low_subsets) == 2

    def test_anomaly_dilution(self):
        """Oracle confidences, N=100 with 10 anomalies, r=0.5, K=2: mean
        domain anomaly ratio stays well below the split's 0.1."""
        table = self._table(100, n_anom=10)
        ratios = []
        for seed in range(50):
            part = construct_domains(table, 0.5, 2, seed=seed)
            for k in range(2):
                ids = part.domain(k)
                ratios.append(sum(1 for i in ids if i.startswith("anom")) / len(ids))
        assert np.mean(ratios) < 0.08

    def test_partition_validation(self):
        with pytest.raises(ConfigurationError):
            DomainPartition(high_conf=["a"], low_subsets=[["a"]], K=1)
        with pytest.raises(ConfigurationError):
            DomainPartition(high_conf=[], low_subsets=[["a", "b", "c"], []], K=2)


class TestDomainStudent:
    def test_lambda_zero_matches_baseline_trainer(self):
        split = _micro_split()
        teacher, student = _micro_models()
        view = split.train_view()
        cfg = _RunSettings(E=1, batch_size=4)
        _, rd_hist = train_rd(view, teacher, student, cfg)
        params, ds_hist = train_domain_student(
            view, [v.id for v in view], teacher, clone_params(student), 0.0, cfg,
            epoch=0, domain_index=0)
        assert len(rd_hist) == len(ds_hist)
        for a, b in zip(rd_hist, ds_hist):
            assert abs(a.total - b.total) <= 1e-10

    def test_lambda_one_with_teacher_as_global_doubles_loss(self):
        """If the regularization target equals the teacher target, the first
        step's combined loss is exactly twice the plain loss."""
        split = _micro_split()
        teacher, student = _micro_models()
        view = split.train_view()
        cfg = _RunSettings(E=1, batch_size=4)
        cache = _FeatureCache(view, teacher)
        cache.g_levels = [lv.copy() for lv in cache.t_levels]
        ids = [v.id for v in view]
        _, hist0 = train_domain_student(view, ids, teacher, clone_params(student), 0.0, cfg,
                                        epoch=0, domain_index=0)
        cache.g_levels = [lv.copy() for lv in cache.t_levels]
        _, hist1 = train_domain_student(view, ids, teacher, clone_params(student), 1.0, cfg,
                                        epoch=0, domain_index=0, cache=cache)
        assert hist1[0].total == pytest.approx(2.0 * hist0[0].total, rel=1e-12)

    def test_descent_on_small_domain(self):
        split = _micro_split()
        teacher, student = _micro_models()
        view = split.train_view()
        ids = [v.id for v in view][:10]
        cfg = _RunSettings(E=1, batch_size=4, domain_steps=100)
        _, hist = train_domain_student(view, ids, teacher, clone_params(student), 0.0, cfg)
        assert hist[-1].total < hist[0].total
        assert len(hist) == 100

    def test_empty_domain_rejected(self):
        split = _micro_split()
        teacher, student = _micro_models()
        with pytest.raises(InputError):
            train_domain_student(split.train_view(), [], teacher,
                                 clone_params(student), 0.0, _RunSettings())

    def test_prev_global_not_mutated(self):
        split = _micro_split()
        teacher, student = _micro_models()
        view = split.train_view()
        prev = clone_params(student)
        before = params_hash(prev)
        train_domain_student(view, [v.id for v in view], teacher, prev, 0.5,
                             _RunSettings(E=1))
        assert params_hash(prev) == before


def _const_pyramid(vecs):
    """Pyramid whose flattened levels are the given vectors (1x1 spatial can't
    decrease, so use shrinking spatial sizes with constant fill)."""
    levels = []
    for i, v in enumerate(vecs):
        side = 4 >> i if (4 >> i) > 0 else 1
        arr = np.zeros((len(v), side, side))
        arr[:] = np.asarray(v, dtype=float)[:, None, None]
        levels.append(arr)
    return FeaturePyramid(levels)


class TestAffinitySelect:
    def test_picks_most_aligned_candidate(self):
        glob = _const_pyramid([[1, 0], [1, 0], [1, 0]])
        cands = {1: _const_pyramid([[1, 0], [1, 0], [1, 0]]),
                 2: _const_pyramid([[0, 1], [0, 1], [0, 1]])}
        sel = affinity_select(cands, glob, "consensual", own_domain_index=0)
        assert sel.selected_index == 1
        np.testing.assert_allclose(sel.affinities, [3.0, 0.0], atol=1e-12)

    def test_tie_breaks_to_lowest_index(self):
        glob = _const_pyramid([[1, 1], [1, 1], [1, 1]])
        cands = {1: _const_pyramid([[1, 1], [1, 1], [1, 1]]),
                 2: _const_pyramid([[1, 1], [1, 1], [1, 1]])}
        sel = affinity_select(cands, glob, "consensual", own_domain_index=0)
        assert sel.selected_index == 1

    def test_matches_brute_force_on_random_pyramids(self):
        rng = derive_rng(1, "aff")
        from cddlab.distill import cos_sim

        for _ in range(30):
            shapes = [(3, 4, 4), (4, 2, 2), (5, 1, 1)]
            glob = FeaturePyramid([rng.normal(size=s) for s in shapes])
            own = int(rng.integers(0, 4))
            cands = {h: FeaturePyramid([rng.normal(size=s) for s in shapes])
                     for h in range(4) if h != own}
            sel = affinity_select(cands, glob, "consensual", own_domain_index=own)
            best, best_h = -np.inf, None
            for h in sorted(cands):
                aff = sum(cos_sim(cands[h].levels[l].ravel(), glob.levels[l].ravel())
                          for l in range(3))
                if aff > best + 1e-15:
                    best, best_h = aff, h
            assert sel.selected_index == best_h

    def test_invariant_to_candidate_rescaling(self):
        rng = derive_rng(2, "scale")
        shapes = [(3, 4, 4), (4, 2, 2), (5, 1, 1)]
        glob = FeaturePyramid([rng.normal(size=s) for s in shapes])
        cands = {h: FeaturePyramid([rng.normal(size=s) for s in shapes]) for h in (1, 2, 3)}
        base = affinity_select(cands, glob, "consensual", own_domain_index=0)
        scaled = {h: FeaturePyramid([lv * (7.3 if h == 2 else 1.0) for lv in p.levels])
                  for h, p in cands.items()}
        after = affinity_select(scaled, glob, "consensual", own_domain_index=0)
        assert base.selected_index == after.selected_index

    def test_next_is_cyclic_successor(self):
        glob = _const_pyramid([[1, 0], [1, 0], [1, 0]])
        cands = {0: glob, 2: glob}
        sel = affinity_select(cands, glob, "next", own_domain_index=1)
        assert sel.selected_index == 2
        sel = affinity_select({0: glob, 1: glob}, glob, "next", own_domain_index=2)
        assert sel.selected_index == 0

    def test_all_keeps_everyone(self):
        glob = _const_pyramid([[1, 0], [1, 0], [1, 0]])
        cands = {1: glob, 2: glob}
        sel = affinity_select(cands, glob, "all", own_domain_index=0)
        assert sel.selected_index is None
        assert sel.candidate_indices == [1, 2]

    def test_k1_rejected_for_single_selection(self):
        glob = _const_pyramid([[1, 0], [1, 0], [1, 0]])
        with pytest.raises(ConfigurationError):
            affinity_select({}, glob, "consensual", own_domain_index=0)

    def test_own_domain_must_be_excluded(self):
        glob = _const_pyramid([[1, 0], [1, 0], [1, 0]])
        with pytest.raises(InputError):
            affinity_select({0: glob, 1: glob}, glob, "consensual", own_domain_index=0)


class TestPerturbation:
    def test_sigma_zero_is_identity(self):
        rng = derive_rng(0, "p")
        pyr = FeaturePyramid([rng.normal(size=(3, 4, 4)), rng.normal(size=(4, 2, 2)),
                              rng.normal(size=(5, 1, 1))])
        out = perturb_teacher_features(pyr, 0.0, derive_rng(1, "n"))
        for a, b in zip(pyr.levels, out.levels):
            np.testing.assert_array_equal(a, b)

    def test_noise_statistics(self):
        n = 100_000
        level = np.zeros((1, 1, n // 4, 4))
        out = perturb_teacher_features([level], 0.2, derive_rng(2, "n"))
        delta = (out[0] - level).ravel()
        assert abs(delta.mean()) <= 3 * 0.2 / np.sqrt(n)
        assert abs(delta.std() - 0.2) <= 0.02 * 0.2

    def test_negative_sigma_rejected(self):
        with pytest.raises(ConfigurationError):
            perturb_teacher_features([np.zeros((1, 1, 2, 2))], -0.1, derive_rng(0, "n"))


class TestGlobalPhases:
    def _setup(self, strategy="consensual", K=2):
        split = _micro_split(n_train=16, n_pool=8)
        teacher, student = _micro_models()
        view = split.train_view()
        cache = _FeatureCache(view, teacher)
        cfg = _RunSettings(E=1, batch_size=4, strategy=strategy)
        conf = compute_confidence(view, teacher, student.params, cache=cache)
        part = construct_domains(conf, 0.25, K, seed=0)
        return split, teacher, student, view, cache, cfg, part

    def test_cross_initial_loss_zero_when_targets_equal_own_output(self):
        """With zero input noise and every candidate feature equal to the
        global student's own output, the first step's loss vanishes (up to
        batch-shape arithmetic noise, quadratic in the discrepancy)."""
        split, teacher, student, view, cache, cfg, part = self._setup()
        cfg.schedules = CddSchedules(E=1, sigma_noise=0.0)
        own_out = cache.forward_all(student.params)
        cache.forward_all = lambda params, chunk=128: [lv.copy() for lv in own_out]
        params = clone_params(student)
        out_params, hist = train_global_cross(view, part, [student.params] * part.K, teacher,
                                              clone_params(student), params, cfg.schedules,
                                              cfg, epoch=0, cache=cache)
        assert hist[0].total == pytest.approx(0.0, abs=1e-9)

    def test_cross_reduces_loss(self):
        split, teacher, student, view, cache, cfg, part = self._setup()
        cfg.cross_steps = 60
        domain_students = []
        for k in range(part.K):
            p, _ = train_domain_student(view, part.domain(k), teacher,
                                        clone_params(student), 0.0, cfg, epoch=0,
                                        domain_index=k, cache=cache)
            domain_students.append(p)
        params, hist = train_global_cross(view, part, domain_students, teacher,
                                          clone_params(student), clone_params(student),
                                          cfg.schedules, cfg, epoch=0, cache=cache)
        assert np.mean([h.total for h in hist[-10:]]) < np.mean([h.total for h in hist[:10]])

    def test_cross_freezes_sources(self):
        split, teacher, student, view, cache, cfg, part = self._setup()
        prev = clone_params(student)
        domain_students = [clone_params(student) for _ in range(part.K)]
        hashes = [params_hash(p) for p in domain_students] + [params_hash(prev)]
        train_global_cross(view, part, domain_students, teacher, prev,
                           clone_params(student), cfg.schedules, cfg, epoch=0, cache=cache)
        assert [params_hash(p) for p in domain_students] + [params_hash(prev)] == hashes
        assert teacher.params_hash() == build_teacher(teacher.config, 1).params_hash()

    def test_cross_with_k1_and_all_is_noop(self):
        split, teacher, student, view, cache, cfg, part = self._setup(strategy="all", K=1)
        params = clone_params(student)
        before = params_hash(params)
        out, hist = train_global_cross(view, part, [student.params], teacher,
                                       clone_params(student), params, cfg.schedules, cfg,
                                       epoch=0, cache=cache)
        assert hist == []
        assert params_hash(out) == before

    def test_cross_with_k1_single_selection_rejected(self):
        split, teacher, student, view, cache, cfg, part = self._setup(K=1)
        with pytest.raises(ConfigurationError):
            train_global_cross(view, part, [student.params], teacher,
                               clone_params(student), clone_params(student),
                               cfg.schedules, cfg, epoch=0, cache=cache)

    def test_all_strategy_averages_candidates(self):
        split, teacher, student, view, cache, cfg, part = self._setup(strategy="all", K=3)
        domain_students = [clone_params(student) for _ in range(3)]
        params, hist = train_global_cross(view, part, domain_students, teacher,
                                          clone_params(student), clone_params(student),
                                          cfg.schedules, cfg, epoch=0, cache=cache)
        assert len(hist) > 0
        for h in hist:
            assert 0.0 <= h.total <= 6.0

    def test_hc_empty_is_noop(self):
        split, teacher, student, view, cache, cfg, part = self._setup()
        params = clone_params(student)
        before = params_hash(params)
        out, hist = train_global_hc(view, [], teacher, params, cfg, epoch=0, cache=cache)
        assert hist == []
        assert params_hash(out) == before

    def test_hc_overfits_single_sample(self):
        split, teacher, student, view, cache, cfg, part = self._setup()
        cfg.hc_steps = 400
        cfg.learning_rate = 0.01
        t_hash = teacher.params_hash()
        params, hist = train_global_hc(view, [view[0].id], teacher, clone_params(student),
                                       cfg, epoch=0, cache=cache)
        assert hist[-1].total < 0.05
        assert teacher.params_hash() == t_hash


class TestRunCdd:
    def test_schedule_unrolling_and_telemetry(self):
        split = _micro_split(n_train=16, n_pool=8)
        teacher, _ = _micro_models()
        cfg = _RunSettings(E=4, batch_size=4, model_seed=2)
        schedules = CddSchedules(E=4)
        params, telem = run_cdd(split, teacher, schedules, cfg)
        assert [t["K"] for t in telem] == [2, 3, 3, 2]
        assert [t["epoch"] for t in telem] == [0, 1, 2, 3]
        for t in telem:
            assert t["r"] == r_schedule(t["epoch"], 4, 0.5)
            assert t["lambda"] == lambda_schedule(t["epoch"], 4)
            assert len(t["domain_sizes"]) == t["K"]
            assert all(sz == t["hc_size"] + len_lc for sz, len_lc in
                       zip(t["domain_sizes"], [sz - t["hc_size"] for sz in t["domain_sizes"]]))

    def test_epoch_zero_degenerates(self):
        split = _micro_split(n_train=16, n_pool=8)
        teacher, _ = _micro_models()
        cfg = _RunSettings(E=4, batch_size=4)
        _, telem = run_cdd(split, teacher, CddSchedules(E=4), cfg)
        assert telem[0]["r"] == 0.0
        assert telem[0]["lambda"] == 0.0
        assert telem[0]["hc_size"] == 0
        assert telem[0]["hc_losses"] == []

    def test_deterministic(self):
        split = _micro_split(n_train=12, n_pool=6)
        teacher, _ = _micro_models()
        cfg = _RunSettings(E=2, batch_size=4, model_seed=5)
        p1, t1 = run_cdd(split, teacher, CddSchedules(E=2), cfg)
        p2, t2 = run_cdd(split, teacher, CddSchedules(E=2), cfg)
        assert params_hash(p1) == params_hash(p2)
        assert t1 == t2

    def test_telemetry_file_appends_json_lines(self, tmp_path):
        import json

        split = _micro_split(n_train=12, n_pool=6)
        teacher, _ = _micro_models()
        cfg = _RunSettings(E=2, batch_size=4)
        path = tmp_path / "telemetry.log"
        run_cdd(split, teacher, CddSchedules(E=2), cfg, telemetry_path=path)
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        assert json.loads(lines[0])["epoch"] == 0

    def test_domain_ratio_telemetry_uses_eval_labels(self):
        split = _micro_split(n_train=16, n_pool=8, r_noise=0.2)
        teacher, _ = _micro_models()
        cfg = _RunSettings(E=2, batch_size=4)
        _, telem = run_cdd(split, teacher, CddSchedules(E=2), cfg)
        for t in telem:
            for ratio in t["domain_anomaly_ratios"]:
                assert 0.0 <= ratio <= 1.0

    def test_collapse_to_baseline(self):
        """K=1, no high-confidence core, no noise, no regularization, `all`
        selection: per-step losses equal the baseline trainer's exactly.

        The equality is scoped to one epoch: the domain student's moment
        state resets on each warm start, while the baseline's optimizer
        carries its moments across epochs.
        """
        split = _micro_split(n_train=20, n_pool=8, r_noise=0.1)
        teacher, student = _micro_models()
        cfg = _RunSettings(E=1, batch_size=4, strategy="all", model_seed=2)
        schedules = CddSchedules(E=1, r_normal=0.0, sigma_noise=0.0,
                                 k_schedule=((1.0, 1),), lambda_mode="zero")
        cfg.schedules = schedules
        params, telem = run_cdd(split, teacher, schedules, cfg)
        _, rd_hist = train_rd(split.train_view(), teacher, student, cfg)
        cdd_losses = [x for t in telem for x in t["domain_losses"][0]]
        rd_losses = [r.total for r in rd_hist]
        assert len(cdd_losses) == len(rd_losses) > 0
        np.testing.assert_allclose(cdd_losses, rd_losses, atol=1e-8)
        # with a single domain the global student adopts its parameters
        rd_params, _ = train_rd(split.train_view(), teacher, student, cfg)
        assert params_hash(params) == params_hash(rd_params)
