import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rimlab.classifier import BoostParams
from rimlab.core import Mask3D
from rimlab.evaluation import (
    ROC_GRID,
    ScoredLesion,
    SingleClassError,
    average_curves,
    confusion_metrics,
    crossvalidate,
    dice,
    f1_threshold,
    roc_pr_curves,
    stratified_folds,
    subject_agreement,
)

from .oracles import concordance_auc, sweep_best_f1


def scored_from(labels, probs, subjects=None, fold=0):
    subjects = subjects or [f"sub{i:03d}" for i in range(len(labels))]
    return [
        ScoredLesion(lesion_id=f"les{i:03d}", subject_id=s, label=int(y),
                     probability=float(p), fold=fold)
        for i, (y, p, s) in enumerate(zip(labels, probs, subjects))
    ]


def mask(data):
    return Mask3D(data=np.asarray(data, dtype=bool), spacing=(1.0, 1.0, 3.0))


class TestDice:
    def test_known_overlap(self):
        a = np.zeros((4, 4, 2), dtype=bool)
        b = np.zeros((4, 4, 2), dtype=bool)
        a[0:2, 0:2, 0] = True  # 4 voxels
        b[1:3, 0:2, 0] = True  # 4 voxels, overlap 2
        assert dice(mask(a), mask(b)) == pytest.approx(2 * 2 / 8)

    def test_identical_is_one(self):
        a = np.random.default_rng(0).random((5, 5, 2)) < 0.5
        assert dice(mask(a), mask(a)) == 1.0

    def test_disjoint_is_zero(self):
        a = np.zeros((4, 4, 1), dtype=bool)
        b = np.zeros((4, 4, 1), dtype=bool)
        a[0, 0, 0] = True
        b[1, 1, 0] = True
        assert dice(mask(a), mask(b)) == 0.0

    def test_both_empty_is_one(self):
        z = np.zeros((3, 3, 1), dtype=bool)
        assert dice(mask(z), mask(z)) == 1.0

    def test_one_empty_is_zero(self):
        z = np.zeros((3, 3, 1), dtype=bool)
        a = z.copy()
        a[0, 0, 0] = True
        assert dice(mask(a), mask(z)) == 0.0

    def test_dims_mismatch(self):
        with pytest.raises(ValueError, match="dims"):
            dice(mask(np.zeros((3, 3, 1), dtype=bool)),
                 mask(np.zeros((4, 3, 1), dtype=bool)))

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a = mask(rng.random((6, 6, 2)) < 0.4)
        b = mask(rng.random((6, 6, 2)) < 0.4)
        assert dice(a, b) == dice(b, a)


class TestScoredLesion:
    def test_validation(self):
        with pytest.raises(ValueError, match="probability"):
            ScoredLesion("a", "s", 1, 1.5)
        with pytest.raises(ValueError, match="label"):
            ScoredLesion("a", "s", 2, 0.5)


class TestRocCurves:
    def test_perfect_separation(self):
        c = roc_pr_curves(scored_from([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]))
        assert c.roc_auc == 1.0
        assert c.proc_auc == 1.0
        assert c.pr_auc == 1.0

    def test_reversed_scores(self):
        c = roc_pr_curves(scored_from([1, 1, 0, 0], [0.1, 0.2, 0.8, 0.9]))
        assert c.roc_auc == 0.0

    @pytest.mark.parametrize("seed", range(15))
    def test_auc_matches_concordance_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(8, 60))
        labels = (rng.random(n) < 0.5).astype(int)
        if labels.min() == labels.max():
            pytest.skip("single-class draw")
        # coarse grid forces plenty of ties
        probs = np.round(rng.random(n), 1)
        c = roc_pr_curves(scored_from(labels, probs))
        assert c.roc_auc == pytest.approx(
            concordance_auc(labels.tolist(), probs.tolist()), abs=1e-12)

    def test_staircase_monotone_and_bounded(self):
        rng = np.random.default_rng(3)
        labels = (rng.random(30) < 0.4).astype(int)
        labels[0], labels[1] = 0, 1
        c = roc_pr_curves(scored_from(labels, rng.random(30)))
        assert np.all(np.diff(c.fpr) >= 0) and np.all(np.diff(c.tpr) >= 0)
        assert c.fpr[0] == 0.0 and c.tpr[0] == 0.0
        assert c.fpr[-1] == 1.0 and c.tpr[-1] == 1.0
        assert 0.0 <= c.proc_auc <= 1.0
        assert 0.0 <= c.pr_auc <= 1.0

    def test_proc_interpolates_at_limit(self):
        # one negative at high score: FPR jumps 0 -> 1 on a staircase with
        # TPR 0.5; the partial curve must interpolate at FPR = 0.1
        c = roc_pr_curves(scored_from([1, 0, 1], [0.9, 0.8, 0.1]))
        # points: (0,0) -> (0, 1/2) -> (1, 1/2) -> (1, 1); at the limit
        # tpr(0.1) = 0.5, so area = 0.1 * 0.5 and normalized 0.5
        assert c.proc_auc == pytest.approx(0.5)

    def test_single_class_raises(self):
        with pytest.raises(SingleClassError):
            roc_pr_curves(scored_from([1, 1], [0.2, 0.8]))


class TestAverageCurves:
    def test_single_fold_identity_on_grid(self):
        x = np.array([0.0, 0.5, 1.0])
        y = np.array([0.0, 0.6, 1.0])
        gx, gy = average_curves([(x, y)])
        assert gx is ROC_GRID
        assert gy[0] == 0.0
        assert gy[np.searchsorted(gx, 0.5)] == 0.6
        assert gy[-1] == 1.0

    def test_mean_of_two_staircases(self):
        a = (np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        b = (np.array([0.0, 1.0]), np.array([1.0, 1.0]))
        _, gy = average_curves([a, b])
        # below x=1 the first staircase reads 0, the second 1
        assert gy[0] == 0.5
        assert gy[-1] == 1.0

    def test_right_continuous_lookup(self):
        x = np.array([0.0, 0.3, 0.7, 1.0])
        y = np.array([0.0, 0.4, 0.8, 1.0])
        _, gy = average_curves([(x, y)])
        g = ROC_GRID
        assert gy[np.searchsorted(g, 0.3) - 1] == 0.0  # just below the step
        assert gy[np.searchsorted(g, 0.3)] == 0.4      # at the step

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            average_curves([])


class TestF1Threshold:
    @pytest.mark.parametrize("seed", range(15))
    def test_matches_sweep_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(6, 50))
        labels = (rng.random(n) < 0.5).astype(int)
        if labels.min() == labels.max():
            pytest.skip("single-class draw")
        probs = np.round(rng.random(n), 1)
        t = f1_threshold(scored_from(labels, probs))
        _, t_ref = sweep_best_f1(labels, probs)
        assert t == pytest.approx(t_ref, abs=1e-12)

    def test_separable_case(self):
        t = f1_threshold(scored_from([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]))
        assert 0.2 < t <= 0.8
        assert t == pytest.approx(0.5)

    def test_single_class_raises(self):
        with pytest.raises(SingleClassError):
            f1_threshold(scored_from([0, 0], [0.2, 0.8]))


class TestConfusionMetrics:
    def test_hand_computed(self):
        scored = scored_from([1, 1, 0, 0, 1], [0.9, 0.4, 0.6, 0.1, 0.8])
        m = confusion_metrics(scored, {0: 0.5})
        # preds: 1, 0, 1, 0, 1 -> tp=2 fp=1 fn=1 tn=1
        assert (m.tp, m.fp, m.fn, m.tn) == (2, 1, 1, 1)
        assert m.accuracy == pytest.approx(3 / 5)
        assert m.f1 == pytest.approx(4 / 6)
        assert m.sensitivity == pytest.approx(2 / 3)
        assert m.specificity == pytest.approx(1 / 2)
        assert m.precision == pytest.approx(2 / 3)

    def test_per_fold_thresholds(self):
        scored = scored_from([1, 1], [0.6, 0.6]) + [
            ScoredLesion("x", "s", 1, 0.6, fold=1)]
        m = confusion_metrics(scored, {0: 0.5, 1: 0.7})
        assert (m.tp, m.fn) == (2, 1)


class TestStratifiedFolds:
    def test_counts_balanced_within_groups(self):
        rng = np.random.default_rng(0)
        counts = {f"s{i:03d}": int(rng.integers(0, 10)) for i in range(57)}
        folds = stratified_folds(counts, k=5, seed=3)
        assert set(folds) == set(counts)
        assert set(folds.values()) <= set(range(5))

        def group(c):
            return 0 if c == 0 else 1 if c <= 3 else 2 if c <= 6 else 3

        for gid in range(4):
            members = [s for s in counts if group(counts[s]) == gid]
            if not members:
                continue
            sizes = np.bincount([folds[s] for s in members], minlength=5)
            assert sizes.max() - sizes.min() <= 1

    def test_deterministic_per_seed(self):
        counts = {f"s{i}": i % 9 for i in range(30)}
        assert stratified_folds(counts, 5, 7) == stratified_folds(counts, 5, 7)

    def test_k_exceeds_subjects(self):
        with pytest.raises(ValueError, match="exceeds"):
            stratified_folds({"a": 1, "b": 2}, k=3)


class TestSubjectAgreement:
    def test_perfect_agreement(self):
        x = np.array([0.0, 2.0, 5.0, 9.0])
        a = subject_agreement(x, x)
        assert a.pearson_rho == pytest.approx(1.0)
        assert a.ci_low <= a.pearson_rho <= a.ci_high
        assert a.mse == 0.0

    def test_fisher_ci_hand_computed(self):
        pred = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        true = np.array([1.0, 2.0, 3.0, 4.0, 6.0, 5.0])
        a = subject_agreement(pred, true)
        rho = float(np.corrcoef(pred, true)[0, 1])
        z = math.atanh(rho)
        se = 1.0 / math.sqrt(6 - 3)
        assert a.pearson_rho == pytest.approx(rho)
        assert a.ci_low == pytest.approx(math.tanh(z - 1.959963984540054 * se))
        assert a.ci_high == pytest.approx(math.tanh(z + 1.959963984540054 * se))
        assert a.mse == pytest.approx(2 / 6)

    def test_degenerate_variance_gives_none(self):
        a = subject_agreement(np.ones(5), np.arange(5.0))
        assert a.pearson_rho is None and a.ci_low is None
        assert a.mse > 0

    def test_too_few_subjects(self):
        assert subject_agreement(np.array([1.0, 2.0]),
                                 np.array([1.0, 2.0])).pearson_rho is None

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            subject_agreement(np.zeros(3), np.zeros(4))


@st.composite
def labeled_probs(draw):
    n = draw(st.integers(6, 40))
    labels = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    if min(labels) == max(labels):
        labels[0] = 1 - labels[0]
    probs = draw(st.lists(
        st.floats(0.0, 1.0, allow_nan=False), min_size=n, max_size=n))
    return labels, probs


@given(labeled_probs())
@settings(max_examples=60, deadline=None)
def test_auc_concordance_property(case):
    labels, probs = case
    c = roc_pr_curves(scored_from(labels, probs))
    assert c.roc_auc == pytest.approx(concordance_auc(labels, probs), abs=1e-9)


@pytest.fixture(scope="module")
def cv_report():
    rng = np.random.default_rng(11)
    n_subjects, per = 24, 4
    subjects = [f"s{i:03d}" for i in range(n_subjects) for _ in range(per)]
    n = len(subjects)
    y = (rng.random(n) < 0.5).astype(int)
    X = rng.normal(size=(n, 6))
    X[:, 0] = y * 3.0 + rng.normal(scale=0.2, size=n)
    lesion_ids = [f"les{i:03d}" for i in range(n)]
    counts = {s: 0 for s in set(subjects)}
    for s, lab in zip(subjects, y):
        counts[s] += int(lab)
    folds = stratified_folds(counts, k=4, seed=1)
    params = BoostParams(n_trees=30, max_depth=3, learning_rate=0.2)
    return crossvalidate(X, y, lesion_ids, subjects, folds, params), y


class TestCrossvalidate:
    def test_each_lesion_scored_once(self, cv_report):
        report, y = cv_report
        assert len(report.scored) == y.size
        assert len({s.lesion_id for s in report.scored}) == y.size

    def test_subject_fold_integrity(self, cv_report):
        report, _ = cv_report
        by_subject = {}
        for s in report.scored:
            by_subject.setdefault(s.subject_id, set()).add(s.fold)
        assert all(len(fs) == 1 for fs in by_subject.values())

    def test_separable_problem_scores_high(self, cv_report):
        report, _ = cv_report
        assert report.pooled.accuracy >= 0.95
        assert report.mean_roc_auc >= 0.99

    def test_report_serializes(self, cv_report):
        import json

        report, _ = cv_report
        doc = report.to_json_dict()
        json.dumps(doc)
        assert doc["pooled"]["confusion"]["tp"] == report.pooled.tp
        assert len(doc["folds"]) == 4
        assert len(doc["importance"]) == 6  # plain f0..f5 names don't group
        assert len(doc["averaged_roc"]["fpr"]) == ROC_GRID.size

    def test_single_class_fold_raises_with_context(self):
        X = np.random.default_rng(0).normal(size=(8, 2))
        y = np.array([1, 1, 1, 1, 0, 0, 0, 0])
        subjects = [f"s{i}" for i in range(8)]
        folds = {s: (0 if i < 4 else 1) for i, s in enumerate(subjects)}
        # training rows for fold 0 are all rim-, which train() refuses
        with pytest.raises(ValueError, match="fold 0"):
            crossvalidate(X, y, [f"l{i}" for i in range(8)], subjects, folds)
