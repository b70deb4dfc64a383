import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmd.clustering import KMeansConfig
from bmd.labeling import (
    LabelBank,
    PrototypeBank,
    SamplingSpec,
    bmp_prototypes,
    bp_prototypes,
    compute_M,
    mono_prototypes,
    mono_refine,
    naive_labels,
    nearest_prototype_labels,
    prototype_scores,
    top_m_select,
)
from bmd.numerics import make_rng, softmax_rows


def _unit(deg):
    r = np.deg2rad(deg)
    return np.array([np.cos(r), np.sin(r)])


def _random_problem(seed, n=60, d=5, K=3):
    rng = make_rng(seed)
    feats = rng.normal(size=(n, d))
    probs = softmax_rows(rng.normal(size=(n, K)) * 2)
    return feats, probs


class TestNaive:
    def test_argmax(self):
        assert naive_labels([[0.2, 0.8]]).hard_labels.tolist() == [1]

    def test_tie_lowest_index(self):
        assert naive_labels([[0.5, 0.5]]).hard_labels.tolist() == [0]

    def test_linear_scan_oracle(self):
        _, probs = _random_problem(0, n=100, K=5)
        expected = []
        for row in probs:
            best = 0
            for k in range(1, len(row)):
                if row[k] > row[best]:
                    best = k
            expected.append(best)
        assert naive_labels(probs).hard_labels.tolist() == expected


class TestMono:
    def test_uniform_probs_give_global_mean(self):
        feats, _ = _random_problem(1)
        g = feats / np.linalg.norm(feats, axis=1, keepdims=True)
        bank = mono_prototypes(feats, np.full((60, 3), 1 / 3))
        mean = g.mean(axis=0)
        for k in range(3):
            np.testing.assert_allclose(bank.prototypes[k, 0], mean / np.linalg.norm(mean), atol=1e-12)

    def test_one_hot_probs_give_class_means(self):
        feats, _ = _random_problem(2)
        g = feats / np.linalg.norm(feats, axis=1, keepdims=True)
        labels = np.arange(60) % 3
        bank = mono_prototypes(feats, np.eye(3)[labels])
        for k in range(3):
            m = g[labels == k].mean(axis=0)
            np.testing.assert_allclose(bank.prototypes[k, 0], m / np.linalg.norm(m), atol=1e-12)

    def test_weighted_sum_oracle(self):
        feats, probs = _random_problem(3, n=50, K=3)
        g = feats / np.linalg.norm(feats, axis=1, keepdims=True)
        bank = mono_prototypes(feats, probs)
        for k in range(3):
            num = np.zeros(5)
            den = 0.0
            for i in range(50):
                num += probs[i, k] * g[i]
                den += probs[i, k]
            c = num / den
            np.testing.assert_allclose(bank.prototypes[k, 0], c / np.linalg.norm(c), atol=1e-12)

    def test_degenerate_class(self):
        feats, _ = _random_problem(4, K=3)
        probs = np.zeros((60, 3))
        probs[:, :2] = 0.5
        bank = mono_prototypes(feats, probs)
        assert bank.degenerate.tolist() == [False, False, True]
        np.testing.assert_array_equal(bank.prototypes[2, 0], 0.0)
        labels = nearest_prototype_labels(feats, bank).hard_labels
        assert 2 not in labels

    def test_all_degenerate_raises(self):
        bank = PrototypeBank(np.zeros((2, 1, 3)), degenerate=np.array([True, True]))
        with pytest.raises(ValueError):
            nearest_prototype_labels(np.ones((2, 3)), bank)


class TestNearestPrototype:
    def test_exact_match(self):
        protos = np.eye(3)[:, None, :]
        out = nearest_prototype_labels([[0.0, 0.0, 1.0]], PrototypeBank(protos))
        assert out.hard_labels.tolist() == [2]

    def test_tie_lowest(self):
        protos = np.eye(2)[:, None, :]
        out = nearest_prototype_labels([[1.0, 1.0]], PrototypeBank(protos))
        assert out.hard_labels.tolist() == [0]

    def test_exhaustive_scan_oracle(self):
        rng = make_rng(5)
        feats = rng.normal(size=(40, 4))
        protos = rng.normal(size=(6, 4))
        bank = PrototypeBank.from_centroids(protos[:, None, :])
        expected = []
        for f in feats:
            dists = [1 - f @ p / (np.linalg.norm(f) * np.linalg.norm(p)) for p in protos]
            expected.append(int(np.argmin(dists)))
        assert nearest_prototype_labels(feats, bank).hard_labels.tolist() == expected

    def test_rejects_multicentric(self):
        with pytest.raises(ValueError):
            nearest_prototype_labels(np.ones((1, 2)), PrototypeBank(np.ones((2, 2, 2))))


class TestMonoRefine:
    angles = [0, 10, 50, 80, 90, 100]

    def test_one_round_hand_computed(self):
        feats = np.array([_unit(a) for a in self.angles])
        start = LabelBank(hard_labels=np.array([0, 0, 1, 1, 1, 1]), strategy="mono")
        bank, out = mono_refine(feats, start, rounds=1, num_classes=2)
        # centroid of class 0 sits at 5 degrees; class 1 averages 50..100
        c1 = sum(_unit(a) for a in [50, 80, 90, 100]) / 4
        ang1 = np.rad2deg(np.arctan2(c1[1], c1[0]))
        np.testing.assert_allclose(bank.prototypes[0, 0], _unit(5), atol=1e-12)
        np.testing.assert_allclose(bank.prototypes[1, 0], _unit(ang1), atol=1e-12)
        # 50 deg is 45 from class 0 and about 30 from class 1
        assert out.hard_labels.tolist() == [0, 0, 1, 1, 1, 1]

    def test_converged_is_fixed_point(self):
        feats = np.array([_unit(a) for a in self.angles])
        start = LabelBank(hard_labels=np.array([0, 0, 1, 1, 1, 1]), strategy="mono")
        _, out = mono_refine(feats, start, rounds=5, num_classes=2)
        assert out.hard_labels.tolist() == start.hard_labels.tolist()

    def test_permutation(self):
        feats, probs = _random_problem(6)
        start = naive_labels(probs)
        perm = make_rng(0).permutation(60)
        _, a = mono_refine(feats, start, rounds=2, num_classes=3)
        _, b = mono_refine(feats[perm], LabelBank(start.hard_labels[perm], "naive"), rounds=2, num_classes=3)
        np.testing.assert_array_equal(a.hard_labels[perm], b.hard_labels)

    def test_empty_class_keeps_previous(self):
        feats = np.array([_unit(a) for a in [0, 5, 10]])
        init = PrototypeBank(np.array([[_unit(0)], [_unit(90)]]))
        start = LabelBank(hard_labels=np.array([0, 0, 0]), strategy="mono")
        bank, _ = mono_refine(feats, start, rounds=1, initial=init)
        np.testing.assert_allclose(bank.prototypes[1, 0], _unit(90), atol=1e-12)


class TestSelection:
    def test_compute_M(self):
        assert compute_M(SamplingSpec(num_classes=10, n_t=300, ratio=3)) == 10
        assert compute_M(SamplingSpec(num_classes=5, n_t=10, ratio=3)) == 1
        assert compute_M(SamplingSpec(num_classes=12, n_t=55000, ratio=3)) == 55000 // 36 == 1527

    def test_top_m_basic(self):
        assert top_m_select([0.1, 0.9, 0.5], 2).tolist() == [1, 2]

    def test_top_m_ties(self):
        assert top_m_select([0.3, 0.3, 0.3, 0.3], 2).tolist() == [0, 1]

    def test_top_m_more_than_n(self):
        assert top_m_select([0.3, 0.1], 5).tolist() == [0, 1]

    def test_full_sort_oracle(self):
        s = make_rng(9).random(1000)
        oracle = sorted(range(1000), key=lambda i: (-s[i], i))[:37]
        assert top_m_select(s, 37).tolist() == sorted(oracle)

    @given(st.lists(st.integers(0, 5), min_size=1, max_size=50), st.integers(1, 60))
    @settings(max_examples=200, deadline=None)
    def test_tie_vectors_property(self, vals, M):
        s = np.array(vals, dtype=float)
        oracle = sorted(range(len(s)), key=lambda i: (-s[i], i))[:M]
        assert top_m_select(s, M).tolist() == sorted(oracle)


def _two_cluster_problem(n_per=40, seed=0):
    rng = make_rng(seed)
    a = rng.normal([5.0, 0.0, 0.0], 0.2, size=(n_per, 3))
    b = rng.normal([0.0, 5.0, 0.0], 0.2, size=(n_per, 3))
    feats = np.vstack([a, b])
    truth = np.repeat([0, 1], n_per)
    probs = softmax_rows(feats[:, :2])
    return feats, probs, truth


class TestBalancedPrototypes:
    def test_single_class(self):
        feats, probs = _random_problem(7, K=1)
        spec = SamplingSpec(num_classes=1, n_t=60, ratio=3)
        bank, labels = bp_prototypes(feats, np.ones((60, 1)), spec, rounds=0)
        g = feats / np.linalg.norm(feats, axis=1, keepdims=True)
        m = g[:20].mean(axis=0)  # all scores tie: the first M=20 rows
        np.testing.assert_allclose(bank.prototypes[0, 0], m / np.linalg.norm(m), atol=1e-12)
        assert set(labels.hard_labels.tolist()) == {0}

    def test_separable_recovers_truth(self):
        feats, probs, truth = _two_cluster_problem()
        spec = SamplingSpec(num_classes=2, n_t=80, ratio=3)
        assert spec.M < 40
        for rounds in (0, 2):
            _, labels = bp_prototypes(feats, probs, spec, rounds=rounds)
            np.testing.assert_array_equal(labels.hard_labels, truth)
            _, labels = bmp_prototypes(feats, probs, spec, S=3, rounds=rounds)
            np.testing.assert_array_equal(labels.hard_labels, truth)

    def test_fixed_point_rounds(self):
        feats, probs, _ = _two_cluster_problem()
        spec = SamplingSpec(num_classes=2, n_t=80, ratio=3)
        b0, l0 = bp_prototypes(feats, probs, spec, rounds=0)
        b1, l1 = bp_prototypes(feats, probs, spec, rounds=1)
        if all(np.array_equal(x, y) for x, y in zip(l0.selections, l1.selections)):
            np.testing.assert_array_equal(b0.prototypes, b1.prototypes)

    def test_balance_selection_sizes(self):
        feats, probs = _random_problem(8, n=90, K=3)
        spec = SamplingSpec(num_classes=3, n_t=90, ratio=3)
        for fn in (lambda: bp_prototypes(feats, probs, spec),
                   lambda: bmp_prototypes(feats, probs, spec, S=2)):
            _, labels = fn()
            assert [len(s) for s in labels.selections] == [10, 10, 10]

    def test_soft_labels_row_stochastic(self):
        feats, probs = _random_problem(9)
        _, labels = bmp_prototypes(feats, probs, SamplingSpec(3, 60), S=3)
        np.testing.assert_allclose(labels.soft_labels.sum(axis=1), 1.0, atol=1e-9)

    def test_deterministic(self):
        feats, probs = _random_problem(10)
        spec = SamplingSpec(3, 60)
        kcfg = KMeansConfig(num_clusters=2, seed=4)
        _, a = bmp_prototypes(feats, probs, spec, S=2, kcfg=kcfg)
        _, b = bmp_prototypes(feats, probs, spec, S=2, kcfg=kcfg)
        np.testing.assert_array_equal(a.hard_labels, b.hard_labels)
        np.testing.assert_array_equal(a.soft_labels, b.soft_labels)

    @pytest.mark.parametrize("seed", range(10))
    def test_reduction_s1_matches_bp(self, seed):
        feats, probs = _random_problem(seed, n=80, d=6, K=4)
        spec = SamplingSpec(4, 80)
        _, bp = bp_prototypes(feats, probs, spec, rounds=2)
        _, bmp = bmp_prototypes(feats, probs, spec, S=1, kcfg=KMeansConfig(1, seed=seed), rounds=2)
        np.testing.assert_array_equal(bp.hard_labels, bmp.hard_labels)
        np.testing.assert_array_equal(bp.soft_labels, bmp.soft_labels)

    def test_permutation_equivariance(self):
        feats, probs = _random_problem(11)
        spec = SamplingSpec(3, 60)
        perm = make_rng(1).permutation(60)
        _, a = bp_prototypes(feats, probs, spec)
        _, b = bp_prototypes(feats[perm], probs[perm], spec)
        np.testing.assert_array_equal(a.hard_labels[perm], b.hard_labels)


class TestMulticentric:
    """Class A has a major mode at 0 deg and a minor one at 100 deg; class B
    sits at 60 deg. A single prototype for A lands near 28 deg, which is
    farther from the minor mode than B is."""

    def _problem(self):
        feats = np.array([_unit(0)] * 6 + [_unit(100)] * 3 + [_unit(60)] * 9)
        probs = np.array([[0.9, 0.1]] * 6 + [[0.8, 0.2]] * 3 + [[0.1, 0.9]] * 9)
        truth = np.array([0] * 9 + [1] * 9)
        return feats, probs, truth, SamplingSpec(num_classes=2, n_t=18, ratio=1)

    def _exhaustive_labels(self, feats, bank):
        out = []
        for f in feats:
            best_k, best = 0, -np.inf
            for k in range(bank.num_classes):
                s = max(np.exp(f @ c) for c in bank.prototypes[k])
                if s > best:
                    best_k, best = k, s
            out.append(best_k)
        return out

    def test_two_prototypes_capture_minor_mode(self):
        feats, probs, truth, spec = self._problem()
        assert spec.M == 9
        bank, labels = bmp_prototypes(feats, probs, spec, S=2, kcfg=KMeansConfig(2, seed=0), rounds=0)
        got = sorted(map(tuple, np.round(bank.prototypes[0], 12)))
        want = sorted(map(tuple, np.round([_unit(0), _unit(100)], 12)))
        assert got == want
        assert labels.hard_labels.tolist() == self._exhaustive_labels(feats, bank)
        np.testing.assert_array_equal(labels.hard_labels, truth)

    def test_single_prototype_mislabels_minor_mode(self):
        feats, probs, truth, spec = self._problem()
        bank, labels = bmp_prototypes(feats, probs, spec, S=1, rounds=0)
        c = bank.prototypes[0, 0]
        assert np.rad2deg(np.arctan2(c[1], c[0])) == pytest.approx(28.3, abs=0.1)
        assert labels.hard_labels.tolist() == self._exhaustive_labels(feats, bank)
        assert labels.hard_labels[6:9].tolist() == [1, 1, 1]

    def test_feature_on_prototype_with_nonpositive_rivals(self):
        bank = PrototypeBank(np.array([[_unit(0), _unit(45)], [_unit(135), _unit(180)]]))
        labels = np.argmax(prototype_scores([_unit(45)], bank), axis=1)
        assert labels.tolist() == [0]
        bank2 = PrototypeBank(np.array([[_unit(90), _unit(180)], [_unit(0), _unit(-90)]]))
        assert np.argmax(prototype_scores([_unit(-90)], bank2), axis=1).tolist() == [1]
