import numpy as np
import pytest

from mincdpnp import (
    CorrespondenceSet,
    DimensionMismatch,
    EmptySet,
    KeypointSet2D,
    KeypointSet3D,
    MatchConfig,
    MissingFeatures,
    NotOneToOne,
    feature_distance,
    feature_distance_matrix,
    match_by_threshold,
    nearest_3d_match,
)

from oracles import feature_distance_scalar, match_pairs_bruteforce


def make_sets(rng, m=5, n=7, dim=16):
    kp2d = KeypointSet2D(rng.uniform(0, 640, size=(m, 2)), rng.normal(size=(m, dim)))
    kp3d = KeypointSet3D(rng.normal(size=(n, 3)), rng.normal(size=(n, dim)))
    return kp2d, kp3d


class TestFeatureDistance:
    def test_identical_unit_vectors(self):
        a = np.zeros(128)
        a[0] = 1.0
        assert feature_distance(a, a) == 0.0

    def test_orthonormal_pair(self):
        a = np.zeros(8)
        b = np.zeros(8)
        a[0] = 1.0
        b[1] = 1.0
        assert feature_distance(a, b) == pytest.approx(np.sqrt(2.0), abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            feature_distance(np.zeros(4), np.zeros(5))

    def test_zero_vector_maps_to_zero(self):
        z = np.zeros(6)
        b = np.full(6, 2.0)
        # normalized zero stays zero, so the distance is just ||b/||b||||
        assert feature_distance(z, b) == pytest.approx(1.0, abs=1e-15)
        assert feature_distance(z, z) == 0.0

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(61)
        for _ in range(50):
            a = rng.normal(size=16)
            b = rng.normal(size=16)
            for normalize in (True, False):
                cfg = MatchConfig(delta=1.0, normalize=normalize)
                want = feature_distance_scalar(a, b, normalize)
                assert feature_distance(a, b, cfg) == pytest.approx(want, abs=1e-12)

    def test_normalized_is_scale_invariant(self):
        rng = np.random.default_rng(67)
        a = rng.normal(size=32)
        b = rng.normal(size=32)
        base = feature_distance(a, b)
        for lam in (1e-3, 7.0, 1e4):
            assert feature_distance(lam * a, b) == pytest.approx(base, abs=1e-12)
            assert feature_distance(a, lam * b) == pytest.approx(base, abs=1e-12)

    def test_unnormalized_plain_l2(self):
        a = np.array([3.0, 0.0])
        b = np.array([0.0, 4.0])
        cfg = MatchConfig(delta=1.0, normalize=False)
        assert feature_distance(a, b, cfg) == pytest.approx(5.0, abs=1e-15)


class TestMatchByThreshold:
    def test_zero_ish_delta_distinct_features_empty(self):
        rng = np.random.default_rng(71)
        kp2d, kp3d = make_sets(rng)
        matches = match_by_threshold(kp2d, kp3d, MatchConfig(delta=1e-12))
        assert len(matches) == 0

    def test_huge_delta_gives_all_pairs(self):
        rng = np.random.default_rng(73)
        kp2d, kp3d = make_sets(rng, m=4, n=6)
        matches = match_by_threshold(kp2d, kp3d, MatchConfig(delta=10.0))
        assert len(matches) == 24
        assert matches.pairs() == {(i, j) for i in range(4) for j in range(6)}

    def test_median_delta_matches_bruteforce(self):
        rng = np.random.default_rng(79)
        kp2d, kp3d = make_sets(rng, m=5, n=7)
        D = feature_distance_matrix(kp2d.features, kp3d.features)
        # midpoint between the two middle distances, so no pair sits on
        # the threshold and fp rounding cannot flip membership
        flat = np.sort(D.ravel())
        delta = float(0.5 * (flat[len(flat) // 2] + flat[len(flat) // 2 + 1]))
        got = match_by_threshold(kp2d, kp3d, MatchConfig(delta=delta))
        want = match_pairs_bruteforce(kp2d.features, kp3d.features, delta)
        assert got.pairs() == {(i, j) for i, j, _ in want}
        got_scores = {(i, j): s for i, j, s in got}
        for i, j, s in want:
            assert got_scores[(i, j)] == pytest.approx(s, abs=1e-12)

    def test_monotone_in_delta(self):
        rng = np.random.default_rng(83)
        kp2d, kp3d = make_sets(rng, m=8, n=9)
        previous = set()
        for delta in (0.2, 0.5, 0.9, 1.4, 2.1):
            current = match_by_threshold(kp2d, kp3d, MatchConfig(delta=delta)).pairs()
            assert previous <= current
            previous = current

    def test_missing_features_raises(self):
        kp2d = KeypointSet2D(np.array([[1.0, 2.0]]))
        kp3d = KeypointSet3D(np.array([[0.0, 0.0, 1.0]]), np.ones((1, 4)))
        with pytest.raises(MissingFeatures):
            match_by_threshold(kp2d, kp3d)


class TestNearest3DMatch:
    def test_singleton(self):
        kp3d = KeypointSet3D(np.zeros((1, 3)), np.array([[1.0, 0.0]]))
        idx, score = nearest_3d_match(np.array([0.0, 1.0]), kp3d)
        assert idx == 0
        assert score == pytest.approx(np.sqrt(2.0), abs=1e-12)

    def test_exact_hit(self):
        rng = np.random.default_rng(89)
        feats = rng.normal(size=(6, 8))
        kp3d = KeypointSet3D(rng.normal(size=(6, 3)), feats)
        idx, score = nearest_3d_match(feats[3], kp3d)
        assert idx == 3
        assert score == pytest.approx(0.0, abs=1e-12)

    def test_agrees_with_linear_scan(self):
        rng = np.random.default_rng(97)
        kp3d = KeypointSet3D(rng.normal(size=(64, 3)), rng.normal(size=(64, 16)))
        for _ in range(20):
            q = rng.normal(size=16)
            idx, score = nearest_3d_match(q, kp3d)
            dists = [feature_distance_scalar(q, f) for f in kp3d.features]
            assert idx == int(np.argmin(dists))
            assert score == pytest.approx(min(dists), abs=1e-12)

    def test_tie_breaks_low_index(self):
        f = np.array([[0.0, 1.0], [1.0, 0.0], [1.0, 0.0]])
        kp3d = KeypointSet3D(np.zeros((3, 3)) + np.arange(3)[:, None], f)
        idx, _ = nearest_3d_match(np.array([1.0, 0.0]), kp3d)
        assert idx == 1

    def test_score_equals_row_minimum(self):
        rng = np.random.default_rng(101)
        kp2d, kp3d = make_sets(rng, m=6, n=11)
        D = feature_distance_matrix(kp2d.features, kp3d.features)
        for i in range(len(kp2d)):
            _, score = nearest_3d_match(kp2d.features[i], kp3d)
            assert score == pytest.approx(D[i].min(), abs=1e-12)

    def test_empty_set_raises(self):
        kp3d = KeypointSet3D(np.zeros((0, 3)), np.zeros((0, 4)))
        with pytest.raises(EmptySet):
            nearest_3d_match(np.zeros(4), kp3d)


class TestContainers:
    def test_duplicate_pixels_rejected(self):
        with pytest.raises(ValueError):
            KeypointSet2D(np.array([[1.0, 2.0], [1.0, 2.0]]))

    def test_feature_count_mismatch_rejected(self):
        with pytest.raises(ValueError):
            KeypointSet2D(np.array([[1.0, 2.0]]), np.ones((2, 4)))

    def test_delta_must_be_positive(self):
        with pytest.raises(ValueError):
            MatchConfig(delta=0.0)
        with pytest.raises(ValueError):
            MatchConfig(delta=-1.0)

    def test_correspondence_one_to_one(self):
        good = CorrespondenceSet([0, 1], [2, 3])
        assert good.is_one_to_one()
        good.require_one_to_one()
        bad = CorrespondenceSet([0, 0], [2, 3])
        assert not bad.is_one_to_one()
        with pytest.raises(NotOneToOne):
            bad.require_one_to_one()

    def test_correspondence_index_bounds(self):
        with pytest.raises(ValueError):
            CorrespondenceSet([0, 5], [0, 1], n2d=3)
        with pytest.raises(ValueError):
            CorrespondenceSet([-1], [0])

    def test_keypoint_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(103)
        kp2d, kp3d = make_sets(rng, m=4, n=5, dim=6)
        p2 = tmp_path / "kp2d.csv"
        p3 = tmp_path / "kp3d.csv"
        kp2d.save_csv(p2)
        kp3d.save_csv(p3)
        back2 = KeypointSet2D.load_csv(p2)
        back3 = KeypointSet3D.load_csv(p3)
        np.testing.assert_array_equal(back2.pixels, kp2d.pixels)
        np.testing.assert_array_equal(back2.features, kp2d.features)
        np.testing.assert_array_equal(back3.points, kp3d.points)
        np.testing.assert_array_equal(back3.features, kp3d.features)

    def test_keypoint_csv_without_features(self, tmp_path):
        kp = KeypointSet3D(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
        path = tmp_path / "pts.csv"
        kp.save_csv(path)
        back = KeypointSet3D.load_csv(path)
        assert back.features is None
        np.testing.assert_array_equal(back.points, kp.points)

    def test_keypoint_json_round_trip(self, tmp_path):
        rng = np.random.default_rng(107)
        kp2d, _ = make_sets(rng, m=3, n=3, dim=4)
        path = tmp_path / "kp.json"
        kp2d.save_json(path)
        back = KeypointSet2D.load_json(path)
        np.testing.assert_array_equal(back.pixels, kp2d.pixels)
        np.testing.assert_array_equal(back.features, kp2d.features)

    def test_correspondence_csv_round_trip(self, tmp_path):
        cs = CorrespondenceSet([0, 1, 2], [5, 4, 3], [0.1, 0.2, 0.30000000000000004])
        path = tmp_path / "pairs.csv"
        cs.save_csv(path)
        back = CorrespondenceSet.load_csv(path)
        np.testing.assert_array_equal(back.idx2d, cs.idx2d)
        np.testing.assert_array_equal(back.idx3d, cs.idx3d)
        np.testing.assert_array_equal(back.scores, cs.scores)

    def test_empty_correspondence_csv(self, tmp_path):
        path = tmp_path / "empty.csv"
        CorrespondenceSet([], [], []).save_csv(path)
        assert len(CorrespondenceSet.load_csv(path)) == 0
