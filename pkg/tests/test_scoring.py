import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tlsreflect.core import GtLabel, PointCloud, PredLabel, SpatialIndex
from tlsreflect.descriptor import RelsfhDescriptor, mirror_point
from tlsreflect.planes import Plane
from tlsreflect.scoring import (ScoreTable, ScoringConfig, combined_score, directed_hausdorff,
                                feature_distance, hausdorff, remove_virtual, score_cloud, score_point)

from baselines import hellinger


def brute_directed(a, b):
    n = len(a)
    x = [i / (n - 1) if n > 1 else 0.0 for i in range(n)]
    worst = 0.0
    for i in range(n):
        best = math.inf
        for j in range(n):
            dx, dy = x[i] - x[j], a[i] - b[j]
            best = min(best, math.sqrt(dx * dx + dy * dy))
        worst = max(worst, best)
    return worst


def brute_hausdorff(a, b):
    return max(brute_directed(a, b), brute_directed(b, a))


def random_hist(r, n=11):
    h = r.random(n) * (r.random(n) < 0.7)
    if h.sum() == 0:
        h[r.integers(n)] = 1.0
    return h / h.sum()


hist_pairs = st.integers(0, 2 ** 32 - 1).map(lambda s: np.random.default_rng(s)).map(
    lambda r: (random_hist(r), random_hist(r), random_hist(r)))


# ---------------------------------------------------------------------------
# Hausdorff


def test_directed_examples():
    assert directed_hausdorff([1, 0, 0], [0, 1, 0]) == 0.5
    assert directed_hausdorff([1, 0], [0, 1]) == 1.0
    assert directed_hausdorff([0.2, 0.3, 0.5], [0.2, 0.3, 0.5]) == 0.0
    assert directed_hausdorff([1.0], [0.25]) == 0.75


def test_hausdorff_examples():
    assert hausdorff([1, 0, 0], [0, 1, 0]) == 0.5
    assert hausdorff([1, 0], [0, 1]) == 1.0


def test_mismatched_lengths_rejected():
    with pytest.raises(ValueError):
        hausdorff([1, 0], [1, 0, 0])
    with pytest.raises(ValueError):
        directed_hausdorff([], [])


@given(hist_pairs)
def test_hausdorff_equals_brute_force(abc):
    a, b, _ = abc
    assert hausdorff(a, b) == brute_hausdorff(a.tolist(), b.tolist())
    assert directed_hausdorff(a, b) == brute_directed(a.tolist(), b.tolist())


@given(hist_pairs)
def test_hausdorff_pseudometric(abc):
    a, b, c = abc
    assert hausdorff(a, a) == 0.0
    assert hausdorff(a, b) == hausdorff(b, a)
    assert hausdorff(a, c) <= hausdorff(a, b) + hausdorff(b, c) + 1e-12


@pytest.mark.parametrize("n", [5, 11, 21])
def test_peak_shift_robust_compared_with_hellinger(n):
    r = np.random.default_rng(n)
    for _ in range(200):
        # unimodal bump over up to three adjacent bins, shifted one bin right
        w = int(r.integers(1, 4))
        start = int(r.integers(0, n - w - 1))
        a = np.zeros(n)
        bump = np.sort(r.random(w))[::-1] if r.random() < 0.5 else np.sort(r.random(w))
        a[start:start + w] = bump + 1e-3
        a /= a.sum()
        b = np.roll(a, 1)
        h = hausdorff(a, b)
        assert h <= 1 / (n - 1) + np.max(np.abs(a - b)) + 1e-12
        if w == 1:
            # disjoint supports: Hellinger saturates at 1, Hausdorff sees one bin of drift
            assert hellinger(a, b)[0] == pytest.approx(1.0)
            assert h < hellinger(a, b)[0]


# ---------------------------------------------------------------------------
# feature distance and score formula


def desc(a, d, count=5):
    return RelsfhDescriptor(np.asarray(a, float), np.asarray(d, float), count)


def test_feature_distance_examples():
    a = desc([0.5, 0.5, 0], [1, 0])
    assert feature_distance(a, a) == 0.0
    b = desc([0.5, 0.5, 0], [0.6, 0.4])
    assert hausdorff([1, 0], [0.6, 0.4]) == pytest.approx(0.4)
    assert feature_distance(a, b) == pytest.approx(0.2)
    assert feature_distance(a, desc([0, 0, 0], [0, 0], 0)) == math.inf


@given(hist_pairs, hist_pairs)
def test_feature_distance_is_mean_of_oracles(p, q):
    da, db = desc(p[0], q[0]), desc(p[1], q[1])
    expect = 0.5 * (brute_hausdorff(p[0].tolist(), p[1].tolist())
                    + brute_hausdorff(q[0].tolist(), q[1].tolist()))
    assert feature_distance(da, db) == pytest.approx(expect, rel=1e-15)


def test_score_closed_form():
    sym, sim, v = combined_score(0.15, 0.0, 0.15, 0.5)
    assert float(v) == pytest.approx(math.exp(-1), rel=1e-15)
    assert float(v) == pytest.approx(0.3679, abs=5e-5)
    sym, sim, v = combined_score(math.inf, 0.0, 0.1, 0.25)
    assert float(v) == 0.0


@given(st.floats(0, 5), st.floats(0, 5), st.floats(0, 5), st.floats(0.01, 1), st.floats(0.01, 1))
def test_score_monotone(g1, g2, h, s1, s2):
    lo, hi = sorted((g1, g2))
    assert combined_score(hi, h, s1, s2)[2] <= combined_score(lo, h, s1, s2)[2]
    assert combined_score(h, hi, s1, s2)[2] <= combined_score(h, lo, s1, s2)[2]


# ---------------------------------------------------------------------------
# scoring on clouds


def mirrored_pair_cloud():
    """A real bumpy patch in front of the plane y = -3 and its exact mirror image behind it."""
    r = np.random.default_rng(0)
    uv = r.uniform(-1.5, 1.5, (3000, 2))
    y = -1.0 + 0.2 * np.sin(2 * uv[:, 0]) + r.normal(0, 0.003, 3000)
    real = np.column_stack([uv[:, 0] + 2.0, y, uv[:, 1]])
    plane = Plane([0, 1.0, 0], 3.0)  # y = -3, normal toward the scanner at the origin
    virt = mirror_point(real, plane)
    pos = np.vstack([real, virt])
    gt = np.r_[np.zeros(3000), np.ones(3000)].astype(np.uint8)
    return PointCloud(positions=pos, gt_label=gt), plane


def test_exact_virtual_point_scores_high():
    cloud, plane = mirrored_pair_cloud()
    idx = SpatialIndex(cloud.positions)
    cfg = ScoringConfig()
    for q in (3000, 3500, 4321):
        rec = score_point(cloud, idx, q, [plane], cfg)
        assert rec.mirror_gap <= 1e-12
        assert rec.hausdorff <= 1e-9
        assert rec.virtual_score >= 0.95
        assert rec.matched_neighbor == q - 3000


def test_front_point_not_a_candidate():
    cloud, plane = mirrored_pair_cloud()
    idx = SpatialIndex(cloud.positions)
    assert score_point(cloud, idx, 10, [plane]) is None
    table = score_cloud(cloud, [plane])
    assert table.point_id.min() >= 3000


def test_table_invariants_and_point_agreement():
    cloud, plane = mirrored_pair_cloud()
    far = Plane([0, 1.0, 0], 10.0)  # y = -10, nothing behind it
    table = score_cloud(cloud, [far, plane], ScoringConfig(chunk=700))
    assert len(table) == 3000 and np.all(table.plane_id == 1)
    assert np.array_equal(table.virtual_score, table.sym_score * table.sim_score)
    cfg = ScoringConfig()
    np.testing.assert_allclose(table.sym_score, np.exp(-table.mirror_gap / cfg.sigma_sym), rtol=1e-15)
    np.testing.assert_allclose(table.sim_score, np.exp(-table.hausdorff / cfg.sigma_sim), rtol=1e-15)
    idx = SpatialIndex(cloud.positions)
    for i in (0, 17, 2999):
        rec = score_point(cloud, idx, int(table.point_id[i]), [far, plane], cfg)
        assert rec.virtual_score == pytest.approx(table.virtual_score[i], rel=1e-12)
        assert rec.matched_neighbor == table.matched_neighbor[i]


def test_unmatched_mirror_scores_zero():
    pos = np.array([[0, -5.0, 0], [0.1, -5.0, 0], [0, -5.0, 0.1], [0.1, -5.0, 0.1]])
    cloud = PointCloud(positions=pos)
    table = score_cloud(cloud, [Plane([0, 1.0, 0], 3.0)], ScoringConfig(normal_k=3))
    assert len(table) == 4
    assert np.all(table.virtual_score == 0) and np.all(table.matched_neighbor == -1)
    assert np.all(np.isinf(table.mirror_gap))


def test_scoring_deterministic(small_cloud, small_spec):
    planes = [Plane(n, d) for n, d in small_spec.glass_planes()]
    a = score_cloud(small_cloud, planes)
    b = score_cloud(small_cloud, planes)
    for name in ("point_id", "plane_id", "virtual_score", "mirror_gap", "hausdorff", "matched_neighbor"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_simulated_virtuals_outscore_reals(small_cloud, small_spec):
    planes = [Plane(n, d) for n, d in small_spec.glass_planes()]
    t = score_cloud(small_cloud, planes)
    gt = small_cloud.gt_label[t.point_id]
    virt = t.virtual_score[gt == GtLabel.VIRTUAL]
    real = t.virtual_score[gt == GtLabel.REAL]
    assert np.median(virt) > 0.5 > np.max(real, initial=0.0)


# ---------------------------------------------------------------------------
# removal and table I/O


def table_of(ids, scores):
    ids = np.asarray(ids)
    s = np.asarray(scores, float)
    return ScoreTable(ids, np.zeros(len(ids), np.int64), s, np.ones(len(ids)), s,
                      np.zeros(len(ids)), np.zeros(len(ids)))


def test_remove_nothing_when_scores_zero():
    c = PointCloud(positions=np.zeros((3, 3)))
    res = remove_virtual(c, table_of([0, 1, 2], [0, 0, 0]), 0.5)
    assert len(res.kept) == 3 and res.removed_ids.tolist() == []
    assert res.labeled.pred_label.tolist() == [PredLabel.REAL] * 3


def test_remove_exactly_high_score():
    c = PointCloud(positions=np.arange(9.0).reshape(3, 3))
    res = remove_virtual(c, table_of([0, 2], [0.6, 0.4]), 0.5)
    assert res.removed_ids.tolist() == [0]
    assert res.labeled.pred_label.tolist() == [1, 0, 0]
    assert res.kept.positions.tolist() == [[3, 4, 5], [6, 7, 8]]
    assert res.report["n_removed"] == 1 and res.report["n_kept"] == 2
    # the threshold is inclusive
    assert remove_virtual(c, table_of([1], [0.5]), 0.5).removed_ids.tolist() == [1]


@pytest.mark.parametrize("t", [0.0, 1.0, -0.1, 2.0])
def test_remove_threshold_range(t):
    with pytest.raises(ValueError):
        remove_virtual(PointCloud(positions=np.zeros((1, 3))), table_of([], []), t)


def test_score_csv_round_trip(tmp_path):
    t = ScoreTable(np.array([1, 5]), np.array([0, 2]), np.array([0.3, 0.0]), np.array([1 / 3, 0.0]),
                   np.array([0.1, 0.0]), np.array([0.123456789012345678, np.inf]),
                   np.array([1e-17, np.inf]))
    t.to_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == \
        "point_id,plane_id,sym_score,sim_score,virtual_score,mirror_gap,hausdorff"
    back = ScoreTable.from_csv(tmp_path / "s.csv")
    for name in ("point_id", "plane_id", "sym_score", "sim_score", "virtual_score", "mirror_gap",
                 "hausdorff"):
        assert np.array_equal(getattr(back, name), getattr(t, name))
    (tmp_path / "bad.csv").write_text("a,b\n")
    with pytest.raises(ValueError):
        ScoreTable.from_csv(tmp_path / "bad.csv")
