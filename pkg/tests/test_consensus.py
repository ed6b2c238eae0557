import math

import numpy as np
import pytest

from tomomatch.consensus import (
    ConsensusParams,
    MatchConfig,
    MatchResult,
    OffsetHypotheses,
    consensus_cluster,
    correlate_heights,
    enumerate_offsets,
    hypotheses_at_offset,
    match_maps,
    match_slice_sets,
    prepare_slices,
)
from tomomatch.errors import EmptyCloud, EmptyHypotheses, GridMismatch, NoConsensus
from tomomatch.features import FeatureSet
from tomomatch.geometry import PointCloud, Transform4DoF, apply_transform, voxel_filter, wrap_angle
from tomomatch.harness import compute_errors, make_pair
from tomomatch.rigid2d import Hypothesis2D, RansacParams
from tomomatch.synthetic import gen_environment, single_room
from tomomatch.tomography import SliceEntry, SliceSet

G = 0.05


def bare_set(indices, g=G, z_min=0.0):
    entries = tuple(SliceEntry(k, z_min + k * g, None, FeatureSet.empty()) for k in indices)
    return SliceSet(g, z_min, entries)


def offsets_oracle(sc, sd):
    return sorted({round(hc - hd, 9) for hc in sc.heights() for hd in sd.heights()})


def hyp(x, y, theta, rms=0.01):
    return Hypothesis2D(x, y, theta, 1.0, tuple(range(10)), rms)


def offset_hyps(hs, z=0.0):
    return OffsetHypotheses(z, 0, tuple(hs), tuple((i, i) for i in range(len(hs))), len(hs), 0)


def pairwise_count_oracle(hs, p):
    counts = []
    for a in hs:
        n = 0
        for b in hs:
            if math.hypot(a.x - b.x, a.y - b.y) <= p.t_xy and abs(wrap_angle(a.theta - b.theta)) <= p.t_theta:
                n += 1
        counts.append(n)
    return counts


@pytest.fixture(scope="module")
def room():
    return voxel_filter(gen_environment(single_room(4, density=1500)), G)


@pytest.fixture(scope="module")
def cfg():
    return MatchConfig(grid=G, seed=1)


@pytest.fixture(scope="module")
def room_slices(room, cfg):
    return prepare_slices(room, cfg)


@pytest.fixture(scope="module")
def self_match(room_slices, cfg):
    return match_slice_sets(room_slices, room_slices, cfg)


def test_offsets_identical_five():
    s = bare_set(range(5))
    offs = enumerate_offsets(s, s)
    assert len(offs) == 9
    np.testing.assert_allclose(offs, [k * G for k in range(-4, 5)], atol=1e-12)
    assert [round(o, 9) for o in offs] == offsets_oracle(s, s)


def test_offsets_single_pair():
    sc, sd = bare_set([0], z_min=1.0), bare_set([0], z_min=0.3)
    assert enumerate_offsets(sc, sd) == pytest.approx([0.7])


def test_offsets_example():
    offs = enumerate_offsets(bare_set([0, 1]), bare_set([10]))
    np.testing.assert_allclose(offs, [-10 * G, -9 * G], atol=1e-12)


def test_offsets_with_gaps_match_oracle():
    sc, sd = bare_set([0, 1, 5, 9], z_min=0.12), bare_set([2, 3, 11], z_min=-0.4)
    assert [round(o, 9) for o in enumerate_offsets(sc, sd)] == offsets_oracle(sc, sd)


def test_offsets_gap_free_count():
    sc, sd = bare_set(range(7)), bare_set(range(4))
    assert len(enumerate_offsets(sc, sd)) == 7 + 4 - 1


def test_grid_mismatch():
    with pytest.raises(GridMismatch):
        enumerate_offsets(bare_set([0]), bare_set([0], g=0.1))


def test_hypotheses_without_features_empty():
    oh = hypotheses_at_offset(bare_set(range(3)), bare_set(range(3)), 0.0)
    assert oh.hypotheses == () and oh.pairs_tried == 3


def test_hypotheses_offset_with_no_pairs(room_slices):
    oh = hypotheses_at_offset(room_slices, room_slices, 500 * G)
    assert oh.hypotheses == () and oh.pairs_tried == 0


def test_hypotheses_self_offset_zero(room_slices):
    r = RansacParams.for_grid(G)
    oh = hypotheses_at_offset(room_slices, room_slices, 0.0, r, seed=3)
    bearing = [e.index for e in room_slices.entries if len(e.features) >= r.min_inliers]
    assert [kc for kc, _ in oh.pair_ids] == bearing
    for (kc, kd), h in zip(oh.pair_ids, oh.hypotheses):
        assert kc == kd
        assert abs(h.x) < 1e-6 and abs(h.y) < 1e-6 and abs(h.theta) < 1e-6


def test_hypotheses_pairs_differ_by_offset(room_slices):
    for step in (-3, 2, 7):
        oh = hypotheses_at_offset(room_slices, room_slices, step * G)
        hc = dict(zip(room_slices.indices(), room_slices.heights()))
        for kc, kd in oh.pair_ids:
            assert abs((hc[kc] - hc[kd]) - oh.z_offset) <= G / 4


def test_cluster_single():
    members, t = consensus_cluster(offset_hyps([hyp(1, 2, 0.3)], z=0.4), ConsensusParams())
    assert members == [0]
    assert t.as_tuple() == pytest.approx((1, 2, 0.4, 0.3))


def test_cluster_seven_plus_scattered():
    star = (0.5, -0.25, 1.0)
    hs = [hyp(*star) for _ in range(7)] + [hyp(3, 3, 1.0), hyp(0.5, -0.25, -2.0), hyp(-4, 1, 0.0)]
    p = ConsensusParams(t_xy=0.1, t_theta=0.05)
    members, t = consensus_cluster(offset_hyps(hs), p)
    assert len(members) == 7 == max(pairwise_count_oracle(hs, p))
    assert (t.x, t.y, t.theta) == pytest.approx(star, abs=1e-12)


def test_cluster_random_matches_oracle(rng):
    p = ConsensusParams(t_xy=0.3, t_theta=0.2)
    for _ in range(20):
        hs = [hyp(*rng.normal(0, 0.3, 2), rng.normal(0, 0.3)) for _ in range(int(rng.integers(1, 25)))]
        counts = pairwise_count_oracle(hs, p)
        members, _ = consensus_cluster(offset_hyps(hs), p)
        assert len(members) == max(counts)
        anchor = counts.index(max(counts))
        assert members == [i for i, b in enumerate(hs)
                           if math.hypot(hs[anchor].x - b.x, hs[anchor].y - b.y) <= p.t_xy
                           and abs(wrap_angle(hs[anchor].theta - b.theta)) <= p.t_theta]


def test_cluster_across_seam():
    hs = [hyp(1, 1, math.pi - 0.01), hyp(1, 1, -math.pi + 0.01)]
    members, t = consensus_cluster(offset_hyps(hs), ConsensusParams(t_xy=0.1, t_theta=0.1))
    assert members == [0, 1]
    assert abs(t.theta) == pytest.approx(math.pi, abs=1e-9)


def test_cluster_empty():
    with pytest.raises(EmptyHypotheses):
        consensus_cluster(offset_hyps([]))


def test_self_match_identity(self_match):
    t = self_match.transform
    assert abs(t.x) <= G and abs(t.y) <= G and abs(t.z) <= G and abs(t.theta) <= 0.02
    assert t.z == 0.0


def test_self_match_dominance(self_match):
    scores = dict(self_match.per_offset_scores)
    zero = scores.pop(0.0)
    assert zero > max(scores.values())


def test_consensus_size_is_max_score(self_match):
    assert self_match.consensus_size == max(n for _, n in self_match.per_offset_scores)
    assert self_match.consensus_size >= ConsensusParams().min_cluster


def test_raised_copy(room, room_slices, cfg):
    raised = prepare_slices(apply_transform(room, Transform4DoF(0, 0, 3 * G, 0)), cfg)
    res = match_slice_sets(raised, room_slices, cfg)
    assert res.transform.z == pytest.approx(3 * G, abs=1e-9)
    assert abs(res.transform.x) <= 0.5 * G and abs(res.transform.y) <= 0.5 * G
    assert abs(res.transform.theta) <= 0.02


def test_disjoint_rooms_no_consensus(room, cfg):
    other = voxel_filter(gen_environment(single_room(6, density=1500)), G)
    with pytest.raises(NoConsensus):
        match_maps(room, other, cfg)


def test_planted_crop_recovered(room, cfg):
    t_gt = Transform4DoF(1.5, -0.7, 3 * G, 2.2)
    c, d = make_pair(room, t_gt, 0.7, 3)
    res = match_maps(c, d, cfg)
    dt, dr = compute_errors(res.transform, t_gt)
    assert dt <= 5 * G and dr <= 0.1745


def test_yaw_equivariance(room, room_slices, cfg):
    phi = 1.3
    rotated = prepare_slices(apply_transform(room, Transform4DoF(0, 0, 0, phi)), cfg)
    res = match_slice_sets(room_slices, rotated, cfg)
    assert abs(wrap_angle(res.transform.theta - (-phi))) <= 0.02


def test_parallel_equals_serial(room_slices, cfg, self_match):
    par = correlate_heights(room_slices, room_slices, cfg.consensus_params(), cfg.ransac_params(),
                            cfg.seed, cfg.max_hamming, workers=3)
    assert par.to_dict(False) == self_match.to_dict(False)


def test_match_maps_empty():
    with pytest.raises(EmptyCloud):
        match_maps(PointCloud(np.empty((0, 3))), PointCloud([[0, 0, 0]]))


def test_result_json_roundtrip(self_match):
    back = MatchResult.from_json(self_match.to_json())
    assert back.to_dict() == self_match.to_dict()
    d = self_match.to_dict(False)
    assert set(d) == {"x", "y", "z", "theta", "consensus_size", "per_offset_scores", "matrix"}
    np.testing.assert_allclose(np.reshape(d["matrix"], (4, 4)), self_match.transform.matrix())
