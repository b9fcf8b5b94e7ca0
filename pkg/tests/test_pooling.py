import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bucketswin import (HashConfig, assign_buckets, build_subbuckets,
                        pool_features, pool_stage, scatter)
from bucketswin.errors import ConfigError, EmptyInputError
from bucketswin.pooling import TILE_CAP


def sizes_of(sub):
    return np.bincount(sub.subbucket_id, minlength=sub.num_subbuckets)


# ------------------------------------------------------------- sub-buckets

def test_four_points_one_voxel_rho2():
    coords = np.full((4, 3), 0.5)
    sub = build_subbuckets(coords, rho=2)
    assert sub.num_subbuckets == 2
    assert sorted(sizes_of(sub).tolist()) == [2, 2]
    sub.validate()


def test_five_points_rho2_remainder():
    rng = np.random.default_rng(0)
    sub = build_subbuckets(rng.uniform(size=(5, 3)), rho=2)
    assert sub.num_subbuckets == 3
    assert sorted(sizes_of(sub).tolist()) == [1, 2, 2]
    sub.validate()


def test_full_tile_rho2_exact_halving(rng):
    coords = rng.uniform(size=(1024, 3))
    sub = build_subbuckets(coords, rho=2)
    assert sub.num_subbuckets == 512
    assert (sizes_of(sub) == 2).all()
    sub.validate()


@pytest.mark.parametrize("m,rho", [(1, 1), (1, 4), (7, 3), (16, 4),
                                   (333, 5), (1000, 2), (1024, 8)])
def test_partition_invariant(m, rho, rng):
    sub = build_subbuckets(rng.uniform(size=(m, 3)), rho)
    s = sizes_of(sub)
    assert s.sum() == m
    assert sub.num_subbuckets == -(-m // rho)
    assert (s <= rho).all()
    assert (s < rho).sum() <= 1
    assert (s > 0).all()
    sub.validate()


def test_termination_bound(rng):
    for m in (10, 100, 1024):
        sub = build_subbuckets(rng.uniform(size=(m, 3)), rho=2)
        assert sub.scan_passes <= m


def test_subbuckets_are_local(rng):
    """Mean pairwise distance inside sub-buckets beats a random partition
    of identical sizes (fixed seed)."""
    coords = rng.uniform(size=(1024, 3))
    sub = build_subbuckets(coords, rho=4)

    def mean_intra(ids):
        tot, cnt = 0.0, 0
        for j in range(sub.num_subbuckets):
            pts = coords[ids == j]
            if len(pts) < 2:
                continue
            d = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
            iu = np.triu_indices(len(pts), 1)
            tot += d[iu].sum()
            cnt += len(iu[0])
        return tot / cnt

    shuffled = sub.subbucket_id.copy()
    np.random.default_rng(7).shuffle(shuffled)
    assert mean_intra(sub.subbucket_id) < mean_intra(shuffled)


def test_build_validation():
    with pytest.raises(EmptyInputError):
        build_subbuckets(np.zeros((0, 3)), 2)
    with pytest.raises(ConfigError):
        build_subbuckets(np.zeros((TILE_CAP + 1, 3)), 2)
    with pytest.raises(ConfigError):
        build_subbuckets(np.zeros((4, 3)), 0)


@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 6))
@settings(max_examples=50, deadline=None)
def test_partition_property(seed, rho):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 300))
    # half the points piled on one spot to stress step 2/3
    a = rng.uniform(size=(m - m // 2, 3))
    b = np.tile(rng.uniform(size=(1, 3)), (m // 2, 1))
    coords = np.vstack([a, b])
    sub = build_subbuckets(coords, rho)
    s = sizes_of(sub)
    assert s.sum() == m and (s <= rho).all() and (s < rho).sum() <= 1
    assert sub.scan_passes <= m


# ------------------------------------------------------------ pool_features

def test_mean_of_identical_rows():
    coords = np.full((4, 3), 0.25)
    sub = build_subbuckets(coords, rho=2)
    feats = np.tile([1.5, -2.0, 0.5], (4, 1))
    out = pool_features(feats, sub, "mean")
    assert out.shape == (2, 3)
    np.testing.assert_allclose(out, np.tile([1.5, -2.0, 0.5], (2, 1)),
                               atol=1e-15)


def test_sum_conserves_columns(rng):
    coords = rng.uniform(size=(100, 3))
    feats = rng.normal(size=(100, 6))
    sub = build_subbuckets(coords, rho=3)
    out = pool_features(feats, sub, "sum")
    np.testing.assert_allclose(out.sum(0), feats.sum(0), rtol=1e-12)


def test_max_matches_brute_force(rng):
    coords = rng.uniform(size=(64, 3))
    feats = rng.normal(size=(64, 5))
    sub = build_subbuckets(coords, rho=4)
    out = pool_features(feats, sub, "max")
    for j in range(sub.num_subbuckets):
        np.testing.assert_array_equal(out[j],
                                      feats[sub.subbucket_id == j].max(0))


def test_min_and_mean_match_brute_force(rng):
    coords = rng.uniform(size=(50, 3))
    feats = rng.normal(size=(50, 4))
    sub = build_subbuckets(coords, rho=3)
    mn = pool_features(feats, sub, "min")
    me = pool_features(feats, sub, "mean")
    for j in range(sub.num_subbuckets):
        rows = feats[sub.subbucket_id == j]
        np.testing.assert_array_equal(mn[j], rows.min(0))
        np.testing.assert_allclose(me[j], rows.mean(0), rtol=1e-12)


def test_reduce_validation(rng):
    sub = build_subbuckets(rng.uniform(size=(4, 3)), 2)
    with pytest.raises(ConfigError):
        pool_features(np.zeros((4, 2)), sub, "median")
    with pytest.raises(ConfigError):
        pool_features(np.zeros((5, 2)), sub, "mean")  # row count mismatch


# --------------------------------------------------------------- pool_stage

def _scattered(sizes, S, d=6, seed=3):
    K = len(sizes)
    vox = np.concatenate([np.full(sz, b) for b, sz in enumerate(sizes)])
    vox = np.stack([vox, np.zeros_like(vox), np.zeros_like(vox)], axis=1)
    a = assign_buckets(vox, None, HashConfig("xor-mod", K=K), S=S)
    rng = np.random.default_rng(seed)
    feats, _ = scatter(rng.normal(size=(int(sum(sizes)), d)), a)
    coords, _ = scatter(rng.uniform(size=(int(sum(sizes)), 3)), a)
    return a, feats, coords


def test_single_bucket_512_halves():
    a, feats, coords = _scattered([512], S=512)
    pooled, pcoords, na = pool_stage(feats, coords, a, rho=2, reduce="mean")
    assert pooled.shape[0] == 256 and na.counts[0] == 256
    assert (na.bucket_id == 0).all()
    assert na.S == 256
    na.validate()


def test_confinement_ablation():
    """Zeroing bucket B's features must not change bucket A's pooled rows."""
    a, feats, coords = _scattered([40, 40], S=64)
    base, _, na = pool_stage(feats, coords, a, rho=2, reduce="sum")
    zeroed = feats.copy()
    zeroed[40:] = 0.0
    out, _, _ = pool_stage(zeroed, coords, a, rho=2, reduce="sum")
    n_a = int(na.counts[0])
    np.testing.assert_array_equal(base[:n_a], out[:n_a])


def test_global_sum_conserved(rng):
    a, feats, coords = _scattered([100, 30, 77], S=128)
    pooled, _, _ = pool_stage(feats, coords, a, rho=4, reduce="sum")
    np.testing.assert_allclose(pooled.sum(0), feats.sum(0), rtol=1e-9)


def test_mean_conserves_when_all_full(rng):
    a, feats, coords = _scattered([64], S=64)  # 64 % 4 == 0: all full
    pooled, _, _ = pool_stage(feats, coords, a, rho=4, reduce="mean")
    np.testing.assert_allclose(pooled.sum(0) * 4, feats.sum(0), rtol=1e-9)


def test_pooled_coords_are_member_centroids():
    a, feats, coords = _scattered([16], S=16)
    _, pcoords, na = pool_stage(feats, coords, a, rho=2, reduce="max")
    sub = build_subbuckets(coords[:16], 2)
    for j in range(sub.num_subbuckets):
        np.testing.assert_allclose(pcoords[j],
                                   coords[:16][sub.subbucket_id == j].mean(0),
                                   rtol=1e-12)


def test_tiles_split_large_buckets(rng):
    # one bucket with 1500 points: two tiles of 1024 and 476
    a, feats, coords = _scattered([1500], S=2048)
    pooled, _, na = pool_stage(feats, coords, a, rho=2, reduce="mean")
    assert na.counts[0] == 512 + 238  # ceil(1024/2) + ceil(476/2)
    assert pooled.shape[0] == na.counts[0]
    na.validate()


def test_recycle_bucket_pools_too():
    # K=1, S=4, 12 identical voxels: 4 direct + 8 recycle
    vox = np.zeros((12, 3), dtype=np.int64)
    a = assign_buckets(vox, None, HashConfig("xor-mod", K=1), S=4)
    assert a.counts[1] == 8
    rng = np.random.default_rng(1)
    feats, _ = scatter(rng.normal(size=(12, 4)), a)
    coords, _ = scatter(rng.uniform(size=(12, 3)), a)
    pooled, _, na = pool_stage(feats, coords, a, rho=2, reduce="sum")
    assert na.counts[0] == 2 and na.counts[1] == 4
    np.testing.assert_allclose(pooled.sum(0), feats.sum(0), rtol=1e-12)
