import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bucketswin import (AttentionParams, CopyMeter, HashConfig, assign_buckets,
                        build_schedule, copy_meter, logical_gather,
                        lowest_period, positional_encoding,
                        reference_attention, tiled_attention)
from bucketswin.errors import ConfigError, NumericError

from conftest import naive_attention


def scopes_as_sets(schedule, t):
    return [tuple(int(b) for b in scope) for scope in schedule.rounds[t]]


# ---------------------------------------------------------------- scheduling

def test_window_partition_round0():
    sched = build_schedule(8, window_w=4, rounds=1)
    assert scopes_as_sets(sched, 0) == [(0, 1, 2, 3), (4, 5, 6, 7)]


def test_shifted_round_rotates():
    sched = build_schedule(8, window_w=4, shift=2, rounds=2)
    assert scopes_as_sets(sched, 0) == [(0, 1, 2, 3), (4, 5, 6, 7)]
    assert scopes_as_sets(sched, 1) == [(2, 3, 4, 5), (6, 7, 0, 1)]


def test_strided_windows_pair_nonadjacent():
    sched = build_schedule(8, window_w=2, stride=2, rounds=1)
    assert scopes_as_sets(sched, 0) == [(0, 2), (1, 3), (4, 6), (5, 7)]


def test_every_round_is_a_partition():
    for w, s, sh in [(2, 1, 1), (4, 2, 3), (3, 1, 0), (5, 3, 2)]:
        sched = build_schedule(30, window_w=w, stride=s, shift=sh, rounds=4)
        for t in range(4):
            seen = sorted(b for scope in sched.rounds[t] for b in scope)
            assert seen == list(range(30)), (w, s, sh, t)


def test_shift_zero_repeats_round0():
    sched = build_schedule(12, window_w=3, shift=0, rounds=3)
    assert scopes_as_sets(sched, 0) == scopes_as_sets(sched, 2)


def test_schedule_validation():
    with pytest.raises(ConfigError):
        build_schedule(0, window_w=1)
    with pytest.raises(ConfigError):
        build_schedule(4, window_w=5)
    with pytest.raises(ConfigError):
        build_schedule(4, window_w=2, shift=2)  # shift must be < window_w
    with pytest.raises(ConfigError):
        build_schedule(4, window_w=2, stride=0)
    with pytest.raises(ConfigError):
        build_schedule(4, window_w=2, rounds=0)


@given(st.integers(1, 40), st.integers(1, 6), st.integers(1, 4),
       st.integers(0, 5), st.integers(1, 5))
@settings(max_examples=80, deadline=None)
def test_schedule_partition_property(nb, w, stride, shift, rounds):
    if w > nb or shift >= w:
        return
    sched = build_schedule(nb, window_w=w, stride=stride, shift=shift,
                           rounds=rounds)
    for t in range(rounds):
        seen = sorted(int(b) for scope in sched.rounds[t] for b in scope)
        assert seen == list(range(nb))


# ------------------------------------------------------------ logical gather

def _hand_assignment():
    # four single-voxel groups -> xor-mod buckets 0..3, counts 3/1/2/2
    vox = np.array([[0, 0, 0]] * 3 + [[1, 0, 0]] * 1 +
                   [[2, 0, 0]] * 2 + [[3, 0, 0]] * 2, dtype=np.int64)
    return assign_buckets(vox, None, HashConfig("xor-mod", K=4), S=4)


def test_gather_strided_scope_ranges():
    a = _hand_assignment()
    ranges = logical_gather(a, [1, 3])
    assert ranges == [(3, 4), (6, 8)]
    assert sum(e - s for s, e in ranges) == a.counts[1] + a.counts[3]


def test_gather_skips_empty_and_checks_bounds():
    a = _hand_assignment()
    assert logical_gather(a, [4]) == []      # recycle bucket is empty
    with pytest.raises(ConfigError):
        logical_gather(a, [9])


def test_gather_moves_no_bytes():
    a = _hand_assignment()
    copy_meter.reset()
    logical_gather(a, [0, 2])
    logical_gather(a, [1, 3])
    assert copy_meter.bytes["gather"] == 0


def test_copy_meter_channels():
    m = CopyMeter()
    m.add("gather", 0)
    m.add("attention", 128)
    assert m.bytes == {"gather": 0, "attention": 128}
    m.reset()
    assert m.bytes["attention"] == 0


# ------------------------------------------------------- reference attention

def test_reference_single_row_returns_v():
    p = AttentionParams(d_model=8, n_heads=2)
    rng = np.random.default_rng(0)
    Q, K, V = (rng.normal(size=(1, 8)) for _ in range(3))
    np.testing.assert_allclose(reference_attention(Q, K, V, p), V, rtol=1e-12)


def test_reference_matches_triple_loop(rng):
    p = AttentionParams(d_model=64, n_heads=4)
    Q, K, V = (rng.normal(size=(48, 64)) for _ in range(3))
    ref = reference_attention(Q, K, V, p)
    naive = naive_attention(Q, K, V, 4)
    err = np.linalg.norm(ref - naive) / np.linalg.norm(naive)
    assert err <= 1e-6


def test_reference_uniform_when_keys_equal(rng):
    # identical keys -> uniform weights -> output = mean of V
    p = AttentionParams(d_model=6, n_heads=1)
    Q = rng.normal(size=(5, 6))
    K = np.tile(rng.normal(size=(1, 6)), (7, 1))
    V = rng.normal(size=(7, 6))
    out = reference_attention(Q, K, V, p)
    np.testing.assert_allclose(out, np.tile(V.mean(0), (5, 1)), atol=1e-12)


def test_reference_rejects_nonfinite():
    p = AttentionParams(d_model=4, n_heads=1)
    bad = np.array([[1.0, np.nan, 0.0, 0.0]])
    with pytest.raises(NumericError):
        reference_attention(bad, bad, bad, p)


def test_attention_params_validation():
    with pytest.raises(ConfigError):
        AttentionParams(d_model=10, n_heads=3)   # not divisible
    with pytest.raises(ConfigError):
        AttentionParams(d_model=8, n_heads=2, tile_rows=40)  # not 16-aligned
    with pytest.raises(ConfigError):
        AttentionParams(d_model=0, n_heads=1)


# ----------------------------------------------------------- tiled attention

def test_tiled_equals_reference_full(rng):
    p = AttentionParams(d_model=32, n_heads=4, tile_rows=64)
    Q, K, V = (rng.normal(size=(300, 32)) for _ in range(3))
    ref = reference_attention(Q, K, V, p)
    out = tiled_attention(Q, K, V, p)
    err = np.linalg.norm(out - ref) / np.linalg.norm(ref)
    assert err <= 1e-5


def test_tiled_two_buckets_of_512(rng):
    p = AttentionParams(d_model=16, n_heads=2, tile_rows=64)
    Q, K, V = (rng.normal(size=(1024, 16)) for _ in range(3))
    ranges = [(0, 512), (512, 1024)]
    out = tiled_attention(Q, K, V, p, ranges=ranges)
    ref = reference_attention(Q, K, V, p)
    err = np.linalg.norm(out - ref) / np.linalg.norm(ref)
    assert err <= 1e-5


def test_tiled_scope_is_isolated(rng):
    """Points outside the ranges must not influence the output."""
    p = AttentionParams(d_model=8, n_heads=1, tile_rows=16)
    Q, K, V = (rng.normal(size=(64, 8)) for _ in range(3))
    ranges = [(0, 16), (48, 64)]
    out = tiled_attention(Q, K, V, p, ranges=ranges)
    rows = np.r_[0:16, 48:64]
    ref = reference_attention(Q[rows], K[rows], V[rows], p)
    np.testing.assert_allclose(out, ref, atol=1e-10)


def test_tiled_underfilled_bucket_masked(rng):
    """40 real rows padded to 48: masked rows contribute nothing and the
    real rows equal the dense reference on the unpadded 40."""
    p = AttentionParams(d_model=8, n_heads=2, tile_rows=16)
    Q, K, V = (rng.normal(size=(48, 8)) for _ in range(3))
    mask = np.zeros(48, dtype=bool)
    mask[:40] = True
    out = tiled_attention(Q, K, V, p, ranges=[(0, 48)], mask=mask)
    ref = reference_attention(Q[:40], K[:40], V[:40], p)
    err = np.linalg.norm(out[:40] - ref) / np.linalg.norm(ref)
    assert err <= 1e-5
    np.testing.assert_array_equal(out[40:], 0.0)


def test_tiled_all_masked_warns(rng):
    p = AttentionParams(d_model=8, n_heads=1, tile_rows=16)
    Q, K, V = (rng.normal(size=(16, 8)) for _ in range(3))
    with pytest.warns(RuntimeWarning):
        out = tiled_attention(Q, K, V, p, ranges=[(0, 16)],
                              mask=np.zeros(16, dtype=bool))
    np.testing.assert_array_equal(out, 0.0)


def test_tiled_meters_attention_traffic(rng):
    p = AttentionParams(d_model=8, n_heads=1, tile_rows=16)
    Q, K, V = (rng.normal(size=(64, 8)) for _ in range(3))
    copy_meter.reset()
    tiled_attention(Q, K, V, p)
    assert copy_meter.bytes["attention"] > 0
    assert copy_meter.bytes["gather"] == 0


@pytest.mark.parametrize("m,heads,tile", [(16, 1, 16), (33, 1, 16),
                                          (100, 2, 32), (257, 4, 64),
                                          (1024, 8, 128)])
def test_tiled_matches_reference_sweep(m, heads, tile, rng):
    d = 8 * heads
    p = AttentionParams(d_model=d, n_heads=heads, tile_rows=tile)
    Q, K, V = (rng.normal(size=(m, d)) for _ in range(3))
    out = tiled_attention(Q, K, V, p)
    ref = reference_attention(Q, K, V, p)
    err = np.linalg.norm(out - ref) / np.linalg.norm(ref)
    assert err <= 1e-5, (m, heads, tile, err)


def test_tiled_extreme_logits_stay_finite():
    # large-magnitude queries overflow a naive softmax; the running-max
    # rescaling must not
    p = AttentionParams(d_model=4, n_heads=1, tile_rows=16)
    Q = np.full((16, 4), 60.0)
    K = np.linspace(-70, 70, 64).reshape(16, 4)
    V = np.ones((16, 4))
    out = tiled_attention(Q, K, V, p)
    assert np.isfinite(out).all()
    np.testing.assert_allclose(out, reference_attention(Q, K, V, p), atol=1e-8)


def test_tiled_permutation_equivariance(rng):
    """Permuting rows inside one scope permutes outputs identically."""
    p = AttentionParams(d_model=8, n_heads=2, tile_rows=16)
    Q, K, V = (rng.normal(size=(32, 8)) for _ in range(3))
    perm = rng.permutation(32)
    base = tiled_attention(Q, K, V, p)
    permuted = tiled_attention(Q[perm], K[perm], V[perm], p)
    np.testing.assert_allclose(permuted, base[perm], atol=1e-10)


# -------------------------------------------------------- positional encoding

def test_pe_zero_coords_constant_pattern():
    pe = positional_encoding(np.zeros((3, 3)), d_model=12)
    np.testing.assert_array_equal(pe, np.tile([0.0, 1.0], (3, 6)))


def test_pe_requires_divisible_by_six():
    with pytest.raises(ConfigError):
        positional_encoding(np.zeros((2, 3)), d_model=16)


def test_pe_lowest_block_invariant_under_full_period(rng):
    d = 18
    coords = rng.uniform(0, 1, size=(50, 3))
    period = lowest_period(d)
    base = positional_encoding(coords, d)
    moved = positional_encoding(coords + np.array([period, 0, 0]), d)
    # lowest-frequency pair of the x block returns to the same phase
    n_axis = d // 3
    lo = slice(n_axis - 2, n_axis)
    np.testing.assert_allclose(moved[:, lo], base[:, lo], atol=1e-9)
    # higher-frequency x pairs move (period ratio is irrational-ish)
    assert not np.allclose(moved[:, 0:2], base[:, 0:2])


def test_pe_distinguishes_axes(rng):
    coords = np.zeros((2, 3))
    coords[1, 1] = 0.5  # displace along y only
    pe = positional_encoding(coords, d_model=12)
    n_axis = 4
    assert np.allclose(pe[0, :n_axis], pe[1, :n_axis])          # x block
    assert not np.allclose(pe[0, n_axis:2 * n_axis], pe[1, n_axis:2 * n_axis])
    assert np.allclose(pe[0, 2 * n_axis:], pe[1, 2 * n_axis:])  # z block


def test_pe_values_bounded(rng):
    pe = positional_encoding(rng.uniform(-3, 3, size=(100, 3)), d_model=24)
    assert np.abs(pe).max() <= 1.0 + 1e-12
