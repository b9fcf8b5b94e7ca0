"""Bucket-swin scope scheduling and tile-streamed online-softmax attention.

A schedule groups contiguous buckets into attention scopes round by
round; shifting the window between rounds lets information cross scope
boundaries without ever moving feature rows.  ``logical_gather`` turns a
scope into index ranges and copies nothing; the only feature copies in
the whole path happen inside ``tiled_attention`` when key/query tiles
are materialized, and an instrumented byte counter keeps both claims
auditable.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bucketing import BucketAssignment
from .errors import ConfigError, NumericError


class CopyMeter:
    """Counts feature bytes copied, split by channel.

    The "gather" channel is charged by any code that physically gathers
    rows for a scope; the streaming attention path never does, so it
    stays zero there and only "attention" (tile loads) grows.
    """

    def __init__(self):
        self.bytes = {"gather": 0, "attention": 0}

    def add(self, channel: str, nbytes: int) -> None:
        self.bytes[channel] += int(nbytes)

    def reset(self) -> None:
        for k in self.bytes:
            self.bytes[k] = 0


copy_meter = CopyMeter()


@dataclass(frozen=True)
class AttentionParams:
    d_model: int
    n_heads: int
    tile_rows: int = 64

    def __post_init__(self):
        if self.d_model < 1 or self.n_heads < 1:
            raise ConfigError("d_model and n_heads must be >= 1")
        if self.d_model % self.n_heads:
            raise ConfigError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})"
            )
        if self.tile_rows < 16 or self.tile_rows % 16:
            raise ConfigError(f"tile_rows must be a positive multiple of 16, got {self.tile_rows}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.head_dim)


@dataclass(frozen=True)
class ScopeSchedule:
    """rounds[t] is a list of scopes; each scope is an int array of
    bucket ids.  Within one round the scopes partition all bucket ids."""

    num_buckets: int
    window_w: int
    stride: int
    shift: int
    rounds: tuple

    def num_rounds(self) -> int:
        return len(self.rounds)


def build_schedule(num_buckets: int, window_w: int, stride: int = 1,
                   shift: int = 0, rounds: int = 1) -> ScopeSchedule:
    """Round t rotates the bucket list by (t * shift) mod window_w, then
    chops it into windows of window_w * stride consecutive buckets and
    takes every stride-th bucket into a scope.  The rotation wraps
    cyclically, so every round partitions all buckets.
    """
    if num_buckets < 1:
        raise ConfigError(f"num_buckets must be >= 1, got {num_buckets}")
    if window_w < 1:
        raise ConfigError(f"window_w must be >= 1, got {window_w}")
    if window_w > num_buckets:
        raise ConfigError(f"window_w ({window_w}) exceeds num_buckets ({num_buckets})")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    if not 0 <= shift < window_w:
        raise ConfigError(f"shift must satisfy 0 <= shift < window_w, got {shift}")
    if rounds < 1:
        raise ConfigError(f"rounds must be >= 1, got {rounds}")
    all_rounds = []
    super_w = window_w * stride
    for t in range(rounds):
        offset = (t * shift) % window_w
        order = (np.arange(num_buckets, dtype=np.int64) + offset) % num_buckets
        scopes = []
        for s in range(0, num_buckets, super_w):
            chunk = order[s:s + super_w]
            for lane in range(stride):
                scope = chunk[lane::stride]
                if len(scope):
                    scopes.append(scope)
        all_rounds.append(tuple(scopes))
    return ScopeSchedule(num_buckets=num_buckets, window_w=window_w,
                         stride=stride, shift=shift, rounds=tuple(all_rounds))


def logical_gather(assignment, scope):
    """Index ranges [(start, stop), ...] covering the scope's buckets.

    Accepts a BucketAssignment (scope ids in [0, K], id K = recycle) or
    a (starts, lengths) bucket table from ``bucket_table()``.  Pure
    bookkeeping: no feature bytes move, which the copy meter's "gather"
    channel makes checkable.
    """
    if isinstance(assignment, BucketAssignment):
        starts, lengths = assignment.bucket_table(split_recycle=False)
    else:
        starts, lengths = assignment
    ranges = []
    for b in np.asarray(scope, dtype=np.int64):
        if b < 0 or b >= len(starts):
            raise ConfigError(f"scope bucket id {int(b)} outside the bucket table")
        if lengths[b] == 0:
            continue
        ranges.append((int(starts[b]), int(starts[b]) + int(lengths[b])))
    return ranges


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    m, d = x.shape
    return x.reshape(m, n_heads, d // n_heads)


def reference_attention(Q, K, V, params: AttentionParams) -> np.ndarray:
    """Dense oracle: per head softmax(scale * Q K^T) V in float64 with
    max-subtracted softmax and full score materialization."""
    Q = np.asarray(Q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    for name, arr in (("Q", Q), ("K", K), ("V", V)):
        if not np.isfinite(arr).all():
            raise NumericError(f"{name} contains non-finite values")
    if Q.shape[1] != params.d_model:
        raise ConfigError(f"feature width {Q.shape[1]} != d_model {params.d_model}")
    qh = _split_heads(Q, params.n_heads)
    kh = _split_heads(K, params.n_heads)
    vh = _split_heads(V, params.n_heads)
    scores = params.scale * np.einsum("qhd,khd->hqk", qh, kh)
    scores -= scores.max(axis=-1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=-1, keepdims=True)
    out = np.einsum("hqk,khd->qhd", weights, vh)
    return out.reshape(Q.shape[0], params.d_model)


def _tiles_of(ranges, tile_rows, total_rows):
    """Tile descriptors (start, stop, pad) covering each range in order;
    every range is padded up to a multiple of 16 with phantom rows."""
    tiles = []
    for start, stop in ranges:
        if not 0 <= start <= stop <= total_rows:
            raise ConfigError(f"range ({start}, {stop}) outside [0, {total_rows}]")
        if start == stop:
            continue
        length = stop - start
        padded = -(-length // 16) * 16
        for t0 in range(0, padded, tile_rows):
            t1 = min(t0 + tile_rows, padded)
            lo = start + t0
            hi = min(start + t1, stop)
            tiles.append((lo, hi, (start + t1) - hi))
    return tiles


def tiled_attention(Q, K, V, params: AttentionParams, ranges=None,
                    mask=None) -> np.ndarray:
    """Online-softmax attention streamed over key/value tiles.

    Q, K, V are full scattered arrays; ranges (from logical_gather)
    select which rows belong to the scope.  Scores are only ever
    materialized per (query tile, key tile) pair, never as the full
    m x m matrix.  Ranges whose length is not a multiple of 16 are
    padded with masked phantom rows; an explicit bool mask marks
    physically present rows to exclude.  Query rows that see no valid
    key (all masked) yield zeros and raise a warning.  Returns the
    concatenated real rows of every range, in range order.
    """
    Q = np.asarray(Q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if Q.shape != K.shape or Q.shape != V.shape:
        raise ConfigError("Q, K, V must share one shape")
    if Q.shape[1] != params.d_model:
        raise ConfigError(f"feature width {Q.shape[1]} != d_model {params.d_model}")
    total = Q.shape[0]
    if ranges is None:
        ranges = [(0, total)]
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (total,):
            raise ConfigError("mask must have shape (N,)")
    H, dh, tr = params.n_heads, params.head_dim, params.tile_rows
    itemsize = Q.itemsize
    tiles = _tiles_of(ranges, tr, total)
    if not tiles:
        return np.empty((0, params.d_model), dtype=np.float64)

    # stream K/V once per query tile; load each key tile as (rows, valid)
    def load(lo, hi, pad, src):
        rows = src[lo:hi]
        valid = np.ones(hi - lo, dtype=bool) if mask is None else mask[lo:hi].copy()
        if pad:
            rows = np.vstack([rows, np.zeros((pad, src.shape[1]), dtype=src.dtype)])
            valid = np.concatenate([valid, np.zeros(pad, dtype=bool)])
        copy_meter.add("attention", rows.nbytes)
        return rows, valid

    outs = []
    starved = 0
    for q_lo, q_hi, q_pad in tiles:
        q_rows, q_valid = load(q_lo, q_hi, q_pad, Q)
        t = q_rows.shape[0]
        qh = _split_heads(q_rows, H)
        m_run = np.full((H, t), -np.inf)
        l_run = np.zeros((H, t))
        acc = np.zeros((H, t, dh))
        for k_lo, k_hi, k_pad in tiles:
            k_rows, k_valid = load(k_lo, k_hi, k_pad, K)
            v_rows, _ = load(k_lo, k_hi, k_pad, V)
            kh = _split_heads(k_rows, H)
            vh = _split_heads(v_rows, H)
            s = params.scale * np.einsum("qhd,khd->hqk", qh, kh)
            s = np.where(k_valid[None, None, :], s, -np.inf)
            m_new = np.maximum(m_run, s.max(axis=-1))
            # exp(-inf - -inf) is nan; rows with no mass yet scale by 0
            alpha = np.where(np.isneginf(m_new), 0.0, np.exp(m_run - m_new))
            p = np.where(np.isneginf(m_new)[..., None], 0.0, np.exp(s - m_new[..., None]))
            l_run = l_run * alpha + p.sum(axis=-1)
            acc = acc * alpha[..., None] + np.einsum("hqk,khd->hqd", p, vh)
            m_run = m_new
        ok = l_run > 0
        denom = np.where(ok, l_run, 1.0)
        out_tile = (acc / denom[..., None]) * ok[..., None]
        out_tile = out_tile.transpose(1, 0, 2).reshape(t, params.d_model)
        real = q_hi - q_lo
        out_tile = out_tile[:real]
        starved += int(np.count_nonzero(~ok.all(axis=0)[:real]))
        out_tile = out_tile * q_valid[:real, None]
        outs.append(out_tile)
    if starved:
        warnings.warn(
            f"{starved} query rows had every key masked; their outputs are zero",
            RuntimeWarning, stacklevel=2,
        )
    return np.vstack(outs)


def positional_encoding(coords, d_model: int, base: float = 10000.0) -> np.ndarray:
    """Sinusoidal encoding per axis: d_model/3 dims per axis laid out as
    alternating sin/cos pairs over a geometric frequency ladder.
    Requires d_model divisible by 6 so the pairs split evenly."""
    if d_model % 6:
        raise ConfigError(f"d_model must be divisible by 6, got {d_model}")
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ConfigError(f"coords must have shape (m, 3), got {coords.shape}")
    n_pairs = d_model // 6
    inv_wavelength = base ** (-np.arange(n_pairs) / n_pairs)
    pe = np.empty((coords.shape[0], d_model), dtype=np.float64)
    block = 2 * n_pairs
    for axis in range(3):
        angles = coords[:, axis:axis + 1] * inv_wavelength
        pe[:, axis * block + 0:(axis + 1) * block:2] = np.sin(angles)
        pe[:, axis * block + 1:(axis + 1) * block:2] = np.cos(angles)
    return pe


def lowest_period(d_model: int, base: float = 10000.0) -> float:
    """Period of the lowest-frequency sin/cos pair of positional_encoding."""
    n_pairs = d_model // 6
    return 2.0 * math.pi * base ** ((n_pairs - 1) / n_pairs)
