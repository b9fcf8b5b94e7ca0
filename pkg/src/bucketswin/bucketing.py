"""Perfect spatial hashing: bucket assignment with optimistic racing.

Every point receives a (bucket_id, bucket_offset) pair such that
``bucket_base[bucket] + offset`` is a bijection onto [0, N).  Overfull
buckets shed points through a probe loop over perturbed voxels; points
that exhaust their probes land in the recycle bucket with id K.

Batches are processed independently and sequentially: each batch owns a
private block of K + 1 counters, and the flattened counter array is
batch-major so the scattered layout packs batch 0 first.  With a single
batch the counter array is exactly ``int[K + 1]`` with the recycle
bucket at index K.
"""

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError, EmptyInputError, IntegrityError, RangeError
from .hashing import HashConfig, hash_bucket

DEFAULT_MAX_PROBES = 32


@dataclass(frozen=True)
class ProbeSchedule:
    """Probe offsets used by optimistic racing, nearest shell first.

    offsets is (P, 3) with the zero offset excluded; max_probes caps how
    many are tried per point; seed records the shuffle used, if any.
    """

    offsets: np.ndarray
    max_probes: int = DEFAULT_MAX_PROBES
    seed: int | None = None

    def __post_init__(self):
        arr = np.asarray(self.offsets, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] == 0:
            raise ConfigError(f"offsets must be a non-empty (P, 3) array, got {arr.shape}")
        if (np.abs(arr).max(axis=1) == 0).any():
            raise ConfigError("probe offsets must exclude (0, 0, 0)")
        if self.max_probes < 1:
            raise ConfigError(f"max_probes must be >= 1, got {self.max_probes}")
        object.__setattr__(self, "offsets", arr)


def default_probe_schedule(seed: int | None = None,
                           max_probes: int = DEFAULT_MAX_PROBES) -> ProbeSchedule:
    """26 L-inf radius-1 offsets then 98 radius-2 offsets, lexicographic.

    With a seed, each radius shell is shuffled internally so bucket
    boundaries are perturbed while near offsets are still probed first.
    """
    shell1 = [d for d in itertools.product((-1, 0, 1), repeat=3) if d != (0, 0, 0)]
    shell2 = [d for d in itertools.product(range(-2, 3), repeat=3)
              if max(abs(c) for c in d) == 2]
    if seed is not None:
        rng = np.random.default_rng(seed)
        rng.shuffle(shell1)
        rng.shuffle(shell2)
    offsets = np.array(shell1 + shell2, dtype=np.int64)
    return ProbeSchedule(offsets, max_probes=max_probes, seed=seed)


@dataclass
class BucketAssignment:
    """Result of PSH bucketing over a (possibly multi-batch) cloud.

    bucket_id holds per-batch local ids in [0, K] (K is the recycle
    bucket).  counts and bucket_base are flat, batch-major arrays of
    length ``num_batches * (K + 1)``; bucket_base is the exclusive
    prefix sum of counts, so with one batch the contiguous destination
    of point i is ``bucket_base[bucket_id[i]] + bucket_offset[i]``.
    """

    bucket_id: np.ndarray
    bucket_offset: np.ndarray
    counts: np.ndarray
    bucket_base: np.ndarray
    S: int
    K: int
    batch_id: np.ndarray = field(default=None)
    num_batches: int = 1

    def __post_init__(self):
        if self.batch_id is None:
            self.batch_id = np.zeros(len(self.bucket_id), dtype=np.int64)

    def __len__(self) -> int:
        return len(self.bucket_id)

    def slot_id(self) -> np.ndarray:
        """Global counter slot per point: batch * (K + 1) + local id."""
        return self.batch_id * (self.K + 1) + self.bucket_id

    def dest_index(self) -> np.ndarray:
        return self.bucket_base[self.slot_id()] + self.bucket_offset

    def recycle_fraction(self) -> float:
        n = len(self)
        if n == 0:
            return 0.0
        return float(np.count_nonzero(self.bucket_id == self.K)) / n

    def counts_of_batch(self, batch: int) -> np.ndarray:
        """The K+1 counter values belonging to one batch."""
        if not 0 <= batch < self.num_batches:
            raise ConfigError(f"batch {batch} out of range")
        w = self.K + 1
        return self.counts[batch * w:(batch + 1) * w]

    def validate(self) -> None:
        """Raise IntegrityError unless every structural invariant holds."""
        n = len(self)
        nslots = self.num_batches * (self.K + 1)
        if self.counts.shape != (nslots,) or self.bucket_base.shape != (nslots,):
            raise IntegrityError("counts/bucket_base have the wrong shape")
        if self.counts.sum() != n:
            raise IntegrityError("counts do not sum to the point count")
        regular = np.ones(nslots, dtype=bool)
        regular[self.K::self.K + 1] = False
        if (self.counts[regular] > self.S).any():
            raise IntegrityError("a non-recycle bucket exceeds capacity S")
        if (self.counts < 0).any():
            raise IntegrityError("negative bucket count")
        expect_base = np.zeros(nslots, dtype=np.int64)
        np.cumsum(self.counts[:-1], out=expect_base[1:])
        if not np.array_equal(self.bucket_base, expect_base):
            raise IntegrityError("bucket_base is not the exclusive prefix sum of counts")
        if n == 0:
            return
        if self.bucket_id.min() < 0 or self.bucket_id.max() > self.K:
            raise IntegrityError("bucket_id outside [0, K]")
        slots = self.slot_id()
        if (self.bucket_offset < 0).any() or (self.bucket_offset >= self.counts[slots]).any():
            raise IntegrityError("bucket_offset outside [0, count)")
        dest = self.bucket_base[slots] + self.bucket_offset
        seen = np.zeros(n, dtype=bool)
        seen[dest] = True
        if not seen.all():
            raise IntegrityError("destination map is not a bijection onto [0, N)")

    def bucket_table(self, split_recycle: bool = True):
        """(starts, lengths) of each contiguous bucket range in the scattered
        layout, single batch only.  The recycle region is split into
        S-sized pseudo-buckets (last one underfilled) so attention can
        schedule it like any other bucket."""
        if self.num_batches != 1:
            raise ConfigError("bucket_table requires a single-batch assignment")
        starts = list(self.bucket_base[:self.K])
        lengths = list(self.counts[:self.K])
        r = int(self.counts[self.K])
        base = int(self.bucket_base[self.K])
        if split_recycle:
            for j in range(0, r, self.S):
                starts.append(base + j)
                lengths.append(min(self.S, r - j))
        else:
            # recycle id K stays addressable even when empty
            starts.append(base)
            lengths.append(r)
        return np.array(starts, dtype=np.int64), np.array(lengths, dtype=np.int64)


def compute_bucket_base(counts) -> np.ndarray:
    """Exclusive prefix sum; same length as counts, base[0] == 0."""
    arr = np.asarray(counts, dtype=np.int64)
    if arr.ndim != 1:
        raise ConfigError("counts must be 1-D")
    if (arr < 0).any():
        raise ConfigError("counts must be non-negative")
    base = np.zeros(len(arr), dtype=np.int64)
    if len(arr) > 1:
        np.cumsum(arr[:-1], out=base[1:])
    return base


def claim_slot(counters, bucket: int, capacity: int, trace=None):
    """Increment-then-verify claim on one counter.

    Emulates the atomic fetch-add: the pre-increment value is the
    claimed offset and the claim is valid only when that value was below
    capacity; otherwise the increment is rolled back and None returned.
    Checking the post-increment value instead would admit one extra
    point per bucket, which is why the comparison is strict.
    """
    prev = int(counters[bucket])
    counters[bucket] += 1
    if prev < capacity:
        if trace is not None:
            trace.append(("claim", bucket, prev))
        return prev
    counters[bucket] -= 1
    if trace is not None:
        trace.append(("full", bucket, prev))
    return None


def optimistic_race(i: int, v, counters, S: int, cfg: HashConfig,
                    probes: ProbeSchedule, trace=None):
    """Rebalance one point whose home bucket is full.

    Probes perturbed voxels nearest first; each candidate is claimed
    with increment/validate/rollback.  Falls back to the recycle bucket
    (id K, unbounded) when every probe fails.  Returns (bucket, offset).
    """
    vmax = (np.int64(1) << cfg.bits_per_axis) - 1
    strict = cfg.div_overflow == "error"
    vx, vy, vz = int(v[0]), int(v[1]), int(v[2])
    P = min(probes.max_probes, len(probes.offsets))
    for p in range(P):
        dx, dy, dz = probes.offsets[p]
        x = min(max(vx + int(dx), 0), int(vmax))
        y = min(max(vy + int(dy), 0), int(vmax))
        z = min(max(vz + int(dz), 0), int(vmax))
        h = int(_kernels._hash(np.int64(x), np.int64(y), np.int64(z),
                               cfg.kind_code, cfg.K, cfg.S_div,
                               cfg.bits_per_axis, strict))
        if h < 0:
            if trace is not None:
                trace.append((i, "probe", p, -1, "skipped"))
            continue
        if counters[h] < S:
            off = claim_slot(counters, h, S)
            if off is not None:
                if trace is not None:
                    trace.append((i, "probe", p, h, "claimed"))
                return h, off
        if trace is not None:
            trace.append((i, "probe", p, h, "full"))
    off = int(counters[cfg.K])
    counters[cfg.K] += 1
    if trace is not None:
        trace.append((i, "recycle", P, cfg.K, "claimed"))
    return cfg.K, off


def _prepare(voxels, batch_id, cfg: HashConfig, S: int):
    vox = np.ascontiguousarray(np.asarray(voxels, dtype=np.int64))
    if vox.ndim != 2 or vox.shape[1] != 3:
        raise ConfigError(f"voxels must have shape (N, 3), got {vox.shape}")
    n = vox.shape[0]
    if n == 0:
        raise EmptyInputError("assign_buckets needs at least one point")
    if vox.min() < 0:
        raise RangeError("voxels must be non-negative; remap them first")
    if S < 1:
        raise ConfigError(f"S must be >= 1, got {S}")
    if batch_id is None:
        batch = np.zeros(n, dtype=np.int64)
    else:
        batch = np.asarray(batch_id, dtype=np.int64)
        if batch.shape != (n,):
            raise ConfigError("batch_id must have shape (N,)")
    nb_ = int(batch.max()) + 1 if n else 1
    if batch.min() < 0 or not np.array_equal(np.unique(batch), np.arange(nb_)):
        raise ConfigError("batch ids must be contiguous from 0")
    h0 = np.ascontiguousarray(np.asarray(hash_bucket(vox, cfg), dtype=np.int64))
    return vox, batch, nb_, h0


def _finish(cfg, S, bucket_id, bucket_offset, counts, batch, nbatches):
    base = compute_bucket_base(counts)
    out = BucketAssignment(bucket_id=bucket_id, bucket_offset=bucket_offset,
                           counts=counts, bucket_base=base, S=S, K=cfg.K,
                           batch_id=batch, num_batches=nbatches)
    out.validate()
    return out


def assign_buckets(voxels, batch_id, cfg: HashConfig, S: int,
                   probes: ProbeSchedule | None = None,
                   trace=None) -> BucketAssignment:
    """One-stage reference assignment: sequential claim/probe/recycle.

    Points are processed in index order per batch: direct claim when the
    home bucket has room, otherwise optimistic racing, otherwise the
    recycle bucket.  Passing a trace list switches to the instrumented
    pure-python path, which records every probe decision.
    """
    if probes is None:
        probes = default_probe_schedule()
    vox, batch, nbatches, h0 = _prepare(voxels, batch_id, cfg, S)
    n = len(h0)
    bucket_id = np.empty(n, dtype=np.int64)
    bucket_offset = np.empty(n, dtype=np.int64)
    counts = np.zeros(nbatches * (cfg.K + 1), dtype=np.int64)
    strict = cfg.div_overflow == "error"
    vmax = (np.int64(1) << cfg.bits_per_axis) - 1
    for b in range(nbatches):
        sel = np.flatnonzero(batch == b)
        ctr = counts[b * (cfg.K + 1):(b + 1) * (cfg.K + 1)]
        if trace is None:
            out_id = np.empty(len(sel), dtype=np.int64)
            out_off = np.empty(len(sel), dtype=np.int64)
            _kernels.assign_one_stage(vox[sel], h0[sel], ctr, S, cfg.K,
                                      cfg.kind_code, cfg.S_div, cfg.bits_per_axis,
                                      strict, probes.offsets, probes.max_probes,
                                      vmax, out_id, out_off)
            bucket_id[sel] = out_id
            bucket_offset[sel] = out_off
        else:
            for i in sel:
                h = int(h0[i])
                if ctr[h] < S:
                    bucket_id[i] = h
                    bucket_offset[i] = ctr[h]
                    ctr[h] += 1
                    trace.append((int(i), "direct", -1, h, "claimed"))
                else:
                    trace.append((int(i), "direct", -1, h, "full"))
                    bid, off = optimistic_race(int(i), vox[i], ctr, S, cfg,
                                               probes, trace=trace)
                    bucket_id[i] = bid
                    bucket_offset[i] = off
    return _finish(cfg, S, bucket_id, bucket_offset, counts, batch, nbatches)


def assign_buckets_two_stage(voxels, batch_id, cfg: HashConfig, S: int,
                             probes: ProbeSchedule | None = None,
                             block_size: int = 1024,
                             threads: int = 1) -> BucketAssignment:
    """Two-stage assignment: block-local counters, bulk commit, rebase.

    Each block of consecutive points is first assigned against counters
    that start at zero (including block-local racing), recording how
    each claim was reached.  Blocks then commit in index order: a claim
    whose bucket still has room takes the current global count as its
    offset (equal to snapshot-plus-local-offset when the bucket saw no
    cross-block contention), over-capacity claims resume their probe
    chain against the global counters, and locally exhausted points go
    to recycle.  Local phases are independent, so threads only speed
    them up; the committed result is identical to assign_buckets for
    every block size and thread count.
    """
    if probes is None:
        probes = default_probe_schedule()
    if block_size < 1:
        raise ConfigError(f"block_size must be >= 1, got {block_size}")
    vox, batch, nbatches, h0 = _prepare(voxels, batch_id, cfg, S)
    n = len(h0)
    bucket_id = np.empty(n, dtype=np.int64)
    bucket_offset = np.empty(n, dtype=np.int64)
    counts = np.zeros(nbatches * (cfg.K + 1), dtype=np.int64)
    strict = cfg.div_overflow == "error"
    vmax = (np.int64(1) << cfg.bits_per_axis) - 1

    def local_phase(vox_blk, h0_blk):
        ctr_local = np.zeros(cfg.K + 1, dtype=np.int64)
        hint_bucket = np.empty(len(h0_blk), dtype=np.int64)
        hint_probe = np.empty(len(h0_blk), dtype=np.int64)
        _kernels.two_stage_local(vox_blk, h0_blk, S, cfg.K, cfg.kind_code,
                                 cfg.S_div, cfg.bits_per_axis, strict,
                                 probes.offsets, probes.max_probes, vmax,
                                 ctr_local, hint_bucket, hint_probe)
        return hint_bucket, hint_probe

    for b in range(nbatches):
        sel = np.flatnonzero(batch == b)
        ctr = counts[b * (cfg.K + 1):(b + 1) * (cfg.K + 1)]
        blocks = [sel[s:s + block_size] for s in range(0, len(sel), block_size)]
        vox_blocks = [np.ascontiguousarray(vox[blk]) for blk in blocks]
        h0_blocks = [np.ascontiguousarray(h0[blk]) for blk in blocks]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                hints = list(pool.map(local_phase, vox_blocks, h0_blocks))
        else:
            hints = [local_phase(v, h) for v, h in zip(vox_blocks, h0_blocks)]
        for blk, vox_blk, (hint_bucket, hint_probe) in zip(blocks, vox_blocks, hints):
            ids = np.empty(len(blk), dtype=np.int64)
            offs = np.empty(len(blk), dtype=np.int64)
            _kernels.two_stage_commit(vox_blk, ctr, S, cfg.K, cfg.kind_code,
                                      cfg.S_div, cfg.bits_per_axis, strict,
                                      probes.offsets, probes.max_probes,
                                      vmax, hint_bucket, hint_probe, ids, offs)
            bucket_id[blk] = ids
            bucket_offset[blk] = offs
    return _finish(cfg, S, bucket_id, bucket_offset, counts, batch, nbatches)


def scatter(features, assignment: BucketAssignment):
    """Pack rows contiguously by bucket: row i moves to dest_index()[i].

    Returns (scattered, perm) with perm[i] the destination of source row
    i.  The assignment is validated first so a corrupted map fails as an
    IntegrityError instead of silently losing rows.
    """
    feats = np.asarray(features)
    if feats.shape[0] != len(assignment):
        raise ConfigError(
            f"features rows ({feats.shape[0]}) != assignment size ({len(assignment)})"
        )
    assignment.validate()
    perm = assignment.dest_index()
    scattered = np.empty_like(feats)
    scattered[perm] = feats
    return scattered, perm
