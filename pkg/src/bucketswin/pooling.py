"""In-bucket pooling: split bucket tiles into sub-buckets of capacity rho.

A tile (at most 1024 points from one bucket's contiguous range) is
partitioned into ceil(m / rho) sub-buckets in three steps: hash points
to provisional sub-buckets, seed new sub-buckets from over-capacity
points until the target id count is reached, then place the remainder
into the nearest under-filled sub-bucket.  A final repair pass moves a
few points between under-filled sub-buckets so at most one ends below
capacity, which the three steps alone cannot guarantee when the hash
spreads unevenly.
"""

import math
from dataclasses import dataclass

import numpy as np

from .bucketing import BucketAssignment, compute_bucket_base
from .errors import ConfigError, EmptyInputError, IntegrityError
from .hashing import morton_encode

TILE_CAP = 1024
REDUCES = ("sum", "mean", "min", "max")


@dataclass
class SubBucketAssignment:
    """Partition of one tile: subbucket_id per point, allocation-ordered.

    sizes[j] is the population of sub-bucket j; seeds[j] is the index of
    the first point placed in j (used for nearest-seed placement).
    scan_passes records how many placement rounds step 3 needed.
    """

    subbucket_id: np.ndarray
    rho: int
    num_subbuckets: int
    sizes: np.ndarray
    seeds: np.ndarray
    scan_passes: int = 0

    def validate(self) -> None:
        m = len(self.subbucket_id)
        if self.sizes.shape != (self.num_subbuckets,):
            raise IntegrityError("sizes shape mismatch")
        if int(self.sizes.sum()) != m:
            raise IntegrityError("sub-bucket sizes do not sum to the tile size")
        counted = np.bincount(self.subbucket_id, minlength=self.num_subbuckets)
        if not np.array_equal(counted, self.sizes):
            raise IntegrityError("sizes disagree with subbucket_id")
        if (self.sizes > self.rho).any():
            raise IntegrityError("a sub-bucket exceeds capacity rho")
        if (self.sizes < 1).any():
            raise IntegrityError("empty sub-bucket")
        if int((self.sizes < self.rho).sum()) > 1:
            raise IntegrityError("more than one under-filled sub-bucket")


def _tile_voxels(coords: np.ndarray, bits: int = 10) -> np.ndarray:
    """Quantize tile coordinates onto a 2^bits grid over the tile bbox."""
    lo = coords.min(axis=0)
    extent = coords.max(axis=0) - lo
    extent[extent == 0] = 1.0
    side = (1 << bits) - 1
    return np.minimum((coords - lo) / extent * (side + 1), side).astype(np.int64)


def build_subbuckets(coords, rho: int) -> SubBucketAssignment:
    """Partition one tile of m points into ceil(m / rho) sub-buckets."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ConfigError(f"coords must be (m, 3), got {coords.shape}")
    m = coords.shape[0]
    if m == 0:
        raise EmptyInputError("build_subbuckets needs at least one point")
    if m > TILE_CAP:
        raise ConfigError(f"tile holds {m} points; the cap is {TILE_CAP}")
    if rho < 1:
        raise ConfigError(f"rho must be >= 1, got {rho}")
    target = math.ceil(m / rho)

    # step 1: provisional sub-buckets by Z-order hash of tile-local voxels,
    # ids allocated compactly in first-seen order
    h = np.asarray(morton_encode(_tile_voxels(coords), 10)) % target
    h = np.atleast_1d(h)
    sub_id = np.full(m, -1, dtype=np.int64)
    sizes = np.zeros(target, dtype=np.int64)
    seeds = np.full(target, -1, dtype=np.int64)
    alloc = {}
    overflow = []
    for i in range(m):
        key = int(h[i])
        if key not in alloc:
            alloc[key] = len(alloc)
            seeds[alloc[key]] = i
        j = alloc[key]
        if sizes[j] < rho:
            sub_id[i] = j
            sizes[j] += 1
        else:
            overflow.append(i)
    counter = len(alloc)

    # step 2: over-capacity points seed new sub-buckets until the id
    # counter reaches the target
    queue = []
    for i in overflow:
        if counter < target:
            seeds[counter] = i
            sub_id[i] = counter
            sizes[counter] = 1
            counter += 1
        else:
            queue.append(i)
    if counter != target:
        # provable with integer counting: allocated + overflow >= target
        raise IntegrityError("sub-bucket allocation fell short of the target")

    # step 3: remaining points go to the nearest under-filled sub-bucket,
    # new sub-buckets preferred, distance measured to the seed point
    new_ids = np.arange(len(alloc), target)
    passes = 0
    while queue:
        passes += 1
        if passes > m:
            raise IntegrityError("step 3 exceeded its scan-pass bound")
        still = []
        for i in queue:
            cand = new_ids[sizes[new_ids] < rho]
            if len(cand) == 0:
                cand = np.flatnonzero(sizes < rho)
            if len(cand) == 0:
                still.append(i)
                continue
            d = np.linalg.norm(coords[seeds[cand]] - coords[i], axis=1)
            j = int(cand[np.argmin(d)])  # argmin ties break to the lowest id
            sub_id[i] = j
            sizes[j] += 1
        queue = still

    # repair: the nearest-seed rule can leave several sub-buckets under
    # capacity; pour the smallest into the fullest until at most one is
    # under-filled (the donor can always cover the gap, so none empties)
    while True:
        under = np.flatnonzero(sizes < rho)
        if len(under) <= 1:
            break
        full_t = int(under[np.argmax(sizes[under])])
        rest = under[under != full_t]
        donor = int(rest[np.argmin(sizes[rest])])
        need = int(rho - sizes[full_t])
        members = np.flatnonzero(sub_id == donor)
        d = np.linalg.norm(coords[members] - coords[seeds[full_t]], axis=1)
        move = members[np.argsort(d, kind="stable")[:need]]
        sub_id[move] = full_t
        sizes[full_t] += len(move)
        sizes[donor] -= len(move)

    out = SubBucketAssignment(subbucket_id=sub_id, rho=rho,
                              num_subbuckets=target, sizes=sizes,
                              seeds=seeds, scan_passes=passes)
    out.validate()
    return out


def pool_features(features, sub: SubBucketAssignment, reduce: str = "mean") -> np.ndarray:
    """Reduce each sub-bucket's rows to one row, in sub-bucket id order."""
    if reduce not in REDUCES:
        raise ConfigError(f"reduce must be one of {REDUCES}, got {reduce!r}")
    feats = np.asarray(features, dtype=np.float64)
    if feats.shape[0] != len(sub.subbucket_id):
        raise ConfigError("features rows do not match the sub-bucket assignment")
    sub.validate()
    order = np.argsort(sub.subbucket_id, kind="stable")
    bounds = np.zeros(sub.num_subbuckets, dtype=np.int64)
    np.cumsum(sub.sizes[:-1], out=bounds[1:])
    grouped = feats[order]
    if reduce == "sum":
        return np.add.reduceat(grouped, bounds, axis=0)
    if reduce == "mean":
        return np.add.reduceat(grouped, bounds, axis=0) / sub.sizes[:, None]
    if reduce == "min":
        return np.minimum.reduceat(grouped, bounds, axis=0)
    return np.maximum.reduceat(grouped, bounds, axis=0)


def pool_stage(features, coords, assignment: BucketAssignment, rho: int,
               reduce: str = "mean"):
    """Pool every bucket of a scattered cloud down by a factor of rho.

    Bucket ranges are split into tiles of at most 1024 points in scatter
    order; each tile is sub-bucketed and reduced independently.  Pooled
    coordinates are sub-bucket centroids.  Returns (pooled_features,
    pooled_coords, new_assignment) where the new assignment keeps every
    bucket's identity with counts divided by rho (rounded up) and
    capacity ceil(S / rho).
    """
    feats = np.asarray(features, dtype=np.float64)
    C = np.asarray(coords, dtype=np.float64)
    if feats.shape[0] != len(assignment) or C.shape != (feats.shape[0], 3):
        raise ConfigError("features/coords must match the assignment size")
    if rho < 1:
        raise ConfigError(f"rho must be >= 1, got {rho}")
    K, S = assignment.K, assignment.S
    nslots = assignment.num_batches * (K + 1)
    out_feats = []
    out_coords = []
    new_counts = np.zeros(nslots, dtype=np.int64)
    new_bucket = []
    new_batch = []
    for slot in range(nslots):
        start = int(assignment.bucket_base[slot])
        count = int(assignment.counts[slot])
        if count == 0:
            continue
        local = slot % (K + 1)
        batch = slot // (K + 1)
        for t0 in range(0, count, TILE_CAP):
            rows = slice(start + t0, start + min(t0 + TILE_CAP, count))
            sub = build_subbuckets(C[rows], rho)
            out_feats.append(pool_features(feats[rows], sub, reduce))
            out_coords.append(pool_features(C[rows], sub, "mean"))
            new_counts[slot] += sub.num_subbuckets
            new_bucket.extend([local] * sub.num_subbuckets)
            new_batch.extend([batch] * sub.num_subbuckets)
    pooled_feats = np.vstack(out_feats)
    pooled_coords = np.vstack(out_coords)
    new_bucket = np.array(new_bucket, dtype=np.int64)
    new_batch = np.array(new_batch, dtype=np.int64)
    offsets = np.empty(len(new_bucket), dtype=np.int64)
    pos = 0
    for slot in range(nslots):
        c = int(new_counts[slot])
        offsets[pos:pos + c] = np.arange(c)
        pos += c
    new_assignment = BucketAssignment(
        bucket_id=new_bucket, bucket_offset=offsets, counts=new_counts,
        bucket_base=compute_bucket_base(new_counts), S=max(1, math.ceil(S / rho)),
        K=K, batch_id=new_batch, num_batches=assignment.num_batches,
    )
    new_assignment.validate()
    return pooled_feats, pooled_coords, new_assignment
