"""
Spatial hash functions and what "nearby" means to each
=======================================================

Four bucket hash functions over integer voxel coordinates, and a
measurement of how well each one keeps spatial neighbors together.
"""

import numpy as np

from bucketswin.hashing import HashConfig, hash_bucket, morton_encode

# Z-order (Morton) interleaving: bit k of x lands at output bit 3k, so
# voxels that share high-order bits sit close on the curve
for v in [(0, 0, 0), (1, 1, 1), (1, 2, 3), (7, 7, 7)]:
    code = morton_encode(np.array([v]), bits_per_axis=4)[0]
    print(f"morton{v} = {int(code):4d} = {int(code):012b}")

# build every voxel of a 16^3 grid
side = 16
g = np.arange(side)
vox = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)

# hash the whole grid with each scheme; K buckets of ~64 voxels each
K = 64
kinds = ("xor-mod", "xor-div", "zorder-mod", "zorder-div")
ids = {kind: hash_bucket(vox, HashConfig(kind, K=K, S_div=64)) for kind in kinds}

# locality score: mean pairwise distance of voxels that share a bucket,
# relative to the same statistic for a randomly shuffled bucket labeling.
# Below 1.0 means the hash groups genuinely nearby voxels.
rng = np.random.default_rng(0)


def mean_intra_distance(labels):
    total, count = 0.0, 0
    for b in range(K):
        pts = vox[labels == b].astype(float)
        if len(pts) < 2:
            continue
        diff = pts[:, None] - pts[None, :]
        d = np.sqrt((diff ** 2).sum(-1))
        iu = np.triu_indices(len(pts), 1)
        total += d[iu].sum()
        count += len(iu[0])
    return total / count


print(f"\n{'hash':<12} {'locality vs random':>20}")
for kind in kinds:
    intra = mean_intra_distance(ids[kind])
    base = mean_intra_distance(rng.permutation(ids[kind]))
    print(f"{kind:<12} {intra / base:>19.3f}x")

# the -div variants assign contiguous runs of the Z-order curve to the
# same bucket, so their ratio drops far below the xor mixers
