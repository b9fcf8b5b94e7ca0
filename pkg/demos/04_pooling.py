"""
Downsampling inside buckets, no neighbor search
===============================================

Each bucket tile is split into sub-buckets of at most rho points by
hashing tile-local voxels and repairing the leftovers onto their
nearest under-filled group.  Pooling then reduces each sub-bucket to
one output point, so the cloud shrinks by ~rho without ever touching
points outside the tile.
"""

import numpy as np

from bucketswin import bucketing, geometry, pooling
from bucketswin.hashing import HashConfig, remap_nonnegative

# a single 11-point tile, pooled by rho=4: sizes must be 4+4+3
rng = np.random.default_rng(1)
tile = rng.uniform(0, 1, size=(11, 3))
sub = pooling.build_subbuckets(tile, rho=4)
print(f"11 points at rho=4 -> sub-bucket sizes {np.sort(sub.sizes).tolist()}")

# members of one sub-bucket sit together; print their coordinates
for j in range(sub.num_subbuckets):
    pts = tile[sub.subbucket_id == j]
    center = pts.mean(axis=0)
    spread = np.linalg.norm(pts - center, axis=1).max()
    print(f"  sub-bucket {j}: {len(pts)} points within {spread:.3f} of centroid")

# -------------------------------------------------------------------
# pool a whole bucketed cloud
n, d, rho = 30_000, 16, 2
cloud = geometry.synth_cloud(seed=9, n=n, dist="surface-shell")
vox = remap_nonnegative(geometry.voxelize(cloud, geometry.VoxelGrid(0.02)))
a = bucketing.assign_buckets(vox, None,
                             HashConfig("zorder-div", K=256, S_div=256), S=512)
feats, _ = bucketing.scatter(rng.normal(size=(n, d)), a)
coords, _ = bucketing.scatter(cloud.coords, a)

pooled, pooled_coords, new_a = pooling.pool_stage(feats, coords, a, rho, "sum")
print(f"\npooled {n} -> {pooled.shape[0]} points "
      f"(reduction {n / pooled.shape[0]:.2f}x)")

# sum pooling conserves the global feature mass
drift = np.abs(pooled.sum(axis=0) - feats.sum(axis=0)).max()
print(f"feature-sum drift: {drift:.2e}")

# the pooled cloud is itself bucketed: same bucket ids, capacity S/rho
assert new_a.K == a.K and new_a.S == a.S // rho
print(f"pooled assignment: K={new_a.K}, S={new_a.S}, "
      f"ready for the next stage")

# pooled coordinates are member centroids.  Because sub-buckets group
# nearby points, centroids stay close to the original shell; pooling
# random pairs instead would pull them deep into the interior.
radii = np.linalg.norm(pooled_coords - 0.5, axis=1)
shuffled = coords[rng.permutation(n)]
_, rand_coords, _ = pooling.pool_stage(feats, shuffled, a, rho, "sum")
rand_radii = np.linalg.norm(rand_coords - 0.5, axis=1)
print(f"shell radius 0.400 -> {radii.mean():.3f} pooled spatially, "
      f"{rand_radii.mean():.3f} pooled at random")
