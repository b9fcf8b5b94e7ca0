"""Perfect-spatial-hash bucketing with bucket-swin attention.

Points are voxelized, hashed into K fixed-capacity buckets with an
optimistic-racing rebalance (plus a recycle bucket for the overflow),
and scattered once into bucket-contiguous order.  Attention then runs
over scheduled windows of whole buckets as pure index arithmetic: no
per-round gather, tile-streamed online softmax, verified against a
dense reference.  A pooling step merges each bucket's points rho at a
time while preserving the bucket structure, and a memory-traffic model
compares the one-shot scatter against per-round serialization.
"""

from .attention import (AttentionParams, CopyMeter, ScopeSchedule,
                        build_schedule, copy_meter, logical_gather,
                        lowest_period, positional_encoding,
                        reference_attention, tiled_attention)
from .bucketing import (BucketAssignment, ProbeSchedule, assign_buckets,
                        assign_buckets_two_stage, claim_slot,
                        compute_bucket_base, default_probe_schedule,
                        optimistic_race, scatter)
from .costmodel import (CostReport, MachineModel, PhaseCost, model_flash3d,
                        model_ptv3, sweep_report)
from .errors import (ConfigError, EmptyInputError, IntegrityError,
                     NumericError, ParseError, RangeError)
from .geometry import (PointCloud, VoxelGrid, load_ply, load_xyz, synth_cloud,
                       voxelize, write_xyz)
from .hashing import (HASH_KINDS, HashConfig, hash_bucket, morton_encode,
                      remap_nonnegative)
from .pooling import (SubBucketAssignment, build_subbuckets, pool_features,
                      pool_stage)
from .stage import (StageParams, gelu, init_params, layer_norm, stage_forward)

__version__ = "0.1.0"

__all__ = [
    "AttentionParams", "BucketAssignment", "ConfigError", "CopyMeter",
    "CostReport", "EmptyInputError", "HASH_KINDS", "HashConfig",
    "IntegrityError", "MachineModel", "NumericError", "ParseError",
    "PhaseCost", "PointCloud", "ProbeSchedule", "RangeError",
    "ScopeSchedule", "StageParams", "SubBucketAssignment", "VoxelGrid",
    "assign_buckets", "assign_buckets_two_stage", "build_schedule",
    "build_subbuckets", "claim_slot", "compute_bucket_base", "copy_meter",
    "default_probe_schedule", "gelu", "hash_bucket", "init_params",
    "layer_norm", "load_ply", "load_xyz", "logical_gather", "lowest_period",
    "model_flash3d", "model_ptv3", "morton_encode", "optimistic_race",
    "pool_features", "pool_stage", "positional_encoding",
    "reference_attention", "remap_nonnegative", "scatter", "stage_forward",
    "sweep_report", "synth_cloud", "tiled_attention", "voxelize", "write_xyz",
]
