"""Voxel-to-bucket hash functions and Z-order (Morton) encoding.

All hashes consume non-negative integer voxel coordinates; callers with
signed voxels must shift them first (see ``remap_nonnegative``).  Two
families exist with a modulo and an integer-division flavour each:

* ``xor-mod``     (v1 ^ v2 ^ v3) mod K
* ``xor-div``     ((v1 ^ v2 ^ v3) div S_div) mod K
* ``zorder-mod``  Z(v) mod K
* ``zorder-div``  (Z(v) div S_div) mod K

The div variants keep a trailing ``mod K`` so the result is always a
valid bucket id; set ``div_overflow="error"`` to reject inputs whose
quotient exceeds K - 1 instead of wrapping.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, RangeError

HASH_KINDS = ("xor-mod", "xor-div", "zorder-mod", "zorder-div")

_AXES = ("x", "y", "z")


@dataclass(frozen=True)
class HashConfig:
    """Parameters shared by every bucket hash.

    K is the number of regular buckets (the recycle bucket is not part of
    the hash range).  S_div is the divisor of the div variants and
    bits_per_axis bounds the Z-order input range.
    """

    kind: str
    K: int
    S_div: int = 8
    bits_per_axis: int = 10
    div_overflow: str = "wrap"

    def __post_init__(self):
        if self.kind not in HASH_KINDS:
            raise ConfigError(f"unknown hash kind {self.kind!r}; expected one of {HASH_KINDS}")
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        if self.S_div < 1:
            raise ConfigError(f"S_div must be >= 1, got {self.S_div}")
        if not 1 <= self.bits_per_axis <= 21:
            raise ConfigError(f"bits_per_axis must be in [1, 21], got {self.bits_per_axis}")
        if self.div_overflow not in ("wrap", "error"):
            raise ConfigError(f"div_overflow must be 'wrap' or 'error', got {self.div_overflow!r}")

    @property
    def kind_code(self) -> int:
        return HASH_KINDS.index(self.kind)


def _check_range(v: np.ndarray, bits_per_axis: int) -> None:
    limit = np.int64(1) << bits_per_axis
    for axis in range(3):
        comp = v[..., axis]
        if comp.size == 0:
            continue
        lo = int(comp.min())
        hi = int(comp.max())
        if lo < 0:
            raise RangeError(
                f"{_AXES[axis]} component {lo} is negative; remap voxels to non-negative first"
            )
        if hi >= limit:
            raise RangeError(
                f"{_AXES[axis]} component {hi} does not fit in {bits_per_axis} bits"
            )


def morton_encode(v, bits_per_axis: int = 10):
    """Interleave the bits of (x, y, z) as ``z_k y_k x_k`` from MSB down.

    Accepts a single ``(3,)`` triple or an ``(..., 3)`` array and returns
    int64 codes of up to ``3 * bits_per_axis`` bits.
    """
    if not 1 <= bits_per_axis <= 21:
        raise ConfigError(f"bits_per_axis must be in [1, 21], got {bits_per_axis}")
    arr = np.asarray(v, dtype=np.int64)
    if arr.shape[-1] != 3:
        raise ConfigError(f"expected last dimension 3, got shape {arr.shape}")
    _check_range(arr, bits_per_axis)
    x, y, z = arr[..., 0], arr[..., 1], arr[..., 2]
    code = np.zeros(arr.shape[:-1], dtype=np.int64)
    for k in range(bits_per_axis):
        code |= ((x >> k) & 1) << (3 * k)
        code |= ((y >> k) & 1) << (3 * k + 1)
        code |= ((z >> k) & 1) << (3 * k + 2)
    if code.ndim == 0:
        return int(code)
    return code


def hash_bucket(v, cfg: HashConfig):
    """Map voxel coordinates to bucket ids in ``[0, K)`` under cfg.

    Input voxels must be non-negative; Z-order variants additionally
    require every component to fit in ``cfg.bits_per_axis`` bits.
    """
    arr = np.asarray(v, dtype=np.int64)
    if arr.shape[-1] != 3:
        raise ConfigError(f"expected last dimension 3, got shape {arr.shape}")
    _check_range(arr, cfg.bits_per_axis)
    if cfg.kind.startswith("xor"):
        key = arr[..., 0] ^ arr[..., 1] ^ arr[..., 2]
    else:
        key = np.asarray(morton_encode(arr, cfg.bits_per_axis))
    if cfg.kind.endswith("-div"):
        key = key // cfg.S_div
        if cfg.div_overflow == "error" and key.size and int(key.max()) >= cfg.K:
            raise RangeError(
                f"hash quotient {int(key.max())} exceeds K-1={cfg.K - 1}; "
                "increase S_div or use div_overflow='wrap'"
            )
    out = key % cfg.K
    if out.ndim == 0:
        return int(out)
    return out


def remap_nonnegative(voxels, batch_id=None) -> np.ndarray:
    """Shift voxel coordinates so the per-batch minimum is zero on each axis.

    With batch_id given, each batch is shifted by its own minimum so the
    hash of one batch never depends on another batch's extent.
    """
    arr = np.asarray(voxels, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ConfigError(f"expected voxels of shape (N, 3), got {arr.shape}")
    if arr.shape[0] == 0:
        return arr.copy()
    out = arr.copy()
    if batch_id is None:
        out -= out.min(axis=0)
        return out
    batch = np.asarray(batch_id, dtype=np.int64)
    if batch.shape != (arr.shape[0],):
        raise ConfigError("batch_id must have shape (N,)")
    for b in np.unique(batch):
        sel = batch == b
        out[sel] -= out[sel].min(axis=0)
    return out
