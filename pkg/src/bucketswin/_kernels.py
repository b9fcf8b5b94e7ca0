"""Sequential numba kernels for bucket assignment.

These mirror the pure-python reference loop in bucketing.py exactly; the
python path stays authoritative for traced runs and the kernels are
cross-checked against it in the test suite.  All kernels emulate atomic
counters with plain sequential increments, processing points in index
order so results are bit-deterministic.
"""

import numba as nb
import numpy as np

# hash kind codes, must match hashing.HASH_KINDS order
XOR_MOD, XOR_DIV, ZORDER_MOD, ZORDER_DIV = 0, 1, 2, 3


@nb.njit(cache=True, nogil=True)
def _morton(x, y, z, bits):
    code = np.int64(0)
    for k in range(bits):
        code |= ((x >> k) & 1) << (3 * k)
        code |= ((y >> k) & 1) << (3 * k + 1)
        code |= ((z >> k) & 1) << (3 * k + 2)
    return code


@nb.njit(cache=True, nogil=True)
def _hash(x, y, z, kind, K, S_div, bits, strict_div):
    """Bucket id for one voxel; -1 when strict_div rejects the quotient."""
    if kind == XOR_MOD or kind == XOR_DIV:
        key = x ^ y ^ z
    else:
        key = _morton(x, y, z, bits)
    if kind == XOR_DIV or kind == ZORDER_DIV:
        key = key // S_div
        if strict_div and key >= K:
            return np.int64(-1)
    return key % K


@nb.njit(cache=True, nogil=True)
def _probe_claim(vx, vy, vz, counters, S, K, kind, S_div, bits, strict_div,
                 offsets, max_probes, vmax):
    """Nearest-first rebalancing probe loop against the given counters.

    Perturbed voxels are clamped into [0, vmax] per axis so probes near
    the domain boundary stay hashable.  Each candidate slot is claimed
    with an increment and kept only if the pre-increment count was below
    capacity; otherwise the increment is rolled back and probing
    continues.  Returns (bucket, offset) or (-1, -1) when exhausted.
    """
    P = min(max_probes, offsets.shape[0])
    for p in range(P):
        x = min(max(vx + offsets[p, 0], 0), vmax)
        y = min(max(vy + offsets[p, 1], 0), vmax)
        z = min(max(vz + offsets[p, 2], 0), vmax)
        h = _hash(x, y, z, kind, K, S_div, bits, strict_div)
        if h < 0:
            continue
        if counters[h] < S:
            prev = counters[h]
            counters[h] += 1
            if prev < S:
                return h, prev
            counters[h] -= 1
    return np.int64(-1), np.int64(-1)


@nb.njit(cache=True, nogil=True)
def assign_one_stage(vox, h0, counters, S, K, kind, S_div, bits, strict_div,
                     offsets, max_probes, vmax, bucket_id, bucket_offset):
    """One-stage assignment: direct claim, then racing, then recycle."""
    n = vox.shape[0]
    for i in range(n):
        h = h0[i]
        if counters[h] < S:
            bucket_id[i] = h
            bucket_offset[i] = counters[h]
            counters[h] += 1
        else:
            b, off = _probe_claim(vox[i, 0], vox[i, 1], vox[i, 2], counters,
                                  S, K, kind, S_div, bits, strict_div,
                                  offsets, max_probes, vmax)
            if b < 0:
                bucket_id[i] = K
                bucket_offset[i] = counters[K]
                counters[K] += 1
            else:
                bucket_id[i] = b
                bucket_offset[i] = off


@nb.njit(cache=True, nogil=True)
def two_stage_local(vox, h0, S, K, kind, S_div, bits, strict_div,
                    offsets, max_probes, vmax, ctr_local,
                    hint_bucket, hint_probe):
    """Block-local phase: same claim discipline against counters that
    start at zero.  Records per point the claimed bucket plus how it was
    reached (hint_probe: -1 direct claim, p for probe p, -2 exhausted);
    the commit sweep rebases every claim against the global counters."""
    n = vox.shape[0]
    P = min(max_probes, offsets.shape[0])
    for i in range(n):
        h = h0[i]
        if ctr_local[h] < S:
            hint_bucket[i] = h
            hint_probe[i] = -1
            ctr_local[h] += 1
            continue
        placed = False
        for p in range(P):
            x = min(max(vox[i, 0] + offsets[p, 0], 0), vmax)
            y = min(max(vox[i, 1] + offsets[p, 1], 0), vmax)
            z = min(max(vox[i, 2] + offsets[p, 2], 0), vmax)
            hp = _hash(x, y, z, kind, K, S_div, bits, strict_div)
            if hp < 0 or ctr_local[hp] >= S:
                continue
            hint_bucket[i] = hp
            hint_probe[i] = p
            ctr_local[hp] += 1
            placed = True
            break
        if not placed:
            hint_bucket[i] = K
            hint_probe[i] = -2


@nb.njit(cache=True, nogil=True)
def two_stage_commit(vox, counters, S, K, kind, S_div, bits,
                     strict_div, offsets, max_probes, vmax,
                     hint_bucket, hint_probe, bucket_id, bucket_offset):
    """Commit one block against the global counters, in point order.

    A hinted claim whose bucket still has room commits at the current
    global count, which equals snapshot + local offset whenever the
    bucket saw no cross-block contention (the bulk-rebase fast path).
    Over-capacity hints resume the probe chain from the next offset:
    every bucket the local phase skipped was locally full, hence
    provably full globally by now, so restarting earlier is never
    needed.  Locally exhausted points commit straight to recycle for
    the same reason.  The sweep therefore reproduces the one-stage
    sequential result exactly for any block partition.
    """
    n = vox.shape[0]
    P = min(max_probes, offsets.shape[0])
    for i in range(n):
        b = hint_bucket[i]
        p0 = hint_probe[i]
        if p0 == -2:
            bucket_id[i] = K
            bucket_offset[i] = counters[K]
            counters[K] += 1
            continue
        if counters[b] < S:
            bucket_id[i] = b
            bucket_offset[i] = counters[b]
            counters[b] += 1
            continue
        placed = False
        for p in range(p0 + 1, P):
            x = min(max(vox[i, 0] + offsets[p, 0], 0), vmax)
            y = min(max(vox[i, 1] + offsets[p, 1], 0), vmax)
            z = min(max(vox[i, 2] + offsets[p, 2], 0), vmax)
            hp = _hash(x, y, z, kind, K, S_div, bits, strict_div)
            if hp < 0:
                continue
            if counters[hp] < S:
                bucket_id[i] = hp
                bucket_offset[i] = counters[hp]
                counters[hp] += 1
                placed = True
                break
        if not placed:
            bucket_id[i] = K
            bucket_offset[i] = counters[K]
            counters[K] += 1
