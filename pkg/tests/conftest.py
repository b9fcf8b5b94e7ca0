"""Shared oracles for the test suite.

Everything here is coded independently of the package: plain-python
bit fiddling and dict bookkeeping, so a bug in the library cannot hide
inside its own oracle.
"""

import itertools

import numpy as np
import pytest


# ------------------------------------------------------------- bit oracles

def interleave_oracle(x: int, y: int, z: int, bits: int) -> int:
    """Interleave via string assembly: code = ... z1 y1 x1 z0 y0 x0."""
    out = ""
    for k in range(bits - 1, -1, -1):
        out += str((z >> k) & 1) + str((y >> k) & 1) + str((x >> k) & 1)
    return int(out, 2)


def oracle_hash(v, kind: str, K: int, S_div: int = 8, bits: int = 10) -> int:
    x, y, z = int(v[0]), int(v[1]), int(v[2])
    if kind.startswith("xor"):
        key = x ^ y ^ z
    else:
        key = interleave_oracle(x, y, z, bits)
    if kind.endswith("-div"):
        key //= S_div
    return key % K


# --------------------------------------------------- assignment simulator

def simulate_psh(voxels, kind: str, K: int, S: int, probe_offsets,
                 max_probes: int = 32, S_div: int = 8, bits: int = 10):
    """Literal sequential transcription of the bucketing procedure.

    Direct claim on the home bucket while it has room, otherwise probe
    perturbed voxels nearest-first with increment/verify/rollback, then
    the unbounded recycle bucket K.  Returns (bucket_id, offset, counts)
    as plain lists/dicts.
    """
    vmax = (1 << bits) - 1
    counters = {b: 0 for b in range(K + 1)}
    bucket_id, offset = [], []
    for v in voxels:
        h0 = oracle_hash(v, kind, K, S_div, bits)
        if counters[h0] < S:
            bucket_id.append(h0)
            offset.append(counters[h0])
            counters[h0] += 1
            continue
        placed = False
        for p in range(min(max_probes, len(probe_offsets))):
            dx, dy, dz = probe_offsets[p]
            pv = (min(max(int(v[0]) + dx, 0), vmax),
                  min(max(int(v[1]) + dy, 0), vmax),
                  min(max(int(v[2]) + dz, 0), vmax))
            h = oracle_hash(pv, kind, K, S_div, bits)
            prev = counters[h]
            counters[h] += 1
            if prev < S:
                bucket_id.append(h)
                offset.append(prev)
                placed = True
                break
            counters[h] -= 1
        if not placed:
            bucket_id.append(K)
            offset.append(counters[K])
            counters[K] += 1
    return bucket_id, offset, counters


def lex_probe_offsets():
    """Radius-1 then radius-2 L-inf shells, lexicographic within each."""
    s1 = [d for d in itertools.product((-1, 0, 1), repeat=3) if d != (0, 0, 0)]
    s2 = [d for d in itertools.product(range(-2, 3), repeat=3)
          if max(abs(c) for c in d) == 2]
    return s1 + s2


# ------------------------------------------------------------ other oracles

def naive_attention(Q, K, V, n_heads: int):
    """Triple-loop scaled dot-product attention, one query at a time."""
    m, d = Q.shape
    dh = d // n_heads
    out = np.zeros((m, d))
    for h in range(n_heads):
        sl = slice(h * dh, (h + 1) * dh)
        for i in range(m):
            logits = np.empty(m)
            for j in range(m):
                logits[j] = float(Q[i, sl] @ K[j, sl]) / np.sqrt(dh)
            w = np.exp(logits - logits.max())
            w /= w.sum()
            for j in range(m):
                out[i, sl] += w[j] * V[j, sl]
    return out


def exclusive_prefix_oracle(counts):
    """O(K^2) double-loop exclusive prefix sum."""
    return np.array([sum(int(c) for c in counts[:i]) for i in range(len(counts))],
                    dtype=np.int64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
