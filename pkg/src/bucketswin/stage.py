"""Pre-norm transformer stage over bucket-swin scopes.

Per round and per scope the block computes

    F' = MHSA(LN(F) + PE(C)) + F
    F~ = MLP(LN(F')) + F'

writing results back at the same scattered indices, so the physical
layout never changes between rounds.  The positional term is added to
the normalized features right before the Q/K/V projections.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .attention import (AttentionParams, ScopeSchedule, logical_gather,
                        positional_encoding, tiled_attention)
from .bucketing import BucketAssignment
from .errors import ConfigError


@dataclass
class StageParams:
    """Projection, norm and MLP weights for one stage."""

    attention: AttentionParams
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    b_q: np.ndarray
    b_k: np.ndarray
    b_v: np.ndarray
    b_o: np.ndarray
    ln1_gain: np.ndarray
    ln1_bias: np.ndarray
    ln2_gain: np.ndarray
    ln2_bias: np.ndarray
    w_in: np.ndarray
    b_in: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray
    seed: int = 0

    @property
    def d_model(self) -> int:
        return self.attention.d_model

    @property
    def d_hidden(self) -> int:
        return self.w_in.shape[1]


def init_params(seed: int, d_model: int, d_hidden: int | None = None,
                n_heads: int = 4, tile_rows: int = 64) -> StageParams:
    """Seeded init: matrices uniform on +-sqrt(3/fan_in) so the sample
    variance is 1/fan_in; biases zero; LN gains one."""
    if d_hidden is None:
        d_hidden = 4 * d_model
    attn = AttentionParams(d_model=d_model, n_heads=n_heads, tile_rows=tile_rows)
    rng = np.random.default_rng(seed)

    def mat(fan_in, fan_out):
        bound = np.sqrt(3.0 / fan_in)
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    return StageParams(
        attention=attn,
        w_q=mat(d_model, d_model), w_k=mat(d_model, d_model),
        w_v=mat(d_model, d_model), w_o=mat(d_model, d_model),
        b_q=np.zeros(d_model), b_k=np.zeros(d_model),
        b_v=np.zeros(d_model), b_o=np.zeros(d_model),
        ln1_gain=np.ones(d_model), ln1_bias=np.zeros(d_model),
        ln2_gain=np.ones(d_model), ln2_bias=np.zeros(d_model),
        w_in=mat(d_model, d_hidden), b_in=np.zeros(d_hidden),
        w_out=mat(d_hidden, d_model), b_out=np.zeros(d_model),
        seed=seed,
    )


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
               eps: float = 1e-12) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps) * gain + bias


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def _mlp(x: np.ndarray, params: StageParams) -> np.ndarray:
    return gelu(x @ params.w_in + params.b_in) @ params.w_out + params.b_out


def stage_forward(features, coords, assignment: BucketAssignment,
                  schedule: ScopeSchedule, params: StageParams,
                  threads: int = 1) -> np.ndarray:
    """Run every round of the schedule over scattered features.

    features and coords must already be in scattered order (row i is the
    point at layout index i) and stay at those indices in the output.
    The positional term uses coordinates normalized to the cloud's
    bounding box so the encoding is scale-free.
    """
    F = np.array(features, dtype=np.float64, copy=True)
    C = np.asarray(coords, dtype=np.float64)
    if assignment.num_batches != 1:
        raise ConfigError("stage_forward expects a single-batch assignment; "
                          "process batches separately")
    if F.ndim != 2 or F.shape[0] != len(assignment):
        raise ConfigError("features must be (N, d) matching the assignment")
    if C.shape != (F.shape[0], 3):
        raise ConfigError("coords must be (N, 3) matching features")
    if F.shape[1] != params.d_model:
        raise ConfigError(f"feature width {F.shape[1]} != d_model {params.d_model}")
    if assignment.S % 16:
        raise ConfigError(f"attention consumes buckets in 16-row tiles; "
                          f"S={assignment.S} is not a multiple of 16")
    table = assignment.bucket_table(split_recycle=True)
    if schedule.num_buckets != len(table[0]):
        raise ConfigError(
            f"schedule covers {schedule.num_buckets} buckets but the assignment "
            f"has {len(table[0])} (regular + recycle chunks)"
        )
    lo = C.min(axis=0)
    extent = C.max(axis=0) - lo
    extent[extent == 0] = 1.0
    pe = positional_encoding((C - lo) / extent, params.d_model)

    for round_scopes in schedule.rounds:
        x = layer_norm(F, params.ln1_gain, params.ln1_bias) + pe
        Q = x @ params.w_q + params.b_q
        K = x @ params.w_k + params.b_k
        V = x @ params.w_v + params.b_v
        attn_out = np.zeros_like(F)

        def run_scope(scope):
            ranges = logical_gather(table, scope)
            if not ranges:
                return
            out = tiled_attention(Q, K, V, params.attention, ranges=ranges)
            pos = 0
            for start, stop in ranges:
                attn_out[start:stop] = out[pos:pos + (stop - start)]
                pos += stop - start

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(run_scope, round_scopes))
        else:
            for scope in round_scopes:
                run_scope(scope)
        F = F + attn_out @ params.w_o + params.b_o
        F = F + _mlp(layer_norm(F, params.ln2_gain, params.ln2_bias), params)
    return F
