"""Analytical memory-traffic and compute model for attention pipelines.

Rates describe a modern accelerator: contiguous DRAM-to-SRAM streaming
moves about 1e12 floats/s, pointer-chasing random shuffles an order of
magnitude less, dense arithmetic runs at 6e13 FLOPs/s general purpose
and 5e14 FLOPs/s inside fused attention kernels.  The serialization
pipeline pays a sort plus a random scatter every round; the hashed
pipeline pays one coalesced scatter plus O(n) hashing up front and then
streams tiles only.
"""

import math
from dataclasses import dataclass, field

from .errors import ConfigError

BYTES_PER_FLOAT = {"half": 2, "single": 4}
PHASES = ("load", "shuffle", "attention", "writeback")


@dataclass(frozen=True)
class MachineModel:
    """Throughput constants in floats/s and FLOPs/s."""

    dram_to_l1_rate: float = 1e12
    random_shuffle_rate: float = 1e11
    flop_rate: float = 6e13
    attn_flop_rate: float = 5e14

    def __post_init__(self):
        for name in ("dram_to_l1_rate", "random_shuffle_rate", "flop_rate",
                     "attn_flop_rate"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")


@dataclass(frozen=True)
class PhaseCost:
    seconds: float
    floats_moved: float
    bytes_moved: float


@dataclass
class CostReport:
    """Per-phase modeled seconds and payload for one pipeline run."""

    pipeline: str
    n: int
    d: int
    rounds: int
    precision: str
    phases: dict = field(default_factory=dict)

    def __post_init__(self):
        width = BYTES_PER_FLOAT[self.precision]
        for name, ph in self.phases.items():
            if name not in PHASES:
                raise ConfigError(f"unknown phase {name!r}")
            # payload accounting must stay consistent with the precision
            assert ph.bytes_moved == ph.floats_moved * width, (
                f"{name}: bytes {ph.bytes_moved} != floats {ph.floats_moved} x {width}"
            )

    @property
    def total_seconds(self) -> float:
        return sum(ph.seconds for ph in self.phases.values())


def _check_common(n, d, rounds, precision):
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    if d < 1:
        raise ConfigError(f"d must be >= 1, got {d}")
    if rounds < 0:
        raise ConfigError(f"rounds must be >= 0, got {rounds}")
    if precision not in BYTES_PER_FLOAT:
        raise ConfigError(f"precision must be one of {tuple(BYTES_PER_FLOAT)}")


def _attention_phase(n, d, rounds, mm, scope_size, width):
    # per round: stream all tiles once, then fused attention FLOPs;
    # 4*n*scope_size*d covers the two matmuls of scores and values
    floats = rounds * n * d
    seconds = rounds * (n * d / mm.dram_to_l1_rate
                        + 4.0 * n * scope_size * d / mm.attn_flop_rate)
    return PhaseCost(seconds, floats, floats * width)


def model_ptv3(n: int, d: int, rounds: int, mm: MachineModel | None = None,
               scope_size: int = 4096, sort_const: float = 1.0,
               precision: str = "half") -> CostReport:
    """Serialization pipeline: every round re-sorts the cloud and
    scatters features through the random-access path."""
    mm = mm or MachineModel()
    _check_common(n, d, rounds, precision)
    if sort_const <= 0:
        raise ConfigError("sort_const must be positive")
    width = BYTES_PER_FLOAT[precision]
    edge = PhaseCost(n * d / mm.dram_to_l1_rate, n * d, n * d * width)
    shuffle_floats = rounds * n * d
    shuffle_seconds = rounds * (sort_const * n * math.log2(max(n, 2))
                                / mm.flop_rate
                                + n * d / mm.random_shuffle_rate)
    phases = {
        "load": edge,
        "shuffle": PhaseCost(shuffle_seconds, shuffle_floats,
                             shuffle_floats * width),
        "attention": _attention_phase(n, d, rounds, mm, scope_size, width),
        "writeback": edge,
    }
    return CostReport(pipeline="ptv3", n=n, d=d, rounds=rounds,
                      precision=precision, phases=phases)


def model_flash3d(n: int, d: int, rounds: int, K: int = 256, S: int = 512,
                  mm: MachineModel | None = None, scope_size: int = 4096,
                  psh_ops_per_point: float = 1.0,
                  precision: str = "half") -> CostReport:
    """Hashed pipeline: one up-front coalesced scatter plus O(n) hashing;
    rounds change scopes logically, so the shuffle phase never repeats.
    The marginal per-round cost is independent of K and S."""
    mm = mm or MachineModel()
    _check_common(n, d, rounds, precision)
    if K < 1 or S < 1:
        raise ConfigError("K and S must be >= 1")
    width = BYTES_PER_FLOAT[precision]
    edge = PhaseCost(n * d / mm.dram_to_l1_rate, n * d, n * d * width)
    psh_floats = n * d  # single coalesced scatter into bucket order
    psh_seconds = n * d / mm.dram_to_l1_rate + psh_ops_per_point * n / mm.flop_rate
    phases = {
        "load": edge,
        "shuffle": PhaseCost(psh_seconds, psh_floats, psh_floats * width),
        "attention": _attention_phase(n, d, rounds, mm, scope_size, width),
        "writeback": edge,
    }
    return CostReport(pipeline="flash3d", n=n, d=d, rounds=rounds,
                      precision=precision, phases=phases)


def sweep_report(sizes, pipeline: str = "both", mm: MachineModel | None = None,
                 d: int = 64, rounds: int = 12, scope_size: int = 4096,
                 sort_const: float = 1.0, psh_ops_per_point: float = 1.0,
                 precision: str = "half") -> list:
    """Model every size for the requested pipelines.

    Returns one row dict per (size, pipeline) with per-phase seconds,
    totals and, when both pipelines are present, the ratio of the
    serialization phase to the PSH phase at that size.
    """
    mm = mm or MachineModel()
    if pipeline not in ("ptv3", "flash3d", "both"):
        raise ConfigError("pipeline must be 'ptv3', 'flash3d' or 'both'")
    wanted = ("ptv3", "flash3d") if pipeline == "both" else (pipeline,)
    rows = []
    for n in sizes:
        reports = {}
        if "ptv3" in wanted:
            reports["ptv3"] = model_ptv3(n, d, rounds, mm, scope_size,
                                         sort_const, precision)
        if "flash3d" in wanted:
            reports["flash3d"] = model_flash3d(n, d, rounds, mm=mm,
                                               scope_size=scope_size,
                                               psh_ops_per_point=psh_ops_per_point,
                                               precision=precision)
        ratio = None
        if len(reports) == 2:
            ratio = (reports["ptv3"].phases["shuffle"].seconds
                     / reports["flash3d"].phases["shuffle"].seconds)
        for name in wanted:
            rep = reports[name]
            row = {"pipeline": name, "n": n, "d": d, "rounds": rounds,
                   "total_seconds": rep.total_seconds,
                   "serialization_psh_ratio": ratio}
            for ph in PHASES:
                row[f"{ph}_seconds"] = rep.phases[ph].seconds
                row[f"{ph}_bytes"] = rep.phases[ph].bytes_moved
            rows.append(row)
    return rows
