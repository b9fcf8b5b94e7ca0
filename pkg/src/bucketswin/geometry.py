"""Point cloud containers, file ingest, synthetic clouds and voxelization."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EmptyInputError, ParseError

SYNTH_DISTS = ("uniform-box", "gaussian-clusters", "surface-shell")


@dataclass
class PointCloud:
    """Float64 coordinates plus an int64 batch id per point.

    Batch ids must be contiguous starting at zero; single-cloud inputs
    use batch 0 everywhere.
    """

    coords: np.ndarray
    batch_id: np.ndarray = field(default=None)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 3:
            raise ConfigError(f"coords must have shape (N, 3), got {self.coords.shape}")
        if self.batch_id is None:
            self.batch_id = np.zeros(len(self.coords), dtype=np.int64)
        else:
            self.batch_id = np.asarray(self.batch_id, dtype=np.int64)
        if self.batch_id.shape != (len(self.coords),):
            raise ConfigError("batch_id must have shape (N,)")
        if len(self.coords):
            self._check_batches()

    def _check_batches(self):
        uniq = np.unique(self.batch_id)
        expect = np.arange(len(uniq))
        if uniq[0] != 0 or not np.array_equal(uniq, expect):
            raise ConfigError(
                f"batch ids must be contiguous from 0, got {uniq.tolist()}"
            )

    def __len__(self) -> int:
        return len(self.coords)

    @property
    def num_batches(self) -> int:
        if not len(self.coords):
            return 0
        return int(self.batch_id.max()) + 1


@dataclass(frozen=True)
class VoxelGrid:
    """Uniform grid: voxel v contains points with floor((p - origin)/size) == v."""

    voxel_size: float
    origin: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (self.voxel_size > 0 and math.isfinite(self.voxel_size)):
            raise ConfigError(f"voxel_size must be positive and finite, got {self.voxel_size}")
        if len(self.origin) != 3:
            raise ConfigError("origin must have 3 components")


def voxelize(cloud: PointCloud, grid: VoxelGrid) -> np.ndarray:
    """Integer voxel coordinates, shape (N, 3), floor convention."""
    origin = np.asarray(grid.origin, dtype=np.float64)
    return np.floor((cloud.coords - origin) / grid.voxel_size).astype(np.int64)


def load_xyz(path) -> PointCloud:
    """Read an ascii .xyz file: ``x y z [batch]`` per line, ``#`` comments.

    Either every data line carries a batch column or none does.  Raises
    ParseError with the offending line number on malformed input and
    EmptyInputError when no data lines remain.
    """
    coords = []
    batches = []
    ncols = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (3, 4):
                raise ParseError(
                    f"{path}:{lineno}: expected 3 or 4 columns, got {len(parts)}"
                )
            if ncols is None:
                ncols = len(parts)
            elif len(parts) != ncols:
                raise ParseError(
                    f"{path}:{lineno}: inconsistent column count ({len(parts)} vs {ncols})"
                )
            try:
                xyz = [float(p) for p in parts[:3]]
            except ValueError:
                raise ParseError(f"{path}:{lineno}: malformed float") from None
            coords.append(xyz)
            if ncols == 4:
                try:
                    batches.append(int(parts[3]))
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: malformed batch id") from None
    if not coords:
        raise EmptyInputError(f"{path}: no data lines")
    batch = np.array(batches, dtype=np.int64) if batches else None
    return PointCloud(np.array(coords, dtype=np.float64), batch)


def write_xyz(cloud: PointCloud, path) -> None:
    """Inverse of load_xyz; floats are written with repr precision so a
    write/read round trip reproduces the array bit for bit."""
    multi = cloud.num_batches > 1
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(len(cloud)):
            x, y, z = (float(c) for c in cloud.coords[i])
            if multi:
                fh.write(f"{x!r} {y!r} {z!r} {int(cloud.batch_id[i])}\n")
            else:
                fh.write(f"{x!r} {y!r} {z!r}\n")


def load_ply(path) -> PointCloud:
    """Minimal ascii PLY reader: vertex element with float x, y, z only."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError(f"{path}:1: not a PLY file")
    nvert = None
    props = []
    in_vertex = False
    body_start = None
    for lineno, line in enumerate(lines[1:], start=2):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format":
            if tok[1:2] != ["ascii"]:
                raise ParseError(f"{path}:{lineno}: only ascii format is supported")
        elif tok[0] == "element":
            in_vertex = tok[1] == "vertex"
            if in_vertex:
                try:
                    nvert = int(tok[2])
                except (IndexError, ValueError):
                    raise ParseError(f"{path}:{lineno}: malformed vertex element") from None
        elif tok[0] == "property" and in_vertex:
            props.append(tok[-1])
        elif tok[0] == "end_header":
            body_start = lineno
            break
    if nvert is None or body_start is None:
        raise ParseError(f"{path}: missing vertex element or end_header")
    if props != ["x", "y", "z"]:
        raise ParseError(f"{path}: vertex properties must be exactly x, y, z; got {props}")
    if nvert == 0:
        raise EmptyInputError(f"{path}: vertex count is 0")
    rows = []
    for lineno, line in enumerate(lines[body_start:], start=body_start + 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"{path}:{lineno}: expected 3 vertex values")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise ParseError(f"{path}:{lineno}: malformed float") from None
        if len(rows) == nvert:
            break
    if len(rows) != nvert:
        raise ParseError(f"{path}: expected {nvert} vertices, found {len(rows)}")
    return PointCloud(np.array(rows, dtype=np.float64))


def synth_cloud(seed: int, n: int, dist: str = "uniform-box") -> PointCloud:
    """Deterministic synthetic cloud in and around the unit box.

    dist: "uniform-box" fills [0,1)^3; "gaussian-clusters" draws tight
    blobs around well separated centers; "surface-shell" samples a thin
    spherical shell centered in the box.
    """
    if dist not in SYNTH_DISTS:
        raise ConfigError(f"unknown dist {dist!r}; expected one of {SYNTH_DISTS}")
    if n < 1:
        raise EmptyInputError(f"synth_cloud needs n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    if dist == "uniform-box":
        pts = rng.random((n, 3))
    elif dist == "gaussian-clusters":
        k = 4
        # Centers on a fixed lattice keep inter-center distance large
        # relative to the intra-cluster spread.
        centers = np.array(
            [[0.2, 0.2, 0.2], [0.8, 0.8, 0.2], [0.2, 0.8, 0.8], [0.8, 0.2, 0.8]]
        )
        which = rng.integers(0, k, size=n)
        pts = centers[which] + rng.normal(0.0, 0.03, size=(n, 3))
    else:
        dirs = rng.normal(size=(n, 3))
        norms = np.linalg.norm(dirs, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        radius = 0.4 + rng.normal(0.0, 0.005, size=(n, 1))
        pts = 0.5 + dirs / norms * radius
    return PointCloud(pts)
