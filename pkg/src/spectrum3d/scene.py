"""ROI grid, spectrum tensor, samples, radiation sources, and dB/mW conversions.

Every other module works in terms of these types. RSS is stored in dBm;
linear milliwatts appear only transiently inside power combination and
fitness computations. Grid cells carry the RSS of their geometric center.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

GRID_MAGIC = b"S3DGRID\x01"


# ---------------------------------------------------------------------------
# Power conversions
# ---------------------------------------------------------------------------

def dbm_to_mw(p_dbm):
    """Convert dBm to milliwatts, 10^(p/10). Works on scalars and arrays."""
    out = np.power(10.0, np.asarray(p_dbm, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def mw_to_dbm(p_mw):
    """Convert milliwatts to dBm, 10*log10(p). Requires strictly positive power."""
    p = np.asarray(p_mw, dtype=float)
    if np.any(p <= 0.0):
        raise ValueError("power must be strictly positive to express in dBm")
    out = 10.0 * np.log10(p)
    return float(out) if out.ndim == 0 else out


def combine_rss_dbm(parts):
    """Combine per-source RSS contributions given in dBm.

    Each entry is converted to mW, the linear powers are summed, and the sum
    is converted back to dBm. Entries may be scalars or equal-shaped arrays
    (e.g. one RSS field per source); the combination is elementwise.

    Parameters
    ----------
    parts : sequence of float or ndarray
        Non-empty collection of finite dBm values.

    Returns
    -------
    float or ndarray
        Combined RSS in dBm, same shape as the inputs.
    """
    if len(parts) == 0:
        raise ValueError("cannot combine an empty list of RSS values")
    stack = np.stack([np.asarray(p, dtype=float) for p in parts])
    if not np.all(np.isfinite(stack)):
        raise ValueError("all RSS values must be finite dBm")
    total_mw = np.sum(np.power(10.0, stack / 10.0), axis=0)
    return mw_to_dbm(total_mw)


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned discretization of the region of interest.

    Attributes
    ----------
    origin : (3,) floats
        Lower corner of the ROI box in meters.
    extent : (3,) floats
        Box size per axis in meters, strictly positive.
    counts : (3,) ints
        Number of cells per axis, all >= 1. Cell size is extent/counts.
    """

    origin: tuple[float, float, float]
    extent: tuple[float, float, float]
    counts: tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "extent", tuple(float(v) for v in self.extent))
        object.__setattr__(self, "counts", tuple(int(v) for v in self.counts))
        if len(self.origin) != 3 or len(self.extent) != 3 or len(self.counts) != 3:
            raise ValueError("origin, extent and counts must have length 3")
        if any(c < 1 for c in self.counts):
            raise ValueError(f"counts must all be >= 1, got {self.counts}")
        if any(e <= 0 for e in self.extent):
            raise ValueError(f"extent must be strictly positive, got {self.extent}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.counts

    @property
    def n_cells(self) -> int:
        n1, n2, n3 = self.counts
        return n1 * n2 * n3

    @property
    def cell_size(self) -> np.ndarray:
        return np.asarray(self.extent) / np.asarray(self.counts)

    def cell_center(self, index) -> np.ndarray:
        """Geometric center of cell (i, j, k) in meters."""
        idx = np.asarray(index)
        if idx.shape != (3,):
            raise ValueError("index must be a triple (i, j, k)")
        if np.any(idx < 0) or np.any(idx >= np.asarray(self.counts)):
            raise IndexError(f"index {tuple(idx)} outside counts {self.counts}")
        return np.asarray(self.origin) + (idx + 0.5) * self.cell_size

    def cell_centers(self) -> np.ndarray:
        """Centers of all cells as an (N1, N2, N3, 3) array in meters."""
        axes = [
            self.origin[a] + (np.arange(self.counts[a]) + 0.5) * self.cell_size[a]
            for a in range(3)
        ]
        xg, yg, zg = np.meshgrid(*axes, indexing="ij")
        return np.stack([xg, yg, zg], axis=-1)

    def nearest_cell(self, position) -> tuple[int, int, int]:
        """Index of the cell containing a position inside the ROI box."""
        pos = np.asarray(position, dtype=float)
        if not self.contains(pos):
            raise ValueError(f"position {pos.tolist()} outside ROI box")
        rel = (pos - np.asarray(self.origin)) / self.cell_size
        idx = np.minimum(np.floor(rel).astype(int), np.asarray(self.counts) - 1)
        return tuple(int(v) for v in idx)

    def contains(self, position) -> bool:
        pos = np.asarray(position, dtype=float)
        lo = np.asarray(self.origin)
        hi = lo + np.asarray(self.extent)
        return bool(np.all(pos >= lo) and np.all(pos <= hi))

    def to_dict(self) -> dict:
        return {
            "origin": list(self.origin),
            "extent": list(self.extent),
            "counts": list(self.counts),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(tuple(d["origin"]), tuple(d["extent"]), tuple(d["counts"]))


@dataclass(frozen=True)
class SpectrumGrid:
    """Dense rank-3 tensor of RSS in dBm plus an observed-cell mask.

    Treated as immutable once constructed; construction owns the arrays.
    """

    spec: GridSpec
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.shape != self.spec.shape:
            raise ValueError(
                f"values shape {values.shape} does not match grid {self.spec.shape}"
            )
        if mask.shape != self.spec.shape:
            raise ValueError(
                f"mask shape {mask.shape} does not match grid {self.spec.shape}"
            )
        if not np.all(np.isfinite(values[mask])):
            raise ValueError("observed cells must hold finite dBm values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def fully_observed(cls, spec: GridSpec, values: np.ndarray) -> "SpectrumGrid":
        return cls(spec, values, np.ones(spec.shape, dtype=bool))

    @property
    def is_fully_observed(self) -> bool:
        return bool(self.mask.all())


@dataclass(frozen=True)
class Sample:
    """One measured (position, RSS) pair."""

    position: tuple[float, float, float]
    rss_dbm: float

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "rss_dbm", float(self.rss_dbm))
        if len(self.position) != 3:
            raise ValueError("sample position must have length 3")
        if not np.isfinite(self.rss_dbm):
            raise ValueError("sample RSS must be finite")


@dataclass(frozen=True)
class TruthSource:
    """Ground-truth radiation source: position in meters, power in watts."""

    position: tuple[float, float, float]
    power_watts: float

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "power_watts", float(self.power_watts))
        if len(self.position) != 3:
            raise ValueError("source position must have length 3")
        if self.power_watts < 0:
            raise ValueError("source power must be nonnegative")

    @property
    def power_dbm(self) -> float:
        return mw_to_dbm(self.power_watts * 1000.0)


@dataclass(frozen=True)
class Scene:
    """ROI grid, truth sources, and operating frequency."""

    grid: GridSpec
    sources: tuple[TruthSource, ...]
    frequency_mhz: float

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "frequency_mhz", float(self.frequency_mhz))
        if self.frequency_mhz <= 0:
            raise ValueError("frequency must be positive (MHz)")

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "sources": [
                {"position": list(s.position), "power_watts": s.power_watts}
                for s in self.sources
            ],
            "frequency_mhz": self.frequency_mhz,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        sources = tuple(
            TruthSource(tuple(s["position"]), s["power_watts"]) for s in d["sources"]
        )
        return cls(GridSpec.from_dict(d["grid"]), sources, d["frequency_mhz"])


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(json.dumps(scene.to_dict(), indent=2) + "\n")


def load_scene(path) -> Scene:
    return Scene.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Grid file formats
# ---------------------------------------------------------------------------

def write_grid_csv(grid: SpectrumGrid, path) -> None:
    """Dump a grid as CSV rows (i, j, k, x, y, z, rss_dbm), one row per cell."""
    centers = grid.spec.cell_centers()
    n1, n2, n3 = grid.spec.shape
    with open(path, "w") as fh:
        fh.write("i,j,k,x,y,z,rss_dbm\n")
        for i in range(n1):
            for j in range(n2):
                for k in range(n3):
                    x, y, z = centers[i, j, k]
                    fh.write(
                        f"{i},{j},{k},{x:.10g},{y:.10g},{z:.10g},"
                        f"{grid.values[i, j, k]:.10g}\n"
                    )


def write_grid_binary(grid: SpectrumGrid, path) -> None:
    """Dump grid values in the compact binary format.

    Layout: 8-byte magic ``S3DGRID\\x01``, three little-endian uint32 dims
    (N1, N2, N3), then N1*N2*N3 little-endian float64 values in row-major
    (C) order. Geometry travels separately in the scene JSON; the mask is
    not stored, so the format is meant for fully observed grids.
    """
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write(struct.pack("<3I", *grid.spec.shape))
        fh.write(np.ascontiguousarray(grid.values, dtype="<f8").tobytes())


def read_grid_binary(path, spec: GridSpec) -> SpectrumGrid:
    """Read a grid written by :func:`write_grid_binary`; dims must match spec."""
    raw = Path(path).read_bytes()
    if raw[:8] != GRID_MAGIC:
        raise ValueError(f"{path}: bad magic, not a spectrum grid dump")
    dims = struct.unpack("<3I", raw[8:20])
    if dims != spec.shape:
        raise ValueError(f"{path}: dims {dims} do not match grid spec {spec.shape}")
    values = np.frombuffer(raw[20:], dtype="<f8").reshape(dims).copy()
    return SpectrumGrid.fully_observed(spec, values)
