"""Random observation of a truth grid and sample-set file I/O."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .scene import GridSpec, Sample, SpectrumGrid, dbm_to_mw, mw_to_dbm

STRATEGIES = ("uniform-random",)


@dataclass(frozen=True)
class SamplingPlan:
    """How many cells to observe and how to pick them."""

    rate: float
    seed: int
    strategy: str = "uniform-random"

    def __post_init__(self):
        if not 0.0 < self.rate <= 1.0:
            raise ValueError(f"sampling rate must be in (0, 1], got {self.rate}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown sampling strategy {self.strategy!r}")


def draw_samples(truth: SpectrumGrid, plan: SamplingPlan):
    """Observe round(rate * n_cells) distinct cells of a fully observed grid.

    Cells are drawn uniformly without replacement; each sample sits at its
    cell center and carries the truth RSS exactly. Returns the sample list
    and the observation mask. Deterministic in the plan seed; the sample
    count uses round-half-to-even.
    """
    if not truth.is_fully_observed:
        raise ValueError("sampling requires a fully observed truth grid")
    spec = truth.spec
    n_total = spec.n_cells
    n_draw = round(plan.rate * n_total)
    rng = np.random.default_rng(plan.seed)
    flat = rng.choice(n_total, size=n_draw, replace=False)
    idx = np.unravel_index(flat, spec.shape)
    centers = spec.cell_centers()[idx]
    values = truth.values[idx]
    samples = [
        Sample(tuple(pos), rss) for pos, rss in zip(centers, values)
    ]
    mask = np.zeros(spec.shape, dtype=bool)
    mask[idx] = True
    return samples, mask


def samples_to_arrays(samples):
    """Positions (N, 3) and RSS (N,) arrays from a sample list."""
    if len(samples) == 0:
        raise ValueError("empty sample set")
    pos = np.array([s.position for s in samples], dtype=float)
    rss = np.array([s.rss_dbm for s in samples], dtype=float)
    return pos, rss


def samples_to_grid(samples, spec: GridSpec) -> SpectrumGrid:
    """Partially observed grid holding each sample at its nearest cell.

    Samples landing in the same cell are averaged in mW. Unobserved cells
    are left at NaN with a false mask entry.
    """
    pos, rss = samples_to_arrays(samples)
    values = np.full(spec.shape, np.nan)
    acc_mw = {}
    for p, r in zip(pos, rss):
        cell = spec.nearest_cell(p)
        acc_mw.setdefault(cell, []).append(dbm_to_mw(r))
    mask = np.zeros(spec.shape, dtype=bool)
    for cell, powers in acc_mw.items():
        values[cell] = mw_to_dbm(float(np.mean(powers)))
        mask[cell] = True
    return SpectrumGrid(spec, values, mask)


def save_samples_csv(samples, path) -> None:
    """Write samples as CSV rows (x, y, z, rss_dbm); values round-trip exactly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z", "rss_dbm"])
        for s in samples:
            writer.writerow([repr(v) for v in (*s.position, s.rss_dbm)])


def load_samples_csv(path):
    """Read samples written by :func:`save_samples_csv` (or external data)."""
    samples = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"x", "y", "z", "rss_dbm"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"{path}: expected columns x,y,z,rss_dbm")
        for row in reader:
            samples.append(
                Sample((float(row["x"]), float(row["y"]), float(row["z"])),
                       float(row["rss_dbm"]))
            )
    if not samples:
        raise ValueError(f"{path}: no samples found")
    return samples
