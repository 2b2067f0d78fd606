"""Evaluation metrics: recovery error, zone ratios, source errors, detection rate.

The headline recovery error is the mean absolute relative error between the
estimated and true grids, computed in mW (where values are strictly
positive; relative errors in dBm would divide by values that cross zero).
A conventional root-mean-square variant is available separately for
diagnostics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .scene import SpectrumGrid, dbm_to_mw

DEFAULT_THRESHOLD_DBM = -90.0


def _check_same_spec(est: SpectrumGrid, truth: SpectrumGrid):
    if est.spec != truth.spec:
        raise ValueError("grids must share the same spec")


def rmse(est: SpectrumGrid, truth: SpectrumGrid) -> float:
    """Mean absolute relative recovery error over all cells, in mW."""
    _check_same_spec(est, truth)
    est_mw = dbm_to_mw(est.values)
    truth_mw = dbm_to_mw(truth.values)
    if np.any(truth_mw == 0.0):
        raise ValueError("truth grid contains zero linear power")
    return float(np.mean(np.abs((est_mw - truth_mw) / truth_mw)))


def rms_relative_error(est: SpectrumGrid, truth: SpectrumGrid) -> float:
    """Root-mean-square relative error in mW (diagnostic variant)."""
    _check_same_spec(est, truth)
    est_mw = dbm_to_mw(est.values)
    truth_mw = dbm_to_mw(truth.values)
    if np.any(truth_mw == 0.0):
        raise ValueError("truth grid contains zero linear power")
    rel = (est_mw - truth_mw) / truth_mw
    return float(np.sqrt(np.mean(rel * rel)))


# ---------------------------------------------------------------------------
# Zone ratios
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ZonePartition:
    """Per-cell forbidden mask plus nearest-source attribution for one grid.

    A cell is forbidden when its combined RSS exceeds the threshold; it is
    evaluated under the source nearest to its center, which keeps the
    per-source zones disjoint.
    """

    threshold_dbm: float
    nearest_source: np.ndarray   # (N1, N2, N3) int
    forbidden: np.ndarray        # (N1, N2, N3) bool
    n_sources: int


def zone_partition(grid: SpectrumGrid, sources, threshold_dbm: float) -> ZonePartition:
    """Partition a grid into per-source forbidden/permitted zones."""
    if len(sources) == 0:
        raise ValueError("need at least one source for zone attribution")
    centers = grid.spec.cell_centers()
    src_pos = np.array([s.position for s in sources], dtype=float)
    d = np.linalg.norm(centers[..., None, :] - src_pos, axis=-1)
    nearest = np.argmin(d, axis=-1)
    return ZonePartition(float(threshold_dbm), nearest,
                         grid.values > threshold_dbm, len(sources))


@dataclass(frozen=True)
class ZoneMetrics:
    """Correct-detection and false-alarm zone ratios, total and per source.

    A per-source entry is None (and its index listed in ``skipped``) when
    that source's denominator zone is empty; totals sum the defined entries.
    """

    cdzr: float
    fazr: float
    per_source_cdzr: tuple
    per_source_fazr: tuple
    skipped: tuple


def cdzr_fazr(est: ZonePartition, truth: ZonePartition) -> ZoneMetrics:
    """Compare thresholded zones of an estimated grid against the truth."""
    if est.threshold_dbm != truth.threshold_dbm:
        raise ValueError("zone partitions use different thresholds")
    if est.n_sources != truth.n_sources or not np.array_equal(
            est.nearest_source, truth.nearest_source):
        raise ValueError("zone partitions use different source attributions")
    cd_list, fa_list, skipped = [], [], []
    for j in range(truth.n_sources):
        region = truth.nearest_source == j
        t_forbid = truth.forbidden[region]
        e_forbid = est.forbidden[region]
        n_cd1 = int(np.sum(t_forbid & e_forbid))
        n_md1 = int(np.sum(t_forbid & ~e_forbid))
        n_fa0 = int(np.sum(~t_forbid & e_forbid))
        n_cd0 = int(np.sum(~t_forbid & ~e_forbid))
        cd = n_cd1 / (n_cd1 + n_md1) if (n_cd1 + n_md1) > 0 else None
        fa = n_fa0 / (n_fa0 + n_cd0) if (n_fa0 + n_cd0) > 0 else None
        if cd is None or fa is None:
            skipped.append(j)
        cd_list.append(cd)
        fa_list.append(fa)
    cdzr_total = float(sum(v for v in cd_list if v is not None))
    fazr_total = float(sum(v for v in fa_list if v is not None))
    return ZoneMetrics(cdzr_total, fazr_total, tuple(cd_list), tuple(fa_list),
                       tuple(skipped))


# ---------------------------------------------------------------------------
# Source-level errors
# ---------------------------------------------------------------------------

def _match_sources(est_sources, truth_sources):
    """Minimum-total-distance assignment between the two source lists.

    Returns index pairs (est_idx, truth_idx) covering min(len_est, len_truth)
    sources.
    """
    if len(est_sources) == 0 or len(truth_sources) == 0:
        raise ValueError("source lists must be non-empty")
    est_pos = np.array([s.position for s in est_sources], dtype=float)
    tru_pos = np.array([s.position for s in truth_sources], dtype=float)
    d = np.linalg.norm(est_pos[:, None, :] - tru_pos[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(d)
    return list(zip(rows.tolist(), cols.tolist()))


def loc_error(est_sources, truth_sources) -> float:
    """Mean Euclidean localization error over optimally matched pairs, meters."""
    pairs = _match_sources(est_sources, truth_sources)
    dists = [
        float(np.linalg.norm(np.asarray(est_sources[e].position)
                             - np.asarray(truth_sources[t].position)))
        for e, t in pairs
    ]
    return float(np.mean(dists))


def ss_error(est_sources, truth_sources) -> float:
    """Mean absolute source power error in dBm over the same matching."""
    pairs = _match_sources(est_sources, truth_sources)
    errs = [
        abs(est_sources[e].power_dbm - truth_sources[t].power_dbm)
        for e, t in pairs
    ]
    return float(np.mean(errs))


def detection_success_rate(trials) -> float:
    """Fraction of (k_est, k_true) trials with an exact count match."""
    trials = list(trials)
    if not trials:
        raise ValueError("no detection trials given")
    hits = sum(1 for k_est, k_true in trials if k_est == k_true)
    return hits / len(trials)


# ---------------------------------------------------------------------------
# Per-run report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricsReport:
    """All evaluation quantities for one reconstruction run.

    Source-level fields are None for methods that do not estimate sources
    (the data-driven baselines).
    """

    rmse: float
    cdzr: float
    fazr: float
    k_true: int
    loc_e: float | None = None
    ss_e: float | None = None
    k_est: int | None = None
    detect_success: bool | None = None
    zone_skipped: tuple = ()

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "cdzr": self.cdzr,
            "fazr": self.fazr,
            "loc_e": self.loc_e,
            "ss_e": self.ss_e,
            "k_true": self.k_true,
            "k_est": self.k_est,
            "detect_success": self.detect_success,
            "zone_skipped": list(self.zone_skipped),
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")
