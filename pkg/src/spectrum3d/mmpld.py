"""Radiation-source counting by maximum-minimum path-loss-difference clustering.

The clustering criterion compares, for a candidate center and every sample,
the free-space path loss implied by their separation against the measured
RSS difference. A sample radiated by the same source as the center shows a
small mismatch (PLD); samples of other sources show large ones. Centers are
added at the sample of maximal minimum mismatch, samples are assigned to the
center of minimal mismatch, and a normalized within/between mismatch ratio
decides when to stop adding centers. The number of centers at the stop is
the detected source count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sampler import samples_to_arrays
from .scene import dbm_to_mw, mw_to_dbm

MIN_DISTANCE_KM = 0.001  # 1 m clamp; zero range breaks the log-distance law

DEFAULT_SIGMA1 = 0.05
DEFAULT_SIGMA2 = 0.5
DEFAULT_K_MAX = 10


class DegenerateClusteringError(ValueError):
    """A sample matched every center exactly; the criterion is undefined."""


def free_space_pl_db(f_mhz, d_km):
    """Free-space path loss 32.4 + 20*log10(f_MHz) + 20*log10(d_km)."""
    f = np.asarray(f_mhz, dtype=float)
    d = np.asarray(d_km, dtype=float)
    if np.any(f <= 0) or np.any(d <= 0):
        raise ValueError("frequency and distance must be positive")
    out = 32.4 + 20.0 * np.log10(f) + 20.0 * np.log10(d)
    return float(out) if out.ndim == 0 else out


def _pld(positions: np.ndarray, rss_dbm: np.ndarray, center_idx: int,
         f_mhz: float) -> np.ndarray:
    """Per-sample path-loss difference against one center.

    For sample i: the free-space loss over the (clamped) center-sample
    distance, minus the absolute RSS difference, in absolute value. The
    center scores against itself at the clamped 1 m distance.
    """
    d_km = np.linalg.norm(positions - positions[center_idx], axis=1) / 1000.0
    d_km = np.maximum(d_km, MIN_DISTANCE_KM)
    theoretical = free_space_pl_db(f_mhz, d_km)
    actual = np.abs(rss_dbm[center_idx] - rss_dbm)
    return np.abs(theoretical - actual)


def pld_vector(samples, center_idx: int, f_mhz: float) -> np.ndarray:
    """Path-loss-difference vector of a sample list against one center."""
    positions, rss = samples_to_arrays(samples)
    if not 0 <= center_idx < len(samples):
        raise IndexError(f"center index {center_idx} out of range")
    return _pld(positions, rss, center_idx, f_mhz)


@dataclass
class ClusteringState:
    """Bookkeeping of the center set and per-sample mismatch minima.

    ``pld`` stacks one mismatch vector per center (in center order), so
    ``d_min`` is the columnwise minimum and ``assignment`` the argmin class.
    ``criterion_history[q]`` is the criterion value after center q+2 was
    added (the criterion needs at least two centers).
    """

    positions: np.ndarray
    rss_dbm: np.ndarray
    f_mhz: float
    thresholds: tuple[float, float]
    centers: list[int] = field(default_factory=list)
    pld: list[np.ndarray] = field(default_factory=list)
    d_min: np.ndarray | None = None
    assignment: np.ndarray | None = None
    criterion_history: list[float] = field(default_factory=list)
    degenerate: bool = False

    @property
    def n_samples(self) -> int:
        return len(self.rss_dbm)

    @property
    def k(self) -> int:
        return len(self.centers)


def init_state(positions, rss_dbm, f_mhz,
               thresholds=(DEFAULT_SIGMA1, DEFAULT_SIGMA2)) -> ClusteringState:
    """Seed the clustering with the highest-RSS sample as first center."""
    positions = np.asarray(positions, dtype=float)
    rss_dbm = np.asarray(rss_dbm, dtype=float)
    if len(rss_dbm) < 2:
        raise ValueError("need at least two samples to cluster")
    state = ClusteringState(positions, rss_dbm, float(f_mhz), thresholds)
    first = int(np.argmax(rss_dbm))
    delta = _pld(positions, rss_dbm, first, state.f_mhz)
    state.centers.append(first)
    state.pld.append(delta)
    state.d_min = delta.copy()
    state.assignment = np.zeros(len(rss_dbm), dtype=int)
    return state


def select_next_center(state: ClusteringState) -> int:
    """Sample of maximal d_min that is not already a center (ties: lowest index)."""
    masked = state.d_min.copy()
    masked[state.centers] = -np.inf
    if np.all(np.isneginf(masked)):
        raise ValueError("all samples are already centers")
    return int(np.argmax(masked))


def update_and_assign(state: ClusteringState, center_idx: int,
                      new_pld: np.ndarray) -> ClusteringState:
    """Fold a new center's mismatch vector into d_min and the assignment.

    Samples move to the new class only on a strict improvement, so ties
    stay with the earlier center.
    """
    if center_idx in state.centers:
        raise ValueError(f"sample {center_idx} is already a center")
    state.centers.append(center_idx)
    state.pld.append(np.asarray(new_pld, dtype=float))
    improved = new_pld < state.d_min
    state.assignment[improved] = state.k - 1
    state.d_min = np.minimum(state.d_min, new_pld)
    return state


def criterion(state: ClusteringState) -> float:
    """Mean over samples of d_min divided by the mean mismatch to other classes.

    Small values mean samples match their own center far better than the
    remaining centers, i.e. the clustering is well separated.
    """
    k = state.k
    if k < 2:
        raise ValueError("criterion needs at least two centers")
    stack = np.stack(state.pld)            # (k, n)
    other_mean = (stack.sum(axis=0) - state.d_min) / (k - 1)
    if np.any(other_mean == 0.0):
        raise DegenerateClusteringError(
            "a sample has zero mismatch to every other class"
        )
    return float(np.mean(state.d_min / other_mean))


def _stop_reached(history: list[float], sigma1: float, sigma2: float) -> bool:
    """Convergence test on the criterion trace.

    ``history[q]`` is the criterion at K = q + 2 centers. With fewer than
    three centers the absolute change against the (empty, taken as zero)
    previous value is tested against sigma1; from three centers on, the
    ratio of successive changes is tested against sigma2. A zero change in
    the denominator counts as converged (the criterion has plateaued).
    """
    k = len(history) + 1
    if k < 3:
        return abs(history[-1] - 0.0) <= sigma1
    prev = history[-2] - (history[-3] if k >= 4 else 0.0)
    curr = history[-1] - history[-2]
    if prev == 0.0:
        return True
    return abs(curr / prev) <= sigma2


def dedupe_samples(positions: np.ndarray, rss_dbm: np.ndarray):
    """Collapse samples at identical positions, averaging their RSS in mW."""
    positions = np.asarray(positions, dtype=float)
    rss_dbm = np.asarray(rss_dbm, dtype=float)
    unique_pos, inverse = np.unique(positions, axis=0, return_inverse=True)
    if len(unique_pos) == len(positions):
        return positions, rss_dbm
    mw = dbm_to_mw(rss_dbm)
    sums = np.zeros(len(unique_pos))
    counts = np.zeros(len(unique_pos))
    np.add.at(sums, inverse, mw)
    np.add.at(counts, inverse, 1.0)
    return unique_pos, mw_to_dbm(sums / counts)


@dataclass(frozen=True)
class DetectionResult:
    """Detected source count plus the final clustering state."""

    k: int
    state: ClusteringState
    warning: bool = False


def detect_source_count(samples, f_mhz: float,
                        thresholds=(DEFAULT_SIGMA1, DEFAULT_SIGMA2),
                        k_max: int = DEFAULT_K_MAX) -> DetectionResult:
    """Detect the number of radiation sources in a sample set.

    Duplicate positions are merged (mW-averaged) first. Centers are added
    greedily at the sample of maximal d_min until the criterion trace
    converges (see :func:`_stop_reached`), k_max is reached, or every sample
    is a center. A degenerate criterion stops the loop early with a warning
    flag instead of failing the run.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    positions, rss = samples_to_arrays(samples)
    positions, rss = dedupe_samples(positions, rss)
    if len(rss) < 2:
        raise ValueError("need at least two distinct samples to detect sources")
    sigma1, sigma2 = thresholds
    state = init_state(positions, rss, f_mhz, (float(sigma1), float(sigma2)))
    if k_max == 1:
        return DetectionResult(1, state)
    warning = False
    while state.k < min(k_max, state.n_samples):
        nxt = select_next_center(state)
        delta = _pld(positions, rss, nxt, state.f_mhz)
        update_and_assign(state, nxt, delta)
        try:
            state.criterion_history.append(criterion(state))
        except DegenerateClusteringError:
            state.degenerate = True
            warning = True
            break
        if _stop_reached(state.criterion_history, sigma1, sigma2):
            break
    return DetectionResult(state.k, state, warning)


def write_criterion_trace(state: ClusteringState, path) -> None:
    """CSV trace (k, criterion) of the detection run, for diagnosis."""
    with open(path, "w") as fh:
        fh.write("k,criterion\n")
        for i, value in enumerate(state.criterion_history):
            fh.write(f"{i + 2},{value:.10g}\n")
