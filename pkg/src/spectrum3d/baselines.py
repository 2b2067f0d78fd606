"""Data-driven reconstruction baselines: IDW interpolation and HaLRTC completion."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .sampler import samples_to_arrays
from .scene import GridSpec, SpectrumGrid


@dataclass(frozen=True)
class IdwConfig:
    """Inverse-distance weighting: weight = d**-power over the k nearest samples."""

    power_exponent: float = 2.0
    neighbor_count: int = 8

    def __post_init__(self):
        if self.power_exponent <= 0:
            raise ValueError("power exponent must be positive")
        if self.neighbor_count < 1:
            raise ValueError("neighbor count must be >= 1")


def idw_reconstruct(samples, grid_spec: GridSpec,
                    config: IdwConfig = IdwConfig()) -> SpectrumGrid:
    """Interpolate every cell center from its nearest samples, in dBm.

    A cell coinciding with a sample position returns that sample exactly.
    The output is a convex combination of sample values, hence bounded by
    their min and max.
    """
    positions, rss = samples_to_arrays(samples)
    k = min(config.neighbor_count, len(rss))
    tree = cKDTree(positions)
    centers = grid_spec.cell_centers().reshape(-1, 3)
    dist, idx = tree.query(centers, k=k)
    if k == 1:
        dist = dist[:, None]
        idx = idx[:, None]
    exact = dist[:, 0] < 1e-9
    with np.errstate(divide="ignore"):
        weights = np.power(dist, -config.power_exponent)
    values = np.empty(len(centers))
    values[exact] = rss[idx[exact, 0]]
    rest = ~exact
    values[rest] = (np.sum(weights[rest] * rss[idx[rest]], axis=1)
                    / np.sum(weights[rest], axis=1))
    return SpectrumGrid.fully_observed(grid_spec,
                                       values.reshape(grid_spec.shape))


@dataclass(frozen=True)
class HalrtcConfig:
    """High-accuracy low-rank tensor completion settings.

    ``mode_weights`` weight the three mode-unfolding nuclear norms and must
    sum to one; ``rho`` is the consensus penalty, grown by ``rho_growth``
    each iteration.
    """

    mode_weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    rho: float = 1e-4
    rho_growth: float = 1.1
    max_iters: int = 500
    tol: float = 1e-6

    def __post_init__(self):
        w = np.asarray(self.mode_weights, dtype=float)
        if w.shape != (3,) or np.any(w < 0):
            raise ValueError("mode_weights must be 3 nonnegative reals")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError("mode_weights must sum to 1")
        object.__setattr__(self, "mode_weights", tuple(float(x) for x in w))
        if self.rho <= 0 or self.rho_growth < 1 or self.tol <= 0:
            raise ValueError("rho, rho_growth and tol must be positive (growth >= 1)")


@dataclass
class HalrtcInfo:
    """Diagnostics of one completion run."""

    iterations: int
    last_change: float
    converged: bool
    objective_history: list[float] = field(default_factory=list)


def _unfold(tensor: np.ndarray, mode: int) -> np.ndarray:
    return np.moveaxis(tensor, mode, 0).reshape(tensor.shape[mode], -1)


def _fold(mat: np.ndarray, mode: int, shape) -> np.ndarray:
    moved = [shape[mode]] + [s for i, s in enumerate(shape) if i != mode]
    return np.moveaxis(mat.reshape(moved), 0, mode)


def _svt(mat: np.ndarray, tau: float) -> np.ndarray:
    """Singular value soft-thresholding."""
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    return (u * s) @ vt


def _nuclear_objective(tensor: np.ndarray, weights) -> float:
    return float(sum(
        w * np.linalg.svd(_unfold(tensor, m), compute_uv=False).sum()
        for m, w in enumerate(weights)
    ))


def halrtc_complete(values: np.ndarray, mask: np.ndarray,
                    config: HalrtcConfig = HalrtcConfig(),
                    track_objective: bool = False):
    """Complete a rank-3 tensor from its observed entries.

    ADMM-style iteration: per mode, soft-threshold the singular values of
    the unfolded consensus variable; average the mode estimates back
    together; re-impose the observed entries; update the multipliers.
    Stops once both the relative Frobenius change between successive
    iterates and the consensus residual (the gap between the tensor and its
    per-mode estimates) drop to ``tol``, or at ``max_iters``. The early
    iterations barely move while the growing penalty anneals the singular
    value threshold down, so the change criterion alone would fire long
    before the consensus forms. Observed entries of the result equal the
    input exactly.
    """
    mask = np.asarray(mask, dtype=bool)
    values = np.asarray(values, dtype=float)
    if not mask.any():
        raise ValueError("completion needs at least one observed entry")
    weights = np.asarray(config.mode_weights)

    x = np.where(mask, values, values[mask].mean())
    y = [np.zeros_like(x) for _ in range(3)]
    rho = config.rho
    info = HalrtcInfo(iterations=0, last_change=np.inf, converged=False)
    for it in range(1, config.max_iters + 1):
        x_prev = x
        m_modes = [
            _fold(_svt(_unfold(x + y[i] / rho, i), weights[i] / rho), i, x.shape)
            for i in range(3)
        ]
        x = sum(m_modes[i] - y[i] / rho for i in range(3)) / 3.0
        x[mask] = values[mask]
        for i in range(3):
            y[i] = y[i] + rho * (x - m_modes[i])
        rho *= config.rho_growth
        denom = max(float(np.linalg.norm(x_prev)), 1e-12)
        change = float(np.linalg.norm(x - x_prev)) / denom
        consensus = max(
            float(np.linalg.norm(x - m)) for m in m_modes
        ) / max(float(np.linalg.norm(x)), 1e-12)
        info.iterations = it
        info.last_change = change
        if track_objective:
            info.objective_history.append(_nuclear_objective(x, weights))
        if change <= config.tol and consensus <= config.tol:
            info.converged = True
            break
    return x, info


def halrtc_reconstruct(observed: SpectrumGrid,
                       config: HalrtcConfig = HalrtcConfig()) -> SpectrumGrid:
    """Complete a partially observed grid into a fully observed one."""
    filled, _ = halrtc_complete(np.where(observed.mask, observed.values, 0.0),
                                observed.mask, config)
    return SpectrumGrid.fully_observed(observed.spec, filled)
