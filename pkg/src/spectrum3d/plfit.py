"""Self-learning of the urban path-loss parameters and spectrum reconstruction.

Given estimated sources, every sample yields a measured path loss (combined
transmit power in dBm minus measured RSS) and, for candidate environment
parameters (a, b), a theoretical one. A derivative-free simplex search with
multiple starts fits (a, b); the shadow std is read off the final residual
spread rather than fitted, since a zero-mean noise term has no effect on the
least-squares target. Reconstruction then evaluates the fitted model at
every cell center and combines the per-source fields in mW.

Two fit targets are available. ``summed-pl`` compares the measured loss
against the per-source theoretical losses added up; this is exact for a
single source but over-counts the fixed frequency term K times for K > 1.
``combined-rss`` compares the model-predicted combined RSS against the
measured RSS, which stays consistent for any K and coincides with
``summed-pl`` at K = 1; the reconstruction pipeline uses it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize

from .sampler import samples_to_arrays
from .scene import GridSpec, SpectrumGrid, combine_rss_dbm, mw_to_dbm
from .synthgen import MIN_DISTANCE_M, MIN_HEIGHT_M, UrbanPlParams, urban_path_loss_db

DEFAULT_BOUNDS_A = (0.1, 10.0)
DEFAULT_BOUNDS_B = (-2.0, 2.0)
DEFAULT_STARTS = 8
FIT_OBJECTIVES = ("summed-pl", "combined-rss")


def _source_arrays(sources):
    if len(sources) == 0:
        raise ValueError("need at least one source")
    pos = np.array([s.position for s in sources], dtype=float)
    p_mw = np.array([s.power_watts for s in sources], dtype=float) * 1000.0
    return pos, p_mw


def measured_pl_db(sample, estimated_sources) -> float:
    """Measured path loss: combined transmit power in dBm minus sample RSS."""
    _, p_mw = _source_arrays(estimated_sources)
    total = float(np.sum(p_mw))
    if total <= 0.0:
        raise ValueError("total estimated power must be positive")
    return 10.0 * np.log10(total) - sample.rss_dbm


def theoretical_pl_db(sample_position, estimated_sources,
                      params: UrbanPlParams) -> float:
    """Per-source urban path losses added up (no shadow term)."""
    src_pos, _ = _source_arrays(estimated_sources)
    pos = np.asarray(sample_position, dtype=float)
    return float(sum(urban_path_loss_db(params, sp, pos) for sp in src_pos))


@dataclass(frozen=True)
class PlFitResult:
    """Fitted environment parameters plus fit diagnostics."""

    params: UrbanPlParams
    residual_norm: float
    iterations: int
    converged: bool

    def to_dict(self) -> dict:
        return {
            "A": self.params.a,
            "B": self.params.b,
            "sigma_db": self.params.sigma_db,
            "residual_norm": self.residual_norm,
        }


def save_fit_result(result: PlFitResult, path) -> None:
    Path(path).write_text(json.dumps(result.to_dict(), indent=2) + "\n")


def load_fit_params(path, frequency_mhz: float) -> UrbanPlParams:
    d = json.loads(Path(path).read_text())
    return UrbanPlParams(d["A"], d["B"], d["sigma_db"], frequency_mhz)


class _FitProblem:
    """Precomputed geometry shared by all objective evaluations."""

    def __init__(self, samples, sources, f_mhz, objective):
        positions, rss = samples_to_arrays(samples)
        src_pos, p_mw = _source_arrays(sources)
        total = float(np.sum(p_mw))
        if total <= 0.0:
            raise ValueError("total estimated power must be positive")
        h = positions[:, 2]
        if np.any(h <= 0.0):
            raise ValueError("sample heights must be positive")
        self.h = np.maximum(h, MIN_HEIGHT_M)
        d_m = np.maximum(
            np.linalg.norm(positions[:, None, :] - src_pos[None, :, :], axis=2),
            MIN_DISTANCE_M,
        )
        self.log_d_km = np.log10(d_m / 1000.0)            # (N, K)
        self.const = 32.4 + 20.0 * np.log10(f_mhz)
        self.rss = rss
        self.measured_loss = 10.0 * np.log10(total) - rss
        self.p_dbm = 10.0 * np.log10(np.maximum(p_mw, 1e-9))
        self.k = len(src_pos)
        self.objective = objective
        if np.ptp(self.log_d_km.sum(axis=1)) < 1e-9:
            raise ValueError("degenerate fit: samples show no distance spread")

    def residuals(self, theta) -> np.ndarray:
        a, b = theta
        slope = 10.0 * a * np.power(self.h, b)            # (N,)
        if self.objective == "summed-pl":
            theo = self.k * self.const + slope * self.log_d_km.sum(axis=1)
            return theo - self.measured_loss
        # combined-rss: predicted per-source RSS combined in mW vs measurement
        loss = self.const + slope[:, None] * self.log_d_km
        exponent = np.clip((self.p_dbm[None, :] - loss) / 10.0, -300.0, 300.0)
        pred_mw = np.sum(np.power(10.0, exponent), axis=1)
        return 10.0 * np.log10(np.maximum(pred_mw, 1e-300)) - self.rss

    def norm(self, theta) -> float:
        r = self.residuals(theta)
        return float(np.sqrt(np.sum(r * r)))


def fit_pl_params(samples, estimated_sources, f_mhz: float, init=None,
                  bounds=(DEFAULT_BOUNDS_A, DEFAULT_BOUNDS_B),
                  objective: str = "summed-pl",
                  n_starts: int = DEFAULT_STARTS) -> PlFitResult:
    """Fit the (a, b) environment parameters by bounded Nelder-Mead.

    Multi-start over a fixed grid across the bounds (plus ``init`` when
    given); the best run wins. The returned sigma is the standard deviation
    of the residuals at the optimum and ``residual_norm`` the L2 objective
    there.
    """
    if len(samples) < 3:
        raise ValueError("need at least 3 samples to fit 3 parameters")
    if objective not in FIT_OBJECTIVES:
        raise ValueError(f"unknown fit objective {objective!r}")
    problem = _FitProblem(samples, estimated_sources, f_mhz, objective)
    (a_lo, a_hi), (b_lo, b_hi) = bounds

    starts = [] if init is None else [np.asarray(init, dtype=float)]
    if n_starts > 0:
        for a0 in np.geomspace(a_lo, a_hi, max(n_starts // 2, 1)):
            for b0 in np.linspace(b_lo, b_hi, 2):
                starts.append(np.array([a0, b0]))
    if not starts:
        raise ValueError("need an init or at least one start")

    best = None
    total_iters = 0
    converged = False
    for x0 in starts:
        res = optimize.minimize(
            problem.norm, x0, method="Nelder-Mead",
            bounds=[(a_lo, a_hi), (b_lo, b_hi)],
            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 2000},
        )
        total_iters += res.nit
        converged = converged or bool(res.success)
        if best is None or res.fun < best.fun:
            best = res

    a_hat, b_hat = best.x
    sigma_hat = float(np.std(problem.residuals(best.x)))
    params = UrbanPlParams(a_hat, b_hat, sigma_hat, f_mhz)
    return PlFitResult(params, float(best.fun), total_iters, converged)


def _combined_residuals_db(positions, rss, src_pos, p_mw, params: UrbanPlParams):
    """Predicted-minus-measured combined RSS in dB under the urban model."""
    h = np.maximum(positions[:, 2], MIN_HEIGHT_M)
    d_m = np.maximum(
        np.linalg.norm(positions[:, None, :] - src_pos[None, :, :], axis=2),
        MIN_DISTANCE_M,
    )
    loss = (32.4 + 20.0 * np.log10(params.frequency_mhz)
            + 10.0 * (params.a * np.power(h, params.b))[:, None]
            * np.log10(d_m / 1000.0))
    p_dbm = 10.0 * np.log10(np.maximum(p_mw, 1e-12))
    exponent = np.clip((p_dbm[None, :] - loss) / 10.0, -300.0, 300.0)
    pred = 10.0 * np.log10(np.maximum(np.sum(10.0 ** exponent, axis=1), 1e-300))
    return pred - rss


def refine_sources_under_model(samples, sources, params: UrbanPlParams,
                               position_box, power_max_watts: float,
                               max_iter: int = 4000):
    """Re-estimate source positions/powers under a fitted urban model.

    Bounded Nelder-Mead over the stacked (x, y, z, power) vector, minimizing
    the L2 norm of the combined-RSS residuals in dB. Keeps each source's
    loss coefficient untouched (the urban model does not use it). Returns
    the input estimate unchanged if the search fails to improve it.
    """
    from .sfla import SourceEstimate, sort_sources

    positions, rss = samples_to_arrays(samples)
    src_pos, p_mw = _source_arrays(sources)
    k = len(src_pos)
    x0 = np.c_[src_pos, p_mw / 1000.0].ravel()
    box = np.asarray(position_box, dtype=float)
    bounds = []   # per source: x, y, z, power
    for _ in range(k):
        bounds.extend([(box[0, 0], box[0, 1]), (box[1, 0], box[1, 1]),
                       (box[2, 0], box[2, 1]), (0.0, power_max_watts)])

    def objective(x):
        arr = x.reshape(k, 4)
        r = _combined_residuals_db(positions, rss, arr[:, :3],
                                   np.maximum(arr[:, 3], 0.0) * 1000.0, params)
        return float(np.sqrt(np.sum(r * r)))

    res = optimize.minimize(objective, x0, method="Nelder-Mead", bounds=bounds,
                            options={"maxiter": max_iter, "xatol": 1e-8,
                                     "fatol": 1e-10})
    best = res.x if res.fun <= objective(x0) else x0
    arr = best.reshape(k, 4)
    etas = [getattr(s, "eta", 1.0) for s in sources]
    refined = [
        SourceEstimate(etas[j], tuple(arr[j, :3]), max(arr[j, 3], 0.0))
        for j in range(k)
    ]
    return sort_sources(refined)


def fit_model_and_sources(samples, sources, f_mhz: float, position_box,
                          power_max_watts: float,
                          bounds=(DEFAULT_BOUNDS_A, DEFAULT_BOUNDS_B),
                          objective: str = "combined-rss",
                          n_starts: int = DEFAULT_STARTS, rounds: int = 2):
    """Self-learning with source feedback: fit (a, b), then refine jointly.

    An initial two-parameter fit anchors (a, b); ``rounds`` joint simplex
    passes over the stacked (a, b, per-source x, y, z, power) vector then
    walk model and sources together, which resolves the power/slope trade
    the alternating updates crawl along. A final fit report pins sigma and
    the residual norm to the returned sources. ``rounds=0`` reduces to the
    plain parameter fit on the input sources.
    """
    from .sfla import SourceEstimate, sort_sources

    positions, rss = samples_to_arrays(samples)
    (a_lo, a_hi), (b_lo, b_hi) = bounds
    box = np.asarray(position_box, dtype=float)
    current = sort_sources(
        SourceEstimate(getattr(s, "eta", 1.0), s.position,
                       getattr(s, "power_watts", 1.0))
        for s in sources
    )
    fit = fit_pl_params(samples, current, f_mhz, bounds=bounds,
                        objective=objective, n_starts=n_starts)
    k = len(current)

    def unpack(x):
        params = UrbanPlParams(x[0], x[1], 0.0, f_mhz)
        arr = x[2:].reshape(k, 4)
        return params, arr[:, :3], np.maximum(arr[:, 3], 0.0) * 1000.0

    def joint_objective(x):
        params, src_pos, p_mw = unpack(x)
        r = _combined_residuals_db(positions, rss, src_pos, p_mw, params)
        return float(np.sqrt(np.sum(r * r)))

    nm_bounds = [(a_lo, a_hi), (b_lo, b_hi)]
    for _ in range(k):
        nm_bounds.extend([(box[0, 0], box[0, 1]), (box[1, 0], box[1, 1]),
                          (box[2, 0], box[2, 1]), (0.0, power_max_watts)])
    x = np.concatenate([
        [fit.params.a, fit.params.b],
        np.c_[[s.position for s in current],
              [s.power_watts for s in current]].ravel(),
    ])
    best = joint_objective(x)
    for _ in range(max(rounds, 0)):
        res = optimize.minimize(joint_objective, x, method="Nelder-Mead",
                                bounds=nm_bounds,
                                options={"maxiter": 6000, "xatol": 1e-9,
                                         "fatol": 1e-12})
        if res.fun >= best - 1e-15:
            x = res.x if res.fun < best else x
            best = min(best, float(res.fun))
            break
        x, best = res.x, float(res.fun)

    params, src_pos, p_mw = unpack(x)
    current = sort_sources(
        SourceEstimate(getattr(s, "eta", 1.0), tuple(p), pw / 1000.0)
        for s, p, pw in zip(current, src_pos, p_mw)
    )
    fit = fit_pl_params(samples, current, f_mhz, bounds=bounds,
                        objective=objective, n_starts=n_starts,
                        init=(params.a, params.b))
    return current, fit


def reconstruct_grid(grid_spec: GridSpec, estimated_sources,
                     params: UrbanPlParams, shadow_seed=None) -> SpectrumGrid:
    """Evaluate the fitted model at every cell center.

    Emits the expectation map (shadow term zero). Passing ``shadow_seed``
    adds seeded shadow draws instead, for visual parity with truth grids.
    """
    src_pos, p_mw = _source_arrays(estimated_sources)
    centers = grid_spec.cell_centers()
    rng = np.random.default_rng(shadow_seed) if shadow_seed is not None else None
    fields = []
    for pos, mw in zip(src_pos, p_mw):
        shadow = (rng.normal(0.0, params.sigma_db, size=grid_spec.shape)
                  if rng is not None else 0.0)
        loss = urban_path_loss_db(params, pos, centers, shadow)
        fields.append(mw_to_dbm(max(mw, 1e-9)) - loss)
    return SpectrumGrid.fully_observed(grid_spec, combine_rss_dbm(fields))


def free_space_params(frequency_mhz: float) -> UrbanPlParams:
    """Fixed free-space model: distance exponent 2, no height term, no shadow."""
    return UrbanPlParams(2.0, 0.0, 0.0, frequency_mhz)
