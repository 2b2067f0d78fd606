"""Joint source location/power estimation with a shuffled frog leaping search.

Each candidate solution (frog) stacks, per source, a propagation-loss
coefficient, a 3D position in meters, and a transmit power in watts. The
predicted RSS at a sample is the sum over sources of eta * power_mW * d**-alpha
with d in meters, and the fitness is the root of the summed squared mW
residuals against the measured RSS. The population is dealt into memeplexes
by fitness rank; each memeplex repeatedly moves its worst frog toward its
best frog, then toward the global best, then to a random point when neither
move improves it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sampler import samples_to_arrays
from .scene import GridSpec, dbm_to_mw

MIN_DISTANCE_M = 1.0

# Genome column layout per source.
COL_ETA, COL_X, COL_Y, COL_Z, COL_POWER = range(5)


@dataclass(frozen=True)
class SourceEstimate:
    """Estimated radiation source: loss coefficient, position, power."""

    eta: float
    position: tuple[float, float, float]
    power_watts: float

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        if self.power_watts < 0:
            raise ValueError("estimated power must be nonnegative")
        if self.eta <= 0:
            raise ValueError("loss coefficient must be positive")

    @property
    def power_dbm(self) -> float:
        # Floor keeps the dB form finite for a zero-power estimate.
        return 10.0 * np.log10(max(self.power_watts, 1e-12) * 1000.0)


@dataclass
class Frog:
    """One candidate solution with its cached fitness."""

    genome: list[SourceEstimate]
    fitness: float


@dataclass(frozen=True)
class SflaConfig:
    """Search hyperparameters.

    ``search_box`` is a (5, 2) array of per-parameter [low, high] bounds in
    genome column order (eta, x, y, z, power_watts), shared by all sources.
    Step magnitudes are clipped per dimension into [step_min, step_max],
    defaulting to [0, 0.25 * box width]. ``max_fitness_samples`` caps the
    number of samples used inside fitness evaluations (a deterministic
    random subset); None evaluates every sample.
    """

    search_box: np.ndarray
    population: int = 200
    memeplexes: int = 20
    local_iters: int = 10
    global_iters: int = 500
    alpha: float = 2.5
    step_min: np.ndarray | None = None
    step_max: np.ndarray | None = None
    tol: float = 1e-6
    patience: int = 50
    max_fitness_samples: int | None = None
    fitness_scale: str = "mw"
    seed: int = 0

    def __post_init__(self):
        if self.fitness_scale not in ("mw", "db"):
            raise ValueError("fitness_scale must be 'mw' or 'db'")
        box = np.asarray(self.search_box, dtype=float)
        if box.shape != (5, 2) or np.any(box[:, 1] < box[:, 0]):
            raise ValueError("search_box must be (5, 2) with low <= high rows")
        if box[COL_ETA, 0] <= 0:
            raise ValueError("eta lower bound must be positive")
        object.__setattr__(self, "search_box", box)
        if not 1 <= self.memeplexes <= self.population:
            raise ValueError("need population >= memeplexes >= 1")
        width = box[:, 1] - box[:, 0]
        step_min = (np.zeros(5) if self.step_min is None
                    else np.asarray(self.step_min, dtype=float))
        step_max = (0.25 * width if self.step_max is None
                    else np.asarray(self.step_max, dtype=float))
        if np.any(step_min > step_max):
            raise ValueError("step_min must be <= step_max per dimension")
        object.__setattr__(self, "step_min", step_min)
        object.__setattr__(self, "step_max", step_max)

    @classmethod
    def for_grid(cls, grid: GridSpec, eta_bounds=(1e-6, 1e2),
                 power_max_watts: float = 10.0, **overrides) -> "SflaConfig":
        """Search box spanning the ROI for positions, with default eta/power ranges."""
        lo = np.asarray(grid.origin)
        hi = lo + np.asarray(grid.extent)
        box = np.array([
            [eta_bounds[0], eta_bounds[1]],
            [lo[0], hi[0]],
            [lo[1], hi[1]],
            [lo[2], hi[2]],
            [0.0, power_max_watts],
        ])
        return cls(search_box=box, **overrides)


# ---------------------------------------------------------------------------
# Genome handling and fitness
# ---------------------------------------------------------------------------

def genome_to_array(genome) -> np.ndarray:
    """Accept a (K, 5) array or a list of SourceEstimate; return (K, 5) floats."""
    if isinstance(genome, np.ndarray):
        arr = np.asarray(genome, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 5:
            raise ValueError("genome array must have shape (K, 5)")
        return arr
    arr = np.array(
        [[g.eta, *g.position, g.power_watts] for g in genome], dtype=float
    )
    if arr.size == 0:
        raise ValueError("genome must contain at least one source")
    return arr


def array_to_sources(arr: np.ndarray) -> list[SourceEstimate]:
    return [
        SourceEstimate(row[COL_ETA], (row[COL_X], row[COL_Y], row[COL_Z]),
                       max(row[COL_POWER], 0.0))
        for row in arr
    ]


def sort_sources(sources) -> list[SourceEstimate]:
    """Stable output order: descending power, then lexicographic position."""
    return sorted(sources, key=lambda s: (-s.power_watts, s.position))


def predicted_rss_mw(genome, position, alpha: float) -> float:
    """Predicted combined RSS in mW at one position (distances clamped to 1 m)."""
    arr = genome_to_array(genome)
    d = np.linalg.norm(np.asarray(position, dtype=float) - arr[:, COL_X:COL_Z + 1],
                       axis=1)
    d = np.maximum(d, MIN_DISTANCE_M)
    return float(np.sum(arr[:, COL_ETA] * arr[:, COL_POWER] * 1000.0
                        * np.power(d, -alpha)))


class _Objective:
    """Vectorized fitness over a fixed sample set.

    ``scale='mw'`` takes the residuals in linear milliwatts; ``scale='db'``
    takes them between the dBm values instead, which weights weak and
    strong samples alike.
    """

    def __init__(self, positions: np.ndarray, rss_mw: np.ndarray, alpha: float,
                 scale: str = "mw"):
        self.positions = positions
        self.rss_mw = rss_mw
        self.rss_dbm = 10.0 * np.log10(np.maximum(rss_mw, 1e-300))
        self.alpha = alpha
        self.scale = scale

    def predict_mw(self, arr: np.ndarray) -> np.ndarray:
        # (N, K) distances between every sample and every source.
        d = np.linalg.norm(
            self.positions[:, None, :] - arr[None, :, COL_X:COL_Z + 1], axis=2
        )
        d = np.maximum(d, MIN_DISTANCE_M)
        return np.power(d, -self.alpha) @ (arr[:, COL_ETA] * arr[:, COL_POWER]
                                           * 1000.0)

    def __call__(self, arr: np.ndarray) -> float:
        if self.scale == "db":
            pred = 10.0 * np.log10(np.maximum(self.predict_mw(arr), 1e-300))
            residual = self.rss_dbm - pred
        else:
            residual = self.rss_mw - self.predict_mw(arr)
        return float(np.sqrt(np.sum(residual * residual)))


def fitness_of(genome, samples, alpha: float) -> float:
    """Root of the summed squared mW residuals over the full sample set."""
    positions, rss = samples_to_arrays(samples)
    objective = _Objective(positions, dbm_to_mw(rss), alpha)
    return objective(genome_to_array(genome))


# ---------------------------------------------------------------------------
# Population mechanics
# ---------------------------------------------------------------------------

def partition_memeplexes(ranked, m: int):
    """Deal a fitness-ranked sequence into m groups round-robin.

    Rank 1 goes to group 1, rank 2 to group 2, ..., rank m to group m,
    rank m+1 back to group 1, and so on.
    """
    if m < 1 or m > len(ranked):
        raise ValueError("need 1 <= memeplexes <= population size")
    return [ranked[g::m] for g in range(m)]


def _random_frogs(rng: np.random.Generator, box: np.ndarray, k: int,
                  n: int) -> np.ndarray:
    """Fresh frogs uniform in the box; eta is drawn log-uniform."""
    frogs = rng.uniform(box[:, 0], box[:, 1], size=(n, k, 5))
    log_lo, log_hi = np.log(box[COL_ETA, 0]), np.log(box[COL_ETA, 1])
    frogs[:, :, COL_ETA] = np.exp(rng.uniform(log_lo, log_hi, size=(n, k)))
    return frogs


def _seed_positions(frogs: np.ndarray, hints: np.ndarray, box: np.ndarray,
                    rng: np.random.Generator) -> None:
    """Anchor the positions of the given frogs near hint locations.

    Each frog's sources are placed on a random draw of the hints plus a
    jitter of 5% of the box width, clipped back into the box. Loss
    coefficients and powers stay as initialized.
    """
    n, k, _ = frogs.shape
    width = box[COL_X:COL_Z + 1, 1] - box[COL_X:COL_Z + 1, 0]
    for i in range(n):
        picks = rng.choice(len(hints), size=k, replace=len(hints) < k)
        jitter = rng.normal(0.0, 0.05, size=(k, 3)) * width
        pos = np.clip(hints[picks] + jitter, box[COL_X:COL_Z + 1, 0],
                      box[COL_X:COL_Z + 1, 1])
        frogs[i, :, COL_X:COL_Z + 1] = pos


def _clip_step(step: np.ndarray, step_min: np.ndarray,
               step_max: np.ndarray) -> np.ndarray:
    """Clip per-dimension step magnitudes into [step_min, step_max], keeping sign."""
    return np.sign(step) * np.clip(np.abs(step), step_min, step_max)


def _project(arr: np.ndarray, box: np.ndarray) -> np.ndarray:
    return np.clip(arr, box[:, 0], box[:, 1])


def _replacement_frog(rng: np.random.Generator, box: np.ndarray,
                      global_best: np.ndarray) -> np.ndarray:
    """Replacement for a stuck frog.

    Half the time a fresh uniform draw (exploration), otherwise a small
    perturbation of the global best (1% of the box width per dimension).
    The leap moves only interpolate toward a leader, so this perturbation
    branch is what lets the population probe past the incumbent.
    """
    k = global_best.shape[0]
    if rng.random() < 0.5:
        return _random_frogs(rng, box, k, 1)[0]
    width = box[:, 1] - box[:, 0]
    jitter = rng.normal(0.0, 0.01, size=(k, 5)) * width
    return _project(global_best + jitter, box)


def local_step(objective, frogs: np.ndarray, fitness: np.ndarray,
               global_best: np.ndarray, rng: np.random.Generator,
               config: SflaConfig):
    """Run the local search of one memeplex for ``local_iters`` rounds.

    Each round updates only the worst frog: move it toward the memeplex
    best; if that does not improve it, move it toward the global best; if
    that also fails, replace it (random draw or a perturbation of the
    global best). Returns the updated (frogs, fitness) arrays.
    """
    frogs = frogs.copy()
    fitness = fitness.copy()
    for _ in range(config.local_iters):
        worst = int(np.argmax(fitness))
        best = int(np.argmin(fitness))
        accepted = False
        for leader in (frogs[best], global_best):
            lam = rng.random()
            step = _clip_step(lam * (leader - frogs[worst]),
                              config.step_min, config.step_max)
            candidate = _project(frogs[worst] + step, config.search_box)
            cand_fit = objective(candidate)
            if cand_fit < fitness[worst]:
                frogs[worst] = candidate
                fitness[worst] = cand_fit
                accepted = True
                break
        if not accepted:
            frogs[worst] = _replacement_frog(rng, config.search_box, global_best)
            fitness[worst] = objective(frogs[worst])
    return frogs, fitness


@dataclass(frozen=True)
class EstimationResult:
    """Best genome found, its fitness on the full sample set, and the trace."""

    sources: list[SourceEstimate]
    fitness: float
    trace: np.ndarray       # (iterations, 2) columns (iteration, best_fitness)
    iterations: int


def estimate_parameters(samples, k: int, config: SflaConfig,
                        alpha: float | None = None,
                        position_hints=None) -> EstimationResult:
    """Estimate k sources from samples by shuffled frog leaping.

    Runs ``global_iters`` shuffle/local-search rounds or stops early once
    the best fitness has improved by less than ``tol`` for ``patience``
    consecutive rounds. The global leader handed to each memeplex is the
    best genome seen so far, which also guards the incumbent against loss
    through random replacement. Deterministic in ``config.seed``.

    ``position_hints``, when given (e.g. the detection stage's cluster
    centers), anchors the source positions of half the initial population
    near those locations; the rest of the population stays fully random.
    """
    if k < 1:
        raise ValueError("source count must be >= 1")
    if alpha is None:
        alpha = config.alpha
    positions, rss = samples_to_arrays(samples)
    rss_mw = dbm_to_mw(rss)
    rng = np.random.default_rng(config.seed)

    cap = config.max_fitness_samples
    if cap is not None and cap < len(rss):
        keep = rng.choice(len(rss), size=cap, replace=False)
        objective = _Objective(positions[keep], rss_mw[keep], alpha,
                               config.fitness_scale)
    else:
        objective = _Objective(positions, rss_mw, alpha, config.fitness_scale)

    frogs = _random_frogs(rng, config.search_box, k, config.population)
    if position_hints is not None and len(position_hints) > 0:
        hints = np.asarray(position_hints, dtype=float).reshape(-1, 3)
        _seed_positions(frogs[: config.population // 2], hints,
                        config.search_box, rng)
    fitness = np.array([objective(f) for f in frogs])
    best_idx = int(np.argmin(fitness))
    best_genome = frogs[best_idx].copy()
    best_fit = float(fitness[best_idx])

    trace = [(0, best_fit)]
    stall = 0
    iterations = 0
    for it in range(1, config.global_iters + 1):
        iterations = it
        order = np.argsort(fitness, kind="stable")
        groups = partition_memeplexes(order, config.memeplexes)
        for group in groups:
            sub_frogs, sub_fit = local_step(
                objective, frogs[group], fitness[group], best_genome, rng, config
            )
            frogs[group] = sub_frogs
            fitness[group] = sub_fit
            g_best = int(np.argmin(fitness))
            if fitness[g_best] < best_fit:
                best_fit = float(fitness[g_best])
                best_genome = frogs[g_best].copy()
        improvement = trace[-1][1] - best_fit
        trace.append((it, best_fit))
        stall = stall + 1 if improvement < config.tol else 0
        if stall >= config.patience:
            break

    full_objective = _Objective(positions, rss_mw, alpha, config.fitness_scale)
    final_fitness = full_objective(best_genome)
    sources = sort_sources(array_to_sources(best_genome))
    return EstimationResult(sources, final_fitness,
                            np.asarray(trace, dtype=float), iterations)


def refine_sources(samples, sources, config: SflaConfig,
                   alpha: float | None = None,
                   max_iter: int = 4000) -> tuple[list[SourceEstimate], float]:
    """Polish an estimate with a bounded Nelder-Mead pass on the same objective.

    The leap moves only interpolate toward a leader, so the population
    cannot settle below its own granularity; a derivative-free simplex
    pass closes that gap. Returns the refined sources and their fitness
    (never worse than the input).
    """
    from scipy import optimize

    if alpha is None:
        alpha = config.alpha
    positions, rss = samples_to_arrays(samples)
    rss_mw = dbm_to_mw(rss)
    cap = config.max_fitness_samples
    if cap is not None and cap < len(rss):
        # Same first draw as estimate_parameters, so both stages see the
        # same subset.
        keep = np.random.default_rng(config.seed).choice(len(rss), size=cap,
                                                         replace=False)
        positions, rss_mw = positions[keep], rss_mw[keep]
    objective = _Objective(positions, rss_mw, alpha, config.fitness_scale)
    arr = genome_to_array(sources)
    k = arr.shape[0]
    bounds = list(map(tuple, np.tile(config.search_box, (k, 1))))
    res = optimize.minimize(
        lambda x: objective(x.reshape(k, 5)), arr.ravel(),
        method="Nelder-Mead", bounds=bounds,
        options={"maxiter": max_iter, "xatol": 1e-8, "fatol": 1e-10},
    )
    start_fit = objective(arr)
    if res.fun <= start_fit:
        return sort_sources(array_to_sources(res.x.reshape(k, 5))), float(res.fun)
    return sort_sources(array_to_sources(arr)), float(start_fit)


def calibrate_powers(sources, alpha: float, f_mhz: float) -> list[SourceEstimate]:
    """Resolve the eta/power ambiguity by pinning eta to the log-distance constant.

    The predicted RSS only constrains the product eta * power, so the raw
    estimates can trade one against the other freely. This rescales every
    source to eta0, the coefficient for which eta0 * P_mW * d_m**-alpha
    equals the log-distance law 32.4 + 20*log10(f) + 10*alpha*log10(d_km)
    applied to P. Predictions are unchanged; powers become interpretable.
    """
    eta0 = 10.0 ** ((30.0 * alpha - 32.4 - 20.0 * np.log10(f_mhz)) / 10.0)
    calibrated = [
        SourceEstimate(eta0, s.position, s.eta * s.power_watts / eta0)
        for s in sources
    ]
    return sort_sources(calibrated)


def write_fitness_trace(trace: np.ndarray, path) -> None:
    """CSV trace (iteration, best_fitness) of an estimation run."""
    with open(path, "w") as fh:
        fh.write("iteration,best_fitness\n")
        for it, fit in trace:
            fh.write(f"{int(it)},{fit:.10g}\n")
