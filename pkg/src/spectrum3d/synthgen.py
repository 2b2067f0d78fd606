"""Synthetic ground-truth spectrum grids from a parametric urban path-loss model.

The loss between a transmitter and a receiver at height h above ground is

    L(d) = 32.4 + 20*log10(f_MHz) + 10*(a*h**b)*log10(d_km) + shadow

with an i.i.d. zero-mean Gaussian shadow-fading term per (cell, source).
The 32.4 constant fixes the units: frequency in MHz, distance in km.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import GridSpec, Scene, SpectrumGrid, TruthSource, combine_rss_dbm

# Log-distance terms blow up at zero range / zero height; both are clamped.
MIN_DISTANCE_M = 1.0
MIN_HEIGHT_M = 1.0

# Effective exponent a*h**b stays in the usual urban 2-4 range for h in 1-100 m.
DEFAULT_TRUTH_A = 2.5
DEFAULT_TRUTH_B = -0.1
DEFAULT_TRUTH_SIGMA_DB = 4.0

# Source layouts used throughout the simulation study: 1 W transmitters in a
# 500 x 500 x 100 m urban ROI at 100 MHz, gridded 100 x 100 x 10.
TABLE1_SOURCES = {
    2: [(310.0, -239.0, 2.0), (235.0, -105.0, 2.0)],
    3: [(345.0, -365.0, 33.77), (205.0, -265.0, 2.0), (245.0, -95.0, 2.0)],
    4: [
        (330.0, -370.0, 33.77),
        (400.0, -140.0, 23.3),
        (185.0, -255.0, 2.0),
        (245.0, -85.0, 2.0),
    ],
}
TABLE2_GRID = GridSpec(origin=(0.0, -450.0, 0.0), extent=(500.0, 500.0, 100.0),
                       counts=(100, 100, 10))
TABLE2_FREQUENCY_MHZ = 100.0
TABLE1_POWER_WATTS = 1.0


@dataclass(frozen=True)
class UrbanPlParams:
    """Environment parameters of the urban path-loss model.

    ``a`` and ``b`` shape the distance exponent 10*(a*h**b); ``sigma_db`` is
    the shadow-fading standard deviation; ``frequency_mhz`` the carrier.
    """

    a: float
    b: float
    sigma_db: float
    frequency_mhz: float

    def __post_init__(self):
        if self.sigma_db < 0:
            raise ValueError("shadow-fading std must be nonnegative")
        if self.frequency_mhz <= 0:
            raise ValueError("frequency must be positive (MHz)")
        # a*h**b must stay positive; a <= 0 would flip the loss slope.
        if self.a <= 0:
            raise ValueError("exponent scale a must be positive")


def urban_path_loss_db(params: UrbanPlParams, tx, rx, shadow_db=0.0):
    """Path loss in dB between a transmitter and one or many receive points.

    Parameters
    ----------
    params : UrbanPlParams
    tx : (3,) array-like
        Transmitter position in meters.
    rx : (..., 3) array-like
        Receive point(s) in meters; height above ground is the z coordinate.
    shadow_db : float or broadcastable array
        Shadow-fading term added verbatim.

    Returns
    -------
    float or ndarray
        Loss in dB, one value per receive point. Distances below 1 m and
        heights below 1 m are clamped; non-positive heights are rejected.
    """
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    h = rx[..., 2]
    if np.any(h <= 0.0):
        raise ValueError("receiver height must be positive")
    h = np.maximum(h, MIN_HEIGHT_M)
    d_m = np.maximum(np.linalg.norm(rx - tx, axis=-1), MIN_DISTANCE_M)
    d_km = d_m / 1000.0
    loss = (
        32.4
        + 20.0 * np.log10(params.frequency_mhz)
        + 10.0 * (params.a * np.power(h, params.b)) * np.log10(d_km)
        + shadow_db
    )
    return float(loss) if np.ndim(loss) == 0 else loss


def generate_truth_grid(scene: Scene, params: UrbanPlParams, seed: int) -> SpectrumGrid:
    """Fully observed ground-truth grid for a scene.

    Per cell center and source, RSS = transmit power (dBm) minus the urban
    path loss with an independent shadow draw N(0, sigma^2); the per-source
    fields combine in mW. The same seed reproduces the grid bit-exactly.
    """
    if len(scene.sources) == 0:
        raise ValueError("scene has no sources")
    rng = np.random.default_rng(seed)
    centers = scene.grid.cell_centers()
    fields = []
    for src in scene.sources:
        shadow = rng.normal(0.0, params.sigma_db, size=scene.grid.shape)
        loss = urban_path_loss_db(params, src.position, centers, shadow)
        fields.append(src.power_dbm - loss)
    return SpectrumGrid.fully_observed(scene.grid, combine_rss_dbm(fields))


def table1_scene(k: int) -> Scene:
    """Benchmark scene with k in {2, 3, 4} unit-power sources."""
    if k not in TABLE1_SOURCES:
        raise ValueError(f"no bundled scene for k={k}; choose from {sorted(TABLE1_SOURCES)}")
    sources = tuple(TruthSource(p, TABLE1_POWER_WATTS) for p in TABLE1_SOURCES[k])
    return Scene(TABLE2_GRID, sources, TABLE2_FREQUENCY_MHZ)


def default_truth_params(frequency_mhz: float) -> UrbanPlParams:
    """Default synthetic-truth environment at the given carrier frequency."""
    return UrbanPlParams(DEFAULT_TRUTH_A, DEFAULT_TRUTH_B, DEFAULT_TRUTH_SIGMA_DB,
                         frequency_mhz)
