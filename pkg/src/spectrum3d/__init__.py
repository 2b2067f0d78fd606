"""3D radio spectrum map reconstruction from sparse RSS samples.

Pipeline: synthetic truth generation -> random sampling -> source counting
(max-min path-loss-difference clustering) -> joint location/power estimation
(shuffled frog leaping) -> path-loss model self-learning -> reconstruction,
next to IDW and low-rank tensor completion baselines and a metric suite.
"""

from .baselines import (HalrtcConfig, IdwConfig, halrtc_complete,
                        halrtc_reconstruct, idw_reconstruct)
from .metrics import (MetricsReport, ZonePartition, cdzr_fazr,
                      detection_success_rate, loc_error, rmse, ss_error,
                      zone_partition)
from .mmpld import ClusteringState, DetectionResult, detect_source_count
from .plfit import (PlFitResult, fit_pl_params, free_space_params,
                    reconstruct_grid)
from .sampler import SamplingPlan, draw_samples, load_samples_csv, save_samples_csv
from .scene import (GridSpec, Sample, Scene, SpectrumGrid, TruthSource,
                    combine_rss_dbm, dbm_to_mw, load_scene, mw_to_dbm,
                    save_scene)
from .sfla import (EstimationResult, Frog, SflaConfig, SourceEstimate,
                   estimate_parameters, fitness_of)
from .synthgen import UrbanPlParams, generate_truth_grid, table1_scene

__version__ = "0.1.0"

__all__ = [
    "ClusteringState", "DetectionResult", "EstimationResult", "Frog",
    "GridSpec", "HalrtcConfig", "IdwConfig", "MetricsReport", "PlFitResult",
    "Sample", "SamplingPlan", "Scene", "SflaConfig", "SourceEstimate",
    "SpectrumGrid", "TruthSource", "UrbanPlParams", "ZonePartition",
    "cdzr_fazr", "combine_rss_dbm", "dbm_to_mw", "detect_source_count",
    "detection_success_rate", "draw_samples", "estimate_parameters",
    "fit_pl_params", "fitness_of", "free_space_params", "generate_truth_grid",
    "halrtc_complete", "halrtc_reconstruct", "idw_reconstruct", "loc_error",
    "load_samples_csv", "load_scene", "mw_to_dbm", "reconstruct_grid", "rmse",
    "save_samples_csv", "save_scene", "ss_error", "table1_scene",
    "zone_partition",
]
