"""Reflection-noise removal for single-station terrestrial laser scans."""
from .config import PipelineConfig, default_config, load_config
from .core import GtLabel, PointCloud, PointRecord, PredLabel, SpatialIndex, radius_filter, voxel_downsample
from .descriptor import RelsfhDescriptor, compute_relsfh, mirror_point, reflect_direction, reflection_frame
from .exceptions import (CalibrationError, CloudParseError, ConfigError, DegenerateGeometryError,
                         StageError, TlsReflectError)
from .io import load_cloud, save_cloud
from .metrics import ConfusionCounts, confusion, metrics_report, original_snr, rates, snr
from .pipeline import run_pipeline
from .planes import Plane, PlaneDetectionConfig, PlaneSet, detect_reflective_planes
from .radiometry import (CorrectionModel, correct_intensity, extract_reflective_candidates,
                         fit_correction, incidence_geometry, self_calibrate)
from .scoring import ScoreTable, ScoringConfig, hausdorff, remove_virtual, score_cloud
from .simulator import SceneSpec, scene_presets, trace_scene

__version__ = "0.1.0"
