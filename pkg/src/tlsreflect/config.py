"""Pipeline configuration: nested dataclasses, strict JSON loading, range checks."""
import json
import math
from dataclasses import asdict, dataclass, field, fields, is_dataclass

from .exceptions import ConfigError
from .planes import PlaneDetectionConfig
from .scoring import ScoringConfig


@dataclass
class RadiusFilterConfig:
    enabled: bool = False
    radius: float = 0.2
    min_neighbors: int = 2


@dataclass
class VoxelConfig:
    enabled: bool = False
    size: float = 0.02


@dataclass
class PreprocessConfig:
    radius_filter: RadiusFilterConfig = field(default_factory=RadiusFilterConfig)
    voxel: VoxelConfig = field(default_factory=VoxelConfig)


@dataclass
class RadiometryConfig:
    calibration_csv: str | None = None
    deg_angle: int = 3
    deg_range: int = 3
    ref_angle_cos: float = 1.0
    ref_range: float = 10.0
    range_power_offset: int = -2
    normal_k: int = 50
    percentile: float | None = 85.0
    threshold: float | None = None


@dataclass
class PlanesConfig:
    eps: float = 0.3
    min_pts: int = 10
    min_size: int = 200
    max_curvature: float = 0.02
    max_linearity: float = 0.9
    ransac_dist: float = 0.02
    ransac_iters: int = 1000
    merge_cos: float = 0.985
    merge_dist: float = 0.1


@dataclass
class ScoringSection:
    radius: float = 0.5
    normal_k: int = 50
    n1: int = 11
    n2: int = 11
    sigma_sym: float = 0.15
    sigma_sim: float = 0.5
    threshold: float = 0.5
    behind_margin: float = 0.05
    chunk: int = 20000


@dataclass
class StagesConfig:
    metrics: bool = True
    descriptor_dump: bool = False


@dataclass
class PipelineConfig:
    input: str | None = None
    output_dir: str = "out"
    seed: int = 0
    threads: int | None = None
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    radiometry: RadiometryConfig = field(default_factory=RadiometryConfig)
    planes: PlanesConfig = field(default_factory=PlanesConfig)
    scoring: ScoringSection = field(default_factory=ScoringSection)
    stages: StagesConfig = field(default_factory=StagesConfig)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def plane_config(self):
        return PlaneDetectionConfig(seed=self.seed, **asdict(self.planes))

    def scoring_config(self):
        return ScoringConfig(**asdict(self.scoring))

    def validate(self):
        _validate(self)
        return self


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _coerce(value, annotation, where):
    ann = getattr(annotation, "__name__", str(annotation))
    optional = "None" in ann
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{where}: null is not allowed")
    if ann.startswith("bool"):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if ann.startswith("int"):
        if not (_is_number(value) and float(value).is_integer()):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    if ann.startswith("float"):
        if not _is_number(value) or not math.isfinite(value):
            raise ConfigError(f"{where}: expected a finite number, got {value!r}")
        return float(value)
    if ann.startswith("str"):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported type {ann}")  # pragma: no cover


def _from_dict(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = known[name]
        path = f"{where}.{name}" if where else name
        default = f.default_factory() if callable(f.default_factory) else f.default
        if is_dataclass(default):
            kwargs[name] = _from_dict(type(default), value, path)
        else:
            kwargs[name] = _coerce(value, f.type, path)
    return cls(**kwargs)


def _check(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _validate(cfg):
    _check(cfg.threads is None or cfg.threads >= 1, "threads must be >= 1")
    _check(cfg.seed >= 0, "seed must be >= 0")
    rf = cfg.preprocess.radius_filter
    _check(rf.radius > 0 and rf.min_neighbors >= 0, "preprocess.radius_filter: radius > 0, min_neighbors >= 0")
    _check(cfg.preprocess.voxel.size > 0, "preprocess.voxel.size must be > 0")
    r = cfg.radiometry
    _check(0 <= r.deg_angle <= 8 and 0 <= r.deg_range <= 8, "radiometry degrees must lie in 0..8")
    _check(0 < r.ref_angle_cos <= 1, "radiometry.ref_angle_cos must lie in (0, 1]")
    _check(r.ref_range > 0, "radiometry.ref_range must be > 0")
    _check(r.normal_k >= 3, "radiometry.normal_k must be >= 3")
    _check((r.percentile is None) != (r.threshold is None),
           "radiometry: set exactly one of percentile / threshold")
    _check(r.percentile is None or 0 <= r.percentile <= 100, "radiometry.percentile must lie in [0, 100]")
    p = cfg.planes
    _check(p.eps > 0 and p.min_pts >= 1 and p.min_size >= 3, "planes: eps > 0, min_pts >= 1, min_size >= 3")
    _check(0 <= p.max_curvature <= 1 / 3 and 0 <= p.max_linearity <= 1,
           "planes: max_curvature in [0, 1/3], max_linearity in [0, 1]")
    _check(p.ransac_dist > 0 and p.ransac_iters >= 1, "planes: ransac_dist > 0, ransac_iters >= 1")
    _check(0 < p.merge_cos <= 1 and p.merge_dist >= 0, "planes: merge_cos in (0, 1], merge_dist >= 0")
    s = cfg.scoring
    _check(s.radius > 0 and s.normal_k >= 3, "scoring: radius > 0, normal_k >= 3")
    _check(s.n1 >= 1 and s.n2 >= 1, "scoring: bin counts must be >= 1")
    _check(s.sigma_sym > 0 and s.sigma_sim > 0, "scoring: sigmas must be > 0")
    _check(0 < s.threshold < 1, "scoring.threshold must lie in (0, 1)")
    _check(s.behind_margin >= 0 and s.chunk >= 1, "scoring: behind_margin >= 0, chunk >= 1")


def config_from_dict(data):
    return _from_dict(PipelineConfig, data, "").validate()


def load_config(path):
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    return config_from_dict(data)


def default_config():
    return PipelineConfig()
