import dataclasses
import math
import os
import typing
import numpy as np
import yaml
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Tuple

from .cmaes import CmaConfig
from .exceptions import ConfigError
from .grid_map import ClassThresholds
from .planner import CMAES_MODES, OBJECTIVE_MODES, PlannerConfig, Workspace
from .rig_tree_plan import RigTreeConfig
from .sensor_model import CURVE_SHAPES, NoiseConfig, SensorModel
from .trajectory import DynamicLimits

VARIANTS = ('ipp', 'coverage', 'rig_tree')

# Streams of the per-trial seed sequence; every variant of a trial shares them
ENVIRONMENT_STREAM = 0
NOISE_STREAM = 1
PLANNER_STREAM = 2


def _require(condition: bool, message: str):
    if not condition:
        raise ConfigError(message)


@dataclass(frozen=True)
class EnvironmentConfig:
    extent: Tuple[float, float] = (50.0, 50.0)
    resolution: float = 0.5
    prior: float = 0.5
    weeds_mean: Optional[float] = None
    weeds_mean_range: Tuple[float, float] = (50.0, 250.0)

    def __post_init__(self):
        _require(all(e > 0 for e in self.extent), f"environment.extent must be positive, got {self.extent}")
        _require(self.resolution > 0, f"environment.resolution must be positive, got {self.resolution}")
        for length in self.extent:
            cells = round(length / self.resolution)
            _require(abs(cells * self.resolution - length) <= 1e-9,
                     f"environment.extent {self.extent} is not a multiple of the resolution {self.resolution}")
        _require(0 < self.prior < 1, f"environment.prior must be in the range (0, 1), got {self.prior}")
        _require(self.weeds_mean is None or self.weeds_mean > 0,
                 f"environment.weeds_mean must be positive, got {self.weeds_mean}")
        lo, hi = self.weeds_mean_range
        _require(0 < lo <= hi, f"environment.weeds_mean_range must satisfy 0 < low <= high, got {self.weeds_mean_range}")

    def draw_weeds_mean(self, rng: np.random.Generator) -> float:
        """The fixed weeds_mean when set, otherwise a draw from weeds_mean_range"""
        if self.weeds_mean is not None:
            return float(self.weeds_mean)
        return float(rng.uniform(*self.weeds_mean_range))


@dataclass(frozen=True)
class SensorConfig:
    fov_deg: float = 60.0
    h_max: float = 45.0
    p_tp0: float = 0.95
    p_fp0: float = 0.05
    curve: str = 'linear'
    sigmoid_steepness: float = 10.0
    min_meas_interval: float = 5.0

    def __post_init__(self):
        _require(self.curve in CURVE_SHAPES, f"sensor.curve must be one of {CURVE_SHAPES}, got '{self.curve}'")
        try:
            self.sensor_model()
        except ValueError as e:
            raise ConfigError(f"Invalid sensor section: {e}") from e

    def sensor_model(self) -> SensorModel:
        return SensorModel(self.fov_deg, self.h_max, self.p_tp0, self.p_fp0, self.min_meas_interval,
                           curve=self.curve, sigmoid_steepness=self.sigmoid_steepness)


@dataclass(frozen=True)
class NoiseSection:
    enabled: bool = True
    fp_cell_cap: int = 800

    def __post_init__(self):
        _require(self.fp_cell_cap >= 0, f"noise.fp_cell_cap must be non-negative, got {self.fp_cell_cap}")

    def noise_config(self, seed: int = 0) -> NoiseConfig:
        return NoiseConfig(self.enabled, self.fp_cell_cap, seed)


@dataclass(frozen=True)
class MissionConfig:
    budget: float = 300.0
    initial_viewpoint: Optional[Tuple[float, float, float]] = None
    planning_time: float = 0.0
    altitude_min: float = 1.0

    def __post_init__(self):
        _require(self.budget > 0, f"mission.budget must be positive, got {self.budget}")
        _require(self.planning_time >= 0, f"mission.planning_time must be non-negative, got {self.planning_time}")
        _require(self.altitude_min >= 0, f"mission.altitude_min must be non-negative, got {self.altitude_min}")
        _require(self.initial_viewpoint is None or self.initial_viewpoint[2] >= 0,
                 f"mission.initial_viewpoint must not be below ground, got {self.initial_viewpoint}")


@dataclass(frozen=True)
class PlannerSection:
    horizon: int = 5
    objective_mode: str = 'time_varying'
    cmaes_mode: str = 'global'
    lattice_levels: int = 3
    thresholds: Tuple[float, float] = (0.25, 0.75)
    v_ref: float = 3.0
    a_ref: float = 1.5
    cma_population: Optional[int] = None
    cma_sigma0: float = 0.3
    cma_max_evals: int = 300

    def __post_init__(self):
        _require(self.horizon >= 1, f"planner.horizon must be at least 1, got {self.horizon}")
        _require(self.objective_mode in OBJECTIVE_MODES,
                 f"planner.objective_mode must be one of {OBJECTIVE_MODES}, got '{self.objective_mode}'")
        _require(self.cmaes_mode in CMAES_MODES,
                 f"planner.cmaes_mode must be one of {CMAES_MODES}, got '{self.cmaes_mode}'")
        _require(self.lattice_levels >= 1, f"planner.lattice_levels must be at least 1, got {self.lattice_levels}")
        delta_nw, delta_w = self.thresholds
        _require(0 < delta_nw < 0.5 < delta_w < 1,
                 f"planner.thresholds must satisfy 0 < delta_nw < 0.5 < delta_w < 1, got {self.thresholds}")
        _require(self.v_ref > 0 and self.a_ref > 0, "planner.v_ref and planner.a_ref must be positive")
        _require(self.cma_population is None or self.cma_population >= 4,
                 f"planner.cma_population must be at least 4, got {self.cma_population}")
        _require(self.cma_sigma0 > 0, f"planner.cma_sigma0 must be positive, got {self.cma_sigma0}")
        _require(self.cma_max_evals >= (self.cma_population or 4),
                 f"planner.cma_max_evals must be at least the population size, got {self.cma_max_evals}")

    @property
    def limits(self) -> DynamicLimits:
        return DynamicLimits(self.v_ref, self.a_ref)


@dataclass(frozen=True)
class RigTreeSection:
    step_size: float = 10.0
    colocation_radius: float = 2.0
    max_evals: Optional[int] = None

    def __post_init__(self):
        _require(self.step_size > 0, f"rig_tree.step_size must be positive, got {self.step_size}")
        _require(self.colocation_radius >= 0,
                 f"rig_tree.colocation_radius must be non-negative, got {self.colocation_radius}")
        _require(self.max_evals is None or self.max_evals >= 1,
                 f"rig_tree.max_evals must be at least 1, got {self.max_evals}")


@dataclass(frozen=True)
class CoverageSection:
    forward_overlap: float = 0.7
    altitude_step: float = 0.01

    def __post_init__(self):
        _require(0 <= self.forward_overlap < 1,
                 f"coverage.forward_overlap must be in the range [0, 1), got {self.forward_overlap}")
        _require(self.altitude_step > 0, f"coverage.altitude_step must be positive, got {self.altitude_step}")


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything an experiment depends on. Outputs are a function of this configuration alone.
    """
    trials: int = 1
    seed: int = 0
    output_dir: str = 'results'
    variant: str = 'ipp'
    entropy_cdf_bin: float = 10.0
    environment: EnvironmentConfig = field(default_factory=EnvironmentConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    noise: NoiseSection = field(default_factory=NoiseSection)
    mission: MissionConfig = field(default_factory=MissionConfig)
    planner: PlannerSection = field(default_factory=PlannerSection)
    rig_tree: RigTreeSection = field(default_factory=RigTreeSection)
    coverage: CoverageSection = field(default_factory=CoverageSection)

    def __post_init__(self):
        _require(self.trials >= 1, f"trials must be at least 1, got {self.trials}")
        _require(self.seed >= 0, f"seed must be non-negative, got {self.seed}")
        _require(self.variant in VARIANTS, f"variant must be one of {VARIANTS}, got '{self.variant}'")
        _require(self.entropy_cdf_bin > 0, f"entropy_cdf_bin must be positive, got {self.entropy_cdf_bin}")
        _require(self.mission.altitude_min < self.sensor.h_max,
                 f"mission.altitude_min ({self.mission.altitude_min}) must be below sensor.h_max ({self.sensor.h_max})")

    def with_overrides(self, **overrides) -> 'ExperimentConfig':
        """Copy with the given top-level values replaced; None values are ignored"""
        return dataclasses.replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def with_planner(self, **overrides) -> 'ExperimentConfig':
        return dataclasses.replace(self, planner=dataclasses.replace(self.planner, **overrides))

    def trial_seed_sequence(self, trial: int, stream: int) -> np.random.SeedSequence:
        return np.random.SeedSequence((self.seed + trial, stream))

    def workspace(self) -> Workspace:
        width, height = self.environment.extent
        return Workspace(0.0, width, 0.0, height, self.mission.altitude_min, self.sensor.h_max)

    def planner_config(self) -> PlannerConfig:
        p = self.planner
        return PlannerConfig(
            horizon=p.horizon,
            budget=self.mission.budget,
            objective_mode=p.objective_mode,
            cmaes_mode=p.cmaes_mode,
            thresholds=ClassThresholds(*p.thresholds),
            workspace=self.workspace(),
            limits=p.limits,
            cma=CmaConfig(population=p.cma_population, sigma0=p.cma_sigma0, max_evals=p.cma_max_evals),
            lattice_levels=p.lattice_levels,
        )

    def rig_tree_config(self) -> RigTreeConfig:
        r = self.rig_tree
        return RigTreeConfig(
            workspace=self.workspace(),
            limits=self.planner.limits,
            step_size=r.step_size,
            colocation_radius=r.colocation_radius,
            max_evals=r.max_evals if r.max_evals is not None else self.planner.cma_max_evals,
        )


_SECTIONS = {
    'environment': EnvironmentConfig,
    'sensor': SensorConfig,
    'noise': NoiseSection,
    'mission': MissionConfig,
    'planner': PlannerSection,
    'rig_tree': RigTreeSection,
    'coverage': CoverageSection,
}


def _coerce(value: Any, expected, name: str):
    """Check value against a field annotation, converting YAML ints to floats and lists to tuples"""
    origin = typing.get_origin(expected)
    if origin is typing.Union:
        args = [a for a in typing.get_args(expected) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], name)
    if origin is tuple:
        args = typing.get_args(expected)
        _require(isinstance(value, (list, tuple)) and len(value) == len(args),
                 f"{name} must be a list of {len(args)} values, got {value!r}")
        return tuple(_coerce(v, a, name) for v, a in zip(value, args))
    if expected is bool:
        _require(isinstance(value, bool), f"{name} must be true or false, got {value!r}")
        return value
    if expected is int:
        _require(isinstance(value, int) and not isinstance(value, bool), f"{name} must be an integer, got {value!r}")
        return value
    if expected is float:
        _require(isinstance(value, (int, float)) and not isinstance(value, bool),
                 f"{name} must be a number, got {value!r}")
        _require(math.isfinite(value), f"{name} must be finite, got {value!r}")
        return float(value)
    if expected is str:
        _require(isinstance(value, str), f"{name} must be a string, got {value!r}")
        return value
    raise TypeError(f"Unsupported config field type {expected}")


def _build(cls, data: Any, prefix: str):
    _require(isinstance(data, Mapping), f"{prefix or 'The configuration'} must be a mapping, got {data!r}")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    _require(not unknown, f"Unknown key(s) in {prefix or 'the top level'}: {', '.join(map(str, unknown))}")

    values = {}
    for key, value in data.items():
        name = f"{prefix}.{key}" if prefix else key
        if key in _SECTIONS and not prefix:
            values[key] = _build(_SECTIONS[key], value if value is not None else {}, key)
        else:
            values[key] = _coerce(value, hints[key], name)
    return cls(**values)


def parse_experiment_config(data: Optional[Mapping]) -> ExperimentConfig:
    """
    Validate a configuration mapping (as loaded from YAML) into an ExperimentConfig. Missing keys take their
    defaults; unknown keys, wrong types and out-of-range values raise ConfigError.
    """
    return _build(ExperimentConfig, data if data is not None else {}, '')


def load_experiment_config(path: str) -> ExperimentConfig:
    """
    Load an experiment configuration from a YAML file
    :param path: Path of the YAML file
    :return: The validated configuration
    """
    if not os.path.isfile(path):
        raise ConfigError(f"Config file {path} does not exist")
    try:
        with open(path, 'r') as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"Config file {path} is not valid YAML: {e}") from e
    return parse_experiment_config(data)


def packaged_config_path(name: str) -> str:
    """Path of one of the configurations shipped with the package, e.g. 'full_evaluation'"""
    return os.path.join(os.path.dirname(os.path.abspath(__file__)), 'data', 'configs', f"{name}.yaml")
