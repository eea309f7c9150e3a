__version__ = '0.1.0'
from .grid_map import GridMap, ClassThresholds, CellIndex, new_map
from .sensor_model import SensorModel, Footprint, NoiseConfig, NoiseState
from .trajectory import DynamicLimits, PolySegment, Trajectory, plan_through, travel_time, sample, measurement_times
from .cmaes import CmaConfig, CmaResult, minimize
from .planner import Lattice, PlannerConfig, PlanState, Workspace, build_lattice, info_gain, class_gain, \
    select_next_viewpoint, replan
from .run_mission import run_mission
from .coverage_plan import CoveragePlan, coverage_plan, run_coverage_mission
from .rig_tree_plan import RigTree, RigTreeConfig, grow_rig_tree, rig_tree_plan, run_rig_tree_mission
from .generate_environment import GroundTruthGrid, generate_environment
from .metrics import MetricsLog, f2_score, entropy_cdf, aggregate_logs
from .experiment_config import ExperimentConfig, load_experiment_config, parse_experiment_config
from .run_experiment import run_experiment
from .acceptance import CriterionResult, evaluate_acceptance, run_acceptance
from .exceptions import WeedIppError, ConfigError, GridIndexError, GeometryMismatchError, DegenerateSegmentError, \
    TrajectoryRangeError, InfeasibleBudgetError
