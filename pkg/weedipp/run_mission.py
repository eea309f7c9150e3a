import numpy as np
from typing import List, NamedTuple, Optional, Sequence

from ._logging import _logger
from .generate_environment import GroundTruthGrid
from .grid_map import GridMap
from .metrics import MetricsLog
from .planner import PlannerConfig, PlanState, build_lattice, replan
from .sensor_model import NoiseConfig, NoiseState, SensorModel

DEFAULT_START_ALTITUDE = 40.0


class ReplanRecord(NamedTuple):
    """One viewpoint of one executed plan, for the per-replan debug CSV"""
    replan: int
    t_s: float
    kind: str
    x: float
    y: float
    z: float
    objective: str
    value: float


class MissionResult(NamedTuple):
    log: MetricsLog
    final_map: GridMap
    replans: List[ReplanRecord]
    elapsed: float


class MeasurementRunner:
    """
    Takes real measurements against the ground truth, fuses them into the mission's map and records the metrics.
    Shared by the IPP mission and both baselines so that all of them fuse identically.
    """

    def __init__(
            self,
            truth: GroundTruthGrid,
            sensor: SensorModel,
            cfg: PlannerConfig,
            noise: NoiseConfig,
            noise_rng: Optional[np.random.Generator] = None,
            prior: float = 0.5
    ):
        self.truth = truth
        self.sensor = sensor
        self.thresholds = cfg.thresholds
        self.budget = cfg.budget
        self.noise = noise.validate()
        self.noise_rng = noise_rng if noise_rng is not None else np.random.default_rng(noise.rng_seed)
        self.noise_state = NoiseState()
        self.grid_map = truth.new_belief(prior)
        self.log = MetricsLog()
        self.log.record(0.0, self.grid_map, truth, self.thresholds)

    def measure(self, t: float, x: Sequence[float]) -> bool:
        """
        Measure from x at mission time t unless t is past the budget
        :return: Whether the measurement was taken
        """
        if t > self.budget + 1e-9:
            return False
        observations = self.sensor.simulate_measurement(self.truth, x, self.noise, self.noise_rng, self.noise_state)
        self.grid_map.fuse_observations(observations)
        self.log.record(t, self.grid_map, self.truth, self.thresholds)
        return True


def initial_viewpoint_for(truth: GroundTruthGrid, initial_viewpoint: Optional[Sequence[float]]) -> np.ndarray:
    """The configured start position, or the centre of the field at the default altitude"""
    if initial_viewpoint is not None:
        return np.asarray(initial_viewpoint, dtype=float)
    width, height = truth.extent
    x0, y0 = truth.origin
    return np.array([x0 + width / 2.0, y0 + height / 2.0, DEFAULT_START_ALTITUDE])


def run_mission(
        truth: GroundTruthGrid,
        sensor: SensorModel,
        cfg: PlannerConfig,
        rng: np.random.Generator,
        *,
        noise: NoiseConfig = NoiseConfig(),
        noise_rng: np.random.Generator = None,
        initial_viewpoint: Sequence[float] = None,
        planning_time: float = 0.0,
        prior: float = 0.5
) -> MissionResult:
    """
    Fly an informative path planning mission over the field: measure at the start viewpoint, then alternate
    replanning and flying each whole plan, measuring at its scheduled viewpoints, until the budget runs out.
    Measurements due after the budget are dropped.

    :param truth: The field's true weed layout
    :param sensor: Camera model
    :param cfg: Planner settings; cfg.budget is the mission budget
    :param rng: Generator for the planner's random draws
    :param noise: Classifier noise settings
    :param noise_rng: Generator for the classifier noise; seeded from noise.rng_seed when not given
    :param initial_viewpoint: Start position; the field centre at 40 m by default
    :param planning_time: Seconds charged to the budget for every replan
    :param prior: Initial occupancy probability of every cell
    :return: The metrics log, the final map and a record of every executed plan
    """
    cfg.validate()
    if planning_time < 0:
        raise ValueError(f"planning_time must be non-negative, got {planning_time}")

    runner = MeasurementRunner(truth, sensor, cfg, noise, noise_rng, prior)
    lattice = build_lattice(cfg.workspace, sensor, cfg.lattice_levels)
    pose = initial_viewpoint_for(truth, initial_viewpoint)
    runner.measure(0.0, pose)

    records = []
    t = 0.0
    n_replans = 0
    while t < cfg.budget:
        t += planning_time
        if t >= cfg.budget:
            break
        plan = replan(runner.grid_map, PlanState(t, pose), cfg, sensor, rng, lattice)
        if plan is None:
            _logger.warning(f"No viewpoint could be selected at t={t:.1f}s; ending the mission early")
            break

        for x, kind, objective, value in zip(plan.viewpoints, plan.kinds, plan.objectives, plan.gains):
            records.append(ReplanRecord(n_replans, t, kind, x[0], x[1], x[2], objective or '', value))
        n_replans += 1

        for i, tau in plan.schedule:
            if not runner.measure(t + tau, plan.viewpoints[i]):
                break
        t += plan.trajectory.duration
        pose = plan.viewpoints[-1]

    elapsed = min(t, cfg.budget)
    _logger.debug(f"Mission finished after {n_replans} replans, final entropy {runner.grid_map.entropy():.2f} nats")
    return MissionResult(runner.log, runner.grid_map, records, elapsed)
