import math
import numpy as np
from typing import List, NamedTuple, Tuple

from ._logging import _logger
from .exceptions import InfeasibleBudgetError
from .generate_environment import GroundTruthGrid
from .planner import PlannerConfig, Workspace
from .run_mission import MeasurementRunner, MissionResult
from .sensor_model import NoiseConfig, SensorModel
from .trajectory import DynamicLimits, segment_duration

DEFAULT_FORWARD_OVERLAP = 0.7
DEFAULT_ALTITUDE_STEP = 0.01


class CoveragePlan(NamedTuple):
    """
    A lawnmower survey flown at constant altitude and cruise speed, stopping at every waypoint.

    altitude: Flight altitude (m)
    speed: Cruise speed along every segment (m/s)
    waypoints: Boustrophedon corner points, shape (n, 3)
    lane_pitch: Distance between neighbouring lanes (m); 0 for a single lane
    acceleration: Acceleration used to start and stop on each segment (m/s^2)
    """
    altitude: float
    speed: float
    waypoints: np.ndarray
    lane_pitch: float
    acceleration: float

    @property
    def lane_count(self) -> int:
        return len(self.waypoints) // 2

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)

    @property
    def segment_durations(self) -> np.ndarray:
        limits = DynamicLimits(self.speed, self.acceleration)
        return np.array([segment_duration(d, limits) for d in self.segment_lengths])

    @property
    def duration(self) -> float:
        return float(self.segment_durations.sum())

    def position_at(self, t: float) -> np.ndarray:
        """Position t seconds into the survey; the last waypoint once the survey is over"""
        durations = self.segment_durations
        starts = np.concatenate([[0.0], np.cumsum(durations)])
        if t >= starts[-1]:
            return self.waypoints[-1].copy()
        k = int(np.searchsorted(starts, max(t, 0.0), side='right')) - 1
        length = self.segment_lengths[k]
        travelled = _trapezoid_distance(t - starts[k], length, self.speed, self.acceleration)
        a, b = self.waypoints[k], self.waypoints[k + 1]
        return a + (b - a) * (travelled / length)

    def measurement_times(self, interval: float, budget: float) -> np.ndarray:
        """Measurement times every interval seconds from the start until the survey or the budget ends"""
        end = min(self.duration, budget)
        if interval <= 0:
            raise ValueError(f"The measurement interval must be positive, got {interval}")
        return interval * np.arange(int(math.floor(end / interval + 1e-9)) + 1)


def _trapezoid_distance(tau: float, length: float, v: float, a: float) -> float:
    """Distance covered tau seconds into a rest-to-rest move of the given length"""
    if length >= v * v / a:
        t_ramp = v / a
        total = length / v + t_ramp
        if tau <= t_ramp:
            return 0.5 * a * tau * tau
        if tau <= total - t_ramp:
            return 0.5 * a * t_ramp * t_ramp + v * (tau - t_ramp)
        remaining = max(total - tau, 0.0)
        return length - 0.5 * a * remaining * remaining
    t_half = math.sqrt(length / a)
    if tau <= t_half:
        return 0.5 * a * tau * tau
    remaining = max(2.0 * t_half - tau, 0.0)
    return length - 0.5 * a * remaining * remaining


def _lanes(workspace: Workspace, side: float) -> Tuple[np.ndarray, float, bool]:
    """
    Lane positions across the shorter axis of the workspace, edge to edge with a pitch no wider than the footprint
    :return: (lane coordinates, pitch, whether lanes run along y)
    """
    width = workspace.x_max - workspace.x_min
    height = workspace.y_max - workspace.y_min
    along_y = height >= width
    lo, hi = (workspace.x_min, workspace.x_max) if along_y else (workspace.y_min, workspace.y_max)
    cross = hi - lo
    if side >= cross - 1e-9:
        return np.array([lo + cross / 2.0]), 0.0, along_y
    n_lanes = int(math.ceil(cross / side - 1e-9)) + 1
    return np.linspace(lo, hi, n_lanes), cross / (n_lanes - 1), along_y


def _survey_speed(n_lanes: int, lane_length: float, pitch: float, budget: float, a: float) -> float:
    """
    Cruise speed that makes the stop-at-every-corner survey last exactly the budget: the smaller root of
    (N / a) v^2 - B v + L = 0 for N segments of total length L. NaN if no speed fits.
    """
    n_segments = 2 * n_lanes - 1
    length = n_lanes * lane_length + (n_lanes - 1) * pitch
    quad = n_segments / a
    discriminant = budget * budget - 4.0 * quad * length
    if discriminant < 0:
        return math.nan
    return (budget - math.sqrt(discriminant)) / (2.0 * quad)


def coverage_plan(
        workspace: Workspace,
        budget: float,
        sensor: SensorModel,
        limits: DynamicLimits = DynamicLimits(),
        *,
        forward_overlap: float = DEFAULT_FORWARD_OVERLAP,
        altitude_step: float = DEFAULT_ALTITUDE_STEP
) -> CoveragePlan:
    """
    Find the lowest altitude (on a grid of altitude_step) at which a lawnmower survey of the workspace fits in the
    budget. Lanes run along the longer axis from edge to edge with a pitch no wider than the footprint, and the
    vehicle stops at every corner. At each altitude the cruise speed is the one that uses the whole budget; the
    altitude is feasible when that speed exists, does not exceed v_ref, and keeps consecutive images on a lane
    overlapping by forward_overlap of the footprint.

    :param workspace: Field to cover; the search starts at workspace.h_min
    :param budget: Survey time budget in seconds
    :param sensor: Camera model; the search stops below sensor.h_max
    :param limits: v_ref caps the cruise speed and a_ref sets the stopping acceleration
    :param forward_overlap: Required overlap of consecutive images along a lane, in [0, 1)
    :param altitude_step: Spacing of the altitude search grid
    :return: The survey
    """
    workspace.validate()
    if budget <= 0:
        raise ValueError(f"budget must be positive, got {budget}")
    if not 0 <= forward_overlap < 1:
        raise ValueError(f"forward_overlap must be in the range [0, 1), got {forward_overlap}")
    if altitude_step <= 0:
        raise ValueError(f"altitude_step must be positive, got {altitude_step}")

    n_steps = int(math.floor((sensor.h_max - workspace.h_min) / altitude_step))
    for k in range(n_steps + 1):
        h = workspace.h_min + k * altitude_step
        if h <= 0 or h >= sensor.h_max:
            continue
        side = sensor.footprint_side_at(h)
        lanes, pitch, along_y = _lanes(workspace, side)
        lane_length = (workspace.y_max - workspace.y_min) if along_y else (workspace.x_max - workspace.x_min)
        v = _survey_speed(len(lanes), lane_length, pitch, budget, limits.a_ref)
        if math.isnan(v) or v <= 0 or v > limits.v_ref:
            continue
        if v * sensor.min_meas_interval > (1.0 - forward_overlap) * side + 1e-12:
            continue

        plan = CoveragePlan(h, v, _waypoints(workspace, lanes, along_y, h), pitch, limits.a_ref)
        _logger.debug(f"Coverage survey: {len(lanes)} lanes at {h:.2f} m and {v:.4f} m/s")
        return plan

    raise InfeasibleBudgetError(
        f"No altitude between {workspace.h_min} m and {sensor.h_max} m lets a lawnmower survey cover the field "
        f"within {budget} s"
    )


def _waypoints(workspace: Workspace, lanes: np.ndarray, along_y: bool, altitude: float) -> np.ndarray:
    lo, hi = (workspace.y_min, workspace.y_max) if along_y else (workspace.x_min, workspace.x_max)
    points: List[Tuple[float, float, float]] = []
    for i, lane in enumerate(lanes):
        ends = (lo, hi) if i % 2 == 0 else (hi, lo)
        for end in ends:
            points.append((lane, end, altitude) if along_y else (end, lane, altitude))
    return np.array(points)


def run_coverage_mission(
        truth: GroundTruthGrid,
        sensor: SensorModel,
        cfg: PlannerConfig,
        *,
        noise: NoiseConfig = NoiseConfig(),
        noise_rng: np.random.Generator = None,
        forward_overlap: float = DEFAULT_FORWARD_OVERLAP,
        altitude_step: float = DEFAULT_ALTITUDE_STEP,
        prior: float = 0.5
) -> MissionResult:
    """
    Fly the lawnmower survey over the field from its first corner, measuring every min_meas_interval seconds,
    and record the metrics. The survey is planned once, so no planning time is charged.
    """
    cfg.validate()
    plan = coverage_plan(cfg.workspace, cfg.budget, sensor, cfg.limits,
                         forward_overlap=forward_overlap, altitude_step=altitude_step)
    runner = MeasurementRunner(truth, sensor, cfg, noise, noise_rng, prior)
    for t in plan.measurement_times(sensor.min_meas_interval, cfg.budget):
        runner.measure(float(t), plan.position_at(float(t)))
    return MissionResult(runner.log, runner.grid_map, [], min(plan.duration, cfg.budget))
