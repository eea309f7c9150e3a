import math
import numpy as np
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

from ._logging import _logger
from .cmaes import CmaConfig, minimize
from .exceptions import DegenerateSegmentError
from .grid_map import ClassThresholds, GridMap, binary_entropy, probability
from .sensor_model import SensorModel
from .trajectory import DynamicLimits, Trajectory, measurement_schedule, plan_through, travel_time

OBJECTIVE_MODES = ('info_only', 'class_only', 'time_varying')
CMAES_MODES = ('none', 'local', 'global')

INFO = 'info'
CLASS = 'class'

# Lattice levels stop short of h_max so that every candidate is informative
LATTICE_CEILING = 0.95

_COINCIDENT = 1e-9


class Workspace(NamedTuple):
    """Box the vehicle may fly in: x and y limits of the mapped area and the allowed altitude range (metres)"""
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    h_min: float
    h_max: float

    @classmethod
    def over_map(cls, grid_map: GridMap, h_min: float, h_max: float) -> 'Workspace':
        width, height = grid_map.extent
        x0, y0 = grid_map.origin
        return cls(x0, x0 + width, y0, y0 + height, h_min, h_max)

    def validate(self) -> 'Workspace':
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise ValueError(f"The workspace is empty: {self}")
        if not 0 <= self.h_min < self.h_max:
            raise ValueError(f"Expected 0 <= h_min < h_max, got h_min={self.h_min} and h_max={self.h_max}")
        return self

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.h_min])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.x_max, self.y_max, self.h_max])

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)


class Lattice(NamedTuple):
    """
    Candidate viewpoints at several altitudes. points holds every candidate, level by level from the lowest
    altitude; altitudes and spacings give each level's altitude and xy pitch.
    """
    points: np.ndarray
    altitudes: Tuple[float, ...]
    spacings: Tuple[float, ...]
    level_of_point: np.ndarray

    def __len__(self):
        return len(self.points)

    def level_points(self, level: int) -> np.ndarray:
        return self.points[self.level_of_point == level]


class PlannerConfig(NamedTuple):
    horizon: int = 5
    budget: float = 300.0
    objective_mode: str = 'time_varying'
    cmaes_mode: str = 'global'
    thresholds: ClassThresholds = ClassThresholds()
    workspace: Workspace = Workspace(0.0, 50.0, 0.0, 50.0, 1.0, 45.0)
    limits: DynamicLimits = DynamicLimits()
    cma: CmaConfig = CmaConfig()
    lattice_levels: int = 3

    def validate(self) -> 'PlannerConfig':
        if self.horizon < 1:
            raise ValueError(f"horizon must be at least 1, got {self.horizon}")
        if self.budget <= 0:
            raise ValueError(f"budget must be positive, got {self.budget}")
        if self.objective_mode not in OBJECTIVE_MODES:
            raise ValueError(f"objective_mode must be one of {OBJECTIVE_MODES}, got '{self.objective_mode}'")
        if self.cmaes_mode not in CMAES_MODES:
            raise ValueError(f"cmaes_mode must be one of {CMAES_MODES}, got '{self.cmaes_mode}'")
        if self.lattice_levels < 1:
            raise ValueError(f"lattice_levels must be at least 1, got {self.lattice_levels}")
        self.thresholds.validate()
        self.workspace.validate()
        self.limits.validate()
        return self


@dataclass
class PlanState:
    """
    Elapsed mission time t, the vehicle's current pose, and the global (X^g) and intermediate (X^i) viewpoints
    chosen so far. Intermediate point k lies between global points k and k + 1.
    """
    t: float
    pose: np.ndarray
    global_points: List[np.ndarray] = field(default_factory=list)
    intermediate_points: List[np.ndarray] = field(default_factory=list)

    @property
    def point_count(self) -> int:
        """Points in the chain, the frozen start pose included"""
        return 1 + len(self.global_points) + len(self.intermediate_points)

    @property
    def last_point(self) -> np.ndarray:
        return self.global_points[-1] if self.global_points else self.pose

    def chain(self) -> np.ndarray:
        """pose, g1, i1, g2, i2, g3, ..."""
        points = [self.pose]
        for k, g in enumerate(self.global_points):
            if k > 0 and k - 1 < len(self.intermediate_points):
                points.append(self.intermediate_points[k - 1])
            points.append(g)
        return np.array(points, dtype=float)


class Selection(NamedTuple):
    index: int
    viewpoint: np.ndarray
    objective: str
    gain: float
    time: float
    rate: float


class ReplanResult(NamedTuple):
    """
    viewpoints: The chain flown by the plan, starting at the current pose
    kinds: 'start', 'global' or 'intermediate' per viewpoint
    objectives: Gain measure per viewpoint (None for the start)
    gains: Each viewpoint's contribution to the plan's objective; 0 for the start and for skipped viewpoints
    trajectory: The trajectory through viewpoints
    schedule: (viewpoint index, time) of the measurements along the trajectory, start excluded
    rate: Total gain per second of the plan
    greedy_rate: Same for the chain before CMA-ES refinement
    """
    viewpoints: np.ndarray
    kinds: List[str]
    objectives: List[Optional[str]]
    gains: List[float]
    trajectory: Trajectory
    schedule: List[Tuple[int, float]]
    rate: float
    greedy_rate: float


def build_lattice(workspace: Workspace, sensor: SensorModel, levels: int = 3) -> Lattice:
    """
    Build the multiresolution lattice of candidate viewpoints.

    Level k (1-based) sits at h_min + k / levels * (0.95 * h_max - h_min). On each level the xy pitch equals the
    footprint side at that altitude, so neighbouring footprints abut; points start half a footprint inside the
    lower edge and the last one is pulled back to lie half a footprint inside the upper edge. A level whose
    footprint spans the workspace gets a single centred point.

    :param workspace: Box the candidates must lie in
    :param sensor: Camera model giving the footprint size
    :param levels: Number of altitude levels
    :return: The lattice, lowest level first
    """
    if levels < 1:
        raise ValueError(f"levels must be at least 1, got {levels}")
    workspace.validate()

    ceiling = LATTICE_CEILING * workspace.h_max
    points, altitudes, spacings, level_of_point = [], [], [], []
    for k in range(1, levels + 1):
        h = workspace.h_min + k / levels * (ceiling - workspace.h_min)
        side = sensor.footprint_side_at(h)
        xs = _axis_positions(workspace.x_min, workspace.x_max, side)
        ys = _axis_positions(workspace.y_min, workspace.y_max, side)
        for y in ys:
            for x in xs:
                points.append((x, y, h))
                level_of_point.append(k - 1)
        altitudes.append(h)
        spacings.append(side)

    return Lattice(np.array(points), tuple(altitudes), tuple(spacings), np.array(level_of_point))


def _axis_positions(lo: float, hi: float, side: float) -> List[float]:
    extent = hi - lo
    if side <= 0:
        raise ValueError("Lattice levels must lie above the ground")
    n = int(math.ceil(extent / side - 1e-9))
    if n <= 1:
        return [lo + extent / 2.0]
    return [min(lo + side / 2.0 + i * side, hi - side / 2.0) for i in range(n)]


def info_gain(map_before: GridMap, map_after: GridMap) -> float:
    """Entropy reduction from map_before to map_after, in nats"""
    map_before.check_same_geometry(map_after)
    return map_before.entropy() - map_after.entropy()


def class_gain(map_before: GridMap, map_after: GridMap, th: ClassThresholds) -> int:
    """Reduction in the number of unclassified cells from map_before to map_after; negative if cells were de-classified"""
    map_before.check_same_geometry(map_after)
    return map_before.unclassified_count(th) - map_after.unclassified_count(th)


def _region_gain(before: np.ndarray, after: np.ndarray, objective: str, th: ClassThresholds) -> float:
    """Gain over a block of cells; equals the whole-map difference since no other cell changes"""
    if objective == INFO:
        return float(binary_entropy(before).sum() - binary_entropy(after).sum())

    def unclassified(region):
        p = probability(region)
        return int(np.count_nonzero((p > th.delta_nw) & (p < th.delta_w)))

    return float(unclassified(before) - unclassified(after))


def ml_measurement_gain(
        grid_map: GridMap,
        sensor: SensorModel,
        x: Sequence[float],
        objective: str,
        th: ClassThresholds,
        apply: bool = False
) -> float:
    """
    Gain of an ML-simulated measurement taken from x, by the given measure ('info' or 'class')
    :param apply: Fuse the measurement into grid_map as well
    """
    row_slice, col_slice = sensor.covered_region(grid_map, x)
    before = grid_map.logodds[row_slice, col_slice]
    if before.size == 0:
        return 0.0
    after = sensor.ml_logodds_update(before, float(x[2]))
    gain = _region_gain(before, after, objective, th)
    if apply:
        grid_map.logodds[row_slice, col_slice] = after
    return gain


def choose_objective(mode: str, t: float, budget: float, u: float) -> str:
    if mode == 'info_only':
        return INFO
    if mode == 'class_only':
        return CLASS
    return INFO if t / budget < u else CLASS


def select_next_viewpoint(
        grid_map: GridMap,
        state: PlanState,
        lattice: Lattice,
        cfg: PlannerConfig,
        sensor: SensorModel,
        rng: np.random.Generator
) -> Optional[Selection]:
    """
    Choose the lattice candidate maximising gain per second of travel from the last point of the chain.

    One uniform number is drawn from rng on every call; in time_varying mode the information objective is used
    while t / B is below it and the classification objective otherwise. Under the classification objective, equal
    rates go to the higher information rate. Remaining ties go to the shorter travel time, then the lower lattice
    index, which also makes the cheapest candidate win when every gain is zero.
    Candidates coinciding with the last chain point are skipped.

    :return: The selection, or None if every candidate coincides with the last chain point
    """
    if len(lattice) == 0:
        raise ValueError("Cannot select a viewpoint from an empty lattice")

    u = rng.random()
    objective = choose_objective(cfg.objective_mode, state.t, cfg.budget, u)
    last = np.asarray(state.last_point, dtype=float)

    best, best_key = None, None
    for index, candidate in enumerate(lattice.points):
        if np.linalg.norm(candidate - last) < _COINCIDENT:
            continue
        gain = ml_measurement_gain(grid_map, sensor, candidate, objective, cfg.thresholds)
        time = travel_time([last, candidate], cfg.limits)
        rate = gain / time
        # Classification gains are counts and often tie, mostly at zero; the information rate separates them
        secondary = 0.0
        if objective == CLASS:
            secondary = ml_measurement_gain(grid_map, sensor, candidate, INFO, cfg.thresholds) / time
        key = (-rate, -secondary, time, index)
        if best_key is None or key < best_key:
            best_key = key
            best = Selection(index, candidate.copy(), objective, gain, time, rate)
    return best


class ChainScore(NamedTuple):
    rate: float
    gains: List[float]
    trajectory: Optional[Trajectory]
    schedule: List[Tuple[int, float]]


def score_chain(
        chain: np.ndarray,
        objectives: Sequence[Optional[str]],
        grid_map: GridMap,
        sensor: SensorModel,
        cfg: PlannerConfig,
        time_left: float = math.inf
) -> ChainScore:
    """
    Utility rate of flying the chain: the summed gains of the ML-simulated measurements taken along it, fused in
    order on a copy of grid_map, divided by the time flown. Each viewpoint is scored by its own objective. The start
    (index 0) is not measured, nor is any viewpoint dropped by the measurement interval or due after time_left,
    which also caps the time flown; the mission measures and stops the same way.
    A chain with coinciding consecutive viewpoints scores -inf.
    """
    try:
        traj = plan_through(chain, cfg.limits)
    except DegenerateSegmentError:
        return ChainScore(-math.inf, [0.0] * len(chain), None, [])

    schedule = [(i, t) for i, t in measurement_schedule(traj, chain, sensor.min_meas_interval)
                if i > 0 and t <= time_left + 1e-9]
    scratch = grid_map.copy()
    gains = [0.0] * len(chain)
    for i, _ in schedule:
        gains[i] = ml_measurement_gain(scratch, sensor, chain[i], objectives[i], cfg.thresholds, apply=True)
    return ChainScore(sum(gains) / min(traj.duration, max(time_left, 1e-9)), gains, traj, schedule)


def replan(
        grid_map: GridMap,
        state: PlanState,
        cfg: PlannerConfig,
        sensor: SensorModel,
        rng: np.random.Generator,
        lattice: Lattice = None
) -> Optional[ReplanResult]:
    """
    Plan the next stretch of the mission from state.pose.

    Global viewpoints are picked greedily from the lattice while the horizon admits the chain's point count
    (start included), each measurement being ML-simulated on a scratch copy of the map and the simulated time
    advanced by the travel time to it. A midpoint is inserted between consecutive global viewpoints. The chain is
    then refined with CMA-ES according to cfg.cmaes_mode: 'global' moves every point but the start, 'local' only
    the intermediate points. grid_map itself is never modified.

    :param grid_map: The current belief
    :param state: Elapsed time and current pose; any viewpoints it holds are ignored
    :param cfg: Planner settings
    :param sensor: Camera model
    :param rng: Generator for the objective draws and the CMA-ES seed
    :param lattice: Candidate viewpoints; built from cfg when not given
    :return: The plan, or None if no viewpoint could be selected
    """
    if lattice is None:
        lattice = build_lattice(cfg.workspace, sensor, cfg.lattice_levels)

    scratch = grid_map.copy()
    work = PlanState(state.t, np.asarray(state.pose, dtype=float))
    global_objectives = []
    while cfg.horizon >= work.point_count:
        selection = select_next_viewpoint(scratch, work, lattice, cfg, sensor, rng)
        if selection is None:
            break
        sensor.apply_ml_measurement(scratch, selection.viewpoint)
        last = work.last_point
        work.t += selection.time
        if work.global_points:
            work.intermediate_points.append(0.5 * (last + selection.viewpoint))
        work.global_points.append(selection.viewpoint)
        global_objectives.append(selection.objective)

    if not work.global_points:
        return None

    chain = work.chain()
    kinds = ['start'] + ['global']
    objectives = [None, global_objectives[0]]
    for k in range(1, len(global_objectives)):
        # An intermediate point is scored like the global point it leads to
        kinds += ['intermediate', 'global']
        objectives += [global_objectives[k], global_objectives[k]]

    time_left = cfg.budget - state.t
    greedy = score_chain(chain, objectives, grid_map, sensor, cfg, time_left)
    best_chain, best = chain, greedy

    if cfg.cmaes_mode != 'none':
        movable = [i for i, kind in enumerate(kinds) if kind != 'start'] if cfg.cmaes_mode == 'global' \
            else [i for i, kind in enumerate(kinds) if kind == 'intermediate']
        if movable:
            refined_chain, refined = _refine(chain, objectives, movable, grid_map, sensor, cfg, rng, time_left)
            # The greedy chain stays the incumbent unless refinement beats it
            if refined.rate > greedy.rate:
                best_chain, best = refined_chain, refined

    _logger.debug(
        f"Replan at t={state.t:.1f}s: {len(work.global_points)} global, {len(work.intermediate_points)} intermediate "
        f"viewpoints, rate {greedy.rate:.4g} -> {best.rate:.4g}"
    )
    return ReplanResult(best_chain, kinds, objectives, best.gains, best.trajectory, best.schedule,
                        best.rate, greedy.rate)


def _refine(
        chain: np.ndarray,
        objectives: List[Optional[str]],
        movable: List[int],
        grid_map: GridMap,
        sensor: SensorModel,
        cfg: PlannerConfig,
        rng: np.random.Generator,
        time_left: float = math.inf
) -> Tuple[np.ndarray, ChainScore]:
    ws = cfg.workspace

    def chain_for(vector: np.ndarray) -> np.ndarray:
        candidate = chain.copy()
        candidate[movable] = vector.reshape(-1, 3)
        return candidate

    def objective(vector: np.ndarray) -> float:
        return -score_chain(chain_for(vector), objectives, grid_map, sensor, cfg, time_left).rate

    cma = cfg.cma._replace(
        seed=int(rng.integers(2 ** 31)),
        bounds=(np.tile(ws.lower, len(movable)), np.tile(ws.upper, len(movable))),
    )
    result = minimize(objective, chain[movable].ravel(), cma)
    refined = chain_for(result.x)
    return refined, score_chain(refined, objectives, grid_map, sensor, cfg, time_left)
