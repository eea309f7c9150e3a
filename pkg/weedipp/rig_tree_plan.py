import numpy as np
from typing import List, NamedTuple, Optional, Sequence

from ._logging import _logger
from .generate_environment import GroundTruthGrid
from .grid_map import GridMap, binary_entropy
from .planner import INFO, PlannerConfig, Workspace
from .run_mission import MeasurementRunner, MissionResult, ReplanRecord, initial_viewpoint_for
from .sensor_model import NoiseConfig, SensorModel
from .trajectory import DynamicLimits, travel_time

_COINCIDENT = 1e-9


class RigTreeConfig(NamedTuple):
    """
    step_size: Longest edge added when extending the tree (m)
    colocation_radius: Vertices closer than this are compared for pruning (m)
    max_evals: Samples drawn per tree build; each adds at most one vertex
    """
    workspace: Workspace = Workspace(0.0, 50.0, 0.0, 50.0, 1.0, 45.0)
    limits: DynamicLimits = DynamicLimits()
    step_size: float = 10.0
    colocation_radius: float = 2.0
    max_evals: int = 300

    def validate(self) -> 'RigTreeConfig':
        if self.step_size <= 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.colocation_radius < 0:
            raise ValueError(f"colocation_radius must be non-negative, got {self.colocation_radius}")
        if self.max_evals < 1:
            raise ValueError(f"max_evals must be at least 1, got {self.max_evals}")
        self.workspace.validate()
        self.limits.validate()
        return self


class Vertex:
    """
    A viewpoint reached through the tree.

    Attributes:
        pose - ndarray - 3D position
        cost - float - Travel time from the root, every edge flown from rest to rest
        info - float - Entropy reduction (nats) of the ML-simulated measurements along the branch
        parent - int or None - Index of the parent vertex
        closed - bool - Dominated by a co-located vertex; no longer extended or returned
    """

    def __init__(self, pose: np.ndarray, cost: float, info: float, parent: Optional[int]):
        self.pose = pose
        self.cost = cost
        self.info = info
        self.parent = parent
        self.closed = False

    def dominates(self, other: 'Vertex') -> bool:
        return self.info >= other.info and self.cost <= other.cost


class RigTree:
    """
    Rapidly-exploring information gathering tree over a snapshot of the belief. Vertices keep no maps of their
    own: the belief at a vertex is replayed from the snapshot over just the cells a new measurement would cover.
    """

    def __init__(self, root_pose: np.ndarray, grid_map: GridMap):
        self.snapshot = grid_map.copy()
        self.vertices: List[Vertex] = [Vertex(np.asarray(root_pose, dtype=float), 0.0, 0.0, None)]

    def open_vertices(self) -> List[int]:
        return [i for i, v in enumerate(self.vertices) if not v.closed]

    def nearest(self, x: np.ndarray) -> int:
        candidates = self.open_vertices()
        distances = [np.linalg.norm(self.vertices[i].pose - x) for i in candidates]
        return candidates[int(np.argmin(distances))]

    def near(self, x: np.ndarray, radius: float) -> List[int]:
        return [i for i in self.open_vertices() if np.linalg.norm(self.vertices[i].pose - x) <= radius]

    def branch(self, index: int) -> np.ndarray:
        """Poses from the root to the given vertex"""
        poses = []
        while index is not None:
            poses.append(self.vertices[index].pose)
            index = self.vertices[index].parent
        return np.array(poses[::-1])

    def belief_over(self, index: int, row_slice: slice, col_slice: slice, sensor: SensorModel) -> np.ndarray:
        """
        Log-odds of a block of cells after the ML-simulated measurements at every vertex of the branch to index,
        the root excluded, replayed in order on the snapshot
        """
        block = self.snapshot.logodds[row_slice, col_slice].copy()
        for pose in self.branch(index)[1:]:
            rows, cols = sensor.covered_region(self.snapshot, pose)
            r0, r1 = max(rows.start, row_slice.start), min(rows.stop, row_slice.stop)
            c0, c1 = max(cols.start, col_slice.start), min(cols.stop, col_slice.stop)
            if r0 < r1 and c0 < c1:
                sub = block[r0 - row_slice.start:r1 - row_slice.start, c0 - col_slice.start:c1 - col_slice.start]
                sub[...] = sensor.ml_logodds_update(sub, float(pose[2]))
        return block

    def measurement_gain(self, index: int, x: np.ndarray, sensor: SensorModel) -> float:
        """Entropy reduction of an ML-simulated measurement at x after the branch to index"""
        row_slice, col_slice = sensor.covered_region(self.snapshot, x)
        before = self.belief_over(index, row_slice, col_slice, sensor)
        if before.size == 0:
            return 0.0
        after = sensor.ml_logodds_update(before, float(x[2]))
        return float(binary_entropy(before).sum() - binary_entropy(after).sum())

    def insert(self, vertex: Vertex, colocation_radius: float) -> bool:
        """
        Add vertex unless an open co-located vertex dominates it; co-located vertices it dominates are closed
        :return: Whether the vertex was added
        """
        colocated = [
            i for i in self.open_vertices()[1:]
            if np.linalg.norm(self.vertices[i].pose - vertex.pose) <= colocation_radius
        ]
        if any(self.vertices[i].dominates(vertex) for i in colocated):
            return False
        for i in colocated:
            if vertex.dominates(self.vertices[i]):
                self.vertices[i].closed = True
        self.vertices.append(vertex)
        return True

    def best_vertex(self) -> Optional[int]:
        """
        Open vertex with the highest information per second; the cheapest vertex if no branch gains anything
        """
        candidates = [i for i in self.open_vertices() if self.vertices[i].parent is not None]
        if not candidates:
            return None
        best = max(candidates, key=lambda i: (self.vertices[i].info / self.vertices[i].cost, -i))
        if self.vertices[best].info <= 0:
            best = min(candidates, key=lambda i: (self.vertices[i].cost, i))
        return best


def _steer(source: np.ndarray, target: np.ndarray, step: float) -> np.ndarray:
    direction = target - source
    distance = np.linalg.norm(direction)
    if distance <= step:
        return target
    return source + direction * (step / distance)


def _best_connection(
        tree: RigTree,
        x_new: np.ndarray,
        time_left: float,
        cfg: RigTreeConfig,
        sensor: SensorModel
) -> Optional[Vertex]:
    """
    Candidate vertex at x_new under the open vertex within step_size that gives it the most information per second
    of travel, ties going to the cheaper then the older parent. None if no parent reaches x_new within time_left.
    """
    best, best_key = None, None
    for i in tree.near(x_new, cfg.step_size):
        parent = tree.vertices[i]
        if np.linalg.norm(parent.pose - x_new) < _COINCIDENT:
            continue
        cost = parent.cost + travel_time([parent.pose, x_new], cfg.limits)
        if cost > time_left:
            continue
        info = parent.info + tree.measurement_gain(i, x_new, sensor)
        key = (-info / cost, cost, i)
        if best_key is None or key < best_key:
            best_key, best = key, Vertex(x_new.copy(), cost, info, i)
    return best


def grow_rig_tree(
        grid_map: GridMap,
        pose: Sequence[float],
        time_left: float,
        cfg: RigTreeConfig,
        sensor: SensorModel,
        rng: np.random.Generator
) -> RigTree:
    """
    Grow a RIG-tree from pose with cfg.max_evals samples, so it never holds more than max_evals + 1 vertices.

    Each sample is steered at most step_size from its nearest open vertex and connected once, to the open vertex
    within step_size that gives it the most information per second. Its cost adds the rest-to-rest travel time of
    the edge and its information adds the entropy reduction of an ML-simulated measurement there. Samples costing
    more than time_left are discarded, as are samples dominated (no more information at no less cost) by a
    co-located vertex.
    """
    if time_left <= 0:
        raise ValueError(f"time_left must be positive, got {time_left}")
    cfg.validate()

    ws = cfg.workspace
    tree = RigTree(np.asarray(pose, dtype=float), grid_map)
    for _ in range(cfg.max_evals):
        sample = rng.uniform(ws.lower, ws.upper)
        nearest = tree.vertices[tree.nearest(sample)]
        vertex = _best_connection(tree, _steer(nearest.pose, sample, cfg.step_size), time_left, cfg, sensor)
        if vertex is not None:
            tree.insert(vertex, cfg.colocation_radius)
    return tree


def rig_tree_plan(
        grid_map: GridMap,
        pose: Sequence[float],
        time_left: float,
        cfg: RigTreeConfig,
        sensor: SensorModel,
        rng: np.random.Generator
) -> Optional[np.ndarray]:
    """
    Grow a RIG-tree from pose (see grow_rig_tree()) and return the branch with the best information per second of
    travel.

    :return: Poses from pose to the chosen vertex, or None if no vertex fits in time_left
    """
    tree = grow_rig_tree(grid_map, pose, time_left, cfg, sensor, rng)
    best = tree.best_vertex()
    _logger.debug(f"RIG-tree with {len(tree.vertices)} vertices, {len(tree.open_vertices())} open")
    return None if best is None else tree.branch(best)


def run_rig_tree_mission(
        truth: GroundTruthGrid,
        sensor: SensorModel,
        planner_cfg: PlannerConfig,
        cfg: RigTreeConfig,
        rng: np.random.Generator,
        *,
        noise: NoiseConfig = NoiseConfig(),
        noise_rng: np.random.Generator = None,
        initial_viewpoint: Sequence[float] = None,
        planning_time: float = 0.0,
        prior: float = 0.5
) -> MissionResult:
    """
    Fly a RIG-tree mission: scan from the initial viewpoint, then alternate building a tree over the current belief
    and flying its best branch vertex by vertex, measuring on arrival at each vertex. The vehicle hovers when it
    arrives sooner than min_meas_interval after the previous measurement.
    """
    planner_cfg.validate()
    runner = MeasurementRunner(truth, sensor, planner_cfg, noise, noise_rng, prior)
    pose = initial_viewpoint_for(truth, initial_viewpoint)
    runner.measure(0.0, pose)

    budget = planner_cfg.budget
    records = []
    t, last_measurement = 0.0, 0.0
    n_builds = 0
    while t < budget:
        t += planning_time
        if t >= budget:
            break
        branch = rig_tree_plan(runner.grid_map, pose, budget - t, cfg, sensor, rng)
        if branch is None:
            break
        records += [
            ReplanRecord(n_builds, t, 'start' if k == 0 else 'global', x[0], x[1], x[2], '' if k == 0 else INFO, 0.0)
            for k, x in enumerate(branch)
        ]
        n_builds += 1

        for a, b in zip(branch[:-1], branch[1:]):
            t = max(t + travel_time([a, b], cfg.limits), last_measurement + sensor.min_meas_interval)
            if not runner.measure(t, b):
                break
            last_measurement = t
        pose = branch[-1]

    return MissionResult(runner.log, runner.grid_map, records, min(t, budget))
