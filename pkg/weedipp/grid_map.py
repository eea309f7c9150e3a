import hashlib
import math
import numpy as np
from typing import Iterable, NamedTuple, Set, Tuple

from .exceptions import GeometryMismatchError, GridIndexError

# Log-odds are clamped to this magnitude after every fusion so that probabilities stay representable
LOGODDS_CLAMP = 50.0

_DIVISIBILITY_TOLERANCE = 1e-9


class CellIndex(NamedTuple):
    col: int
    row: int


class ClassThresholds(NamedTuple):
    """
    Occupancy thresholds splitting the map into "non-weed" (p <= delta_nw), "weed" (p >= delta_w) and
    unclassified cells (delta_nw < p < delta_w)
    """
    delta_nw: float = 0.25
    delta_w: float = 0.75

    def validate(self) -> 'ClassThresholds':
        if not 0 < self.delta_nw < 0.5:
            raise ValueError(f"delta_nw must be in the range (0, 0.5), got {self.delta_nw}")
        if not 0.5 < self.delta_w < 1:
            raise ValueError(f"delta_w must be in the range (0.5, 1), got {self.delta_w}")
        return self


def logodds(p):
    """Natural-log odds of a probability (scalar or array)"""
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


def probability(l):
    """Inverse of logodds(); stable for large magnitudes"""
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(l, dtype=float)))


def binary_entropy(l) -> np.ndarray:
    """
    Entropy in nats of Bernoulli variables given in log-odds form. Computed as softplus(L) - p*L, which
    stays accurate where p is within rounding distance of 0 or 1.
    """
    l = np.asarray(l, dtype=float)
    return np.maximum(np.logaddexp(0.0, l) - probability(l) * l, 0.0)


class GridMap:
    """
    2D occupancy grid holding the belief over weed presence, one Bernoulli variable per cell stored in
    log-odds form.

    Attributes:
        _origin - (x, y) world coordinate of the grid's lower-left corner, in metres
        _resolution - float - Cell edge length in metres
        _logodds - ndarray of shape (rows, cols) - Row r holds the cells with y index r
    """

    def __init__(self, origin: Tuple[float, float], resolution: float, logodds_grid: np.ndarray):
        if resolution <= 0:
            raise ValueError(f"resolution must be positive, got {resolution}")
        logodds_grid = np.array(logodds_grid, dtype=float)
        if logodds_grid.ndim != 2 or min(logodds_grid.shape) < 1:
            raise ValueError(f"A grid needs at least one row and one column, got shape {logodds_grid.shape}")
        if not np.all(np.isfinite(logodds_grid)):
            raise ValueError("Log-odds values must be finite")

        self._origin = (float(origin[0]), float(origin[1]))
        self._resolution = float(resolution)
        self._logodds = logodds_grid

    @property
    def origin(self) -> Tuple[float, float]:
        return self._origin

    @property
    def resolution(self) -> float:
        return self._resolution

    @property
    def dims(self) -> Tuple[int, int]:
        """(cols, rows)"""
        rows, cols = self._logodds.shape
        return cols, rows

    @property
    def extent(self) -> Tuple[float, float]:
        cols, rows = self.dims
        return cols * self._resolution, rows * self._resolution

    @property
    def size(self) -> int:
        return self._logodds.size

    @property
    def logodds(self) -> np.ndarray:
        return self._logodds

    @property
    def probabilities(self) -> np.ndarray:
        return probability(self._logodds)

    def copy(self) -> 'GridMap':
        return GridMap(self._origin, self._resolution, self._logodds.copy())

    def same_geometry(self, other) -> bool:
        return (
            self._origin == other.origin
            and self._resolution == other.resolution
            and self.dims == tuple(other.dims)
        )

    def check_same_geometry(self, other):
        if not self.same_geometry(other):
            raise GeometryMismatchError(
                f"Grid geometries differ: origin {self._origin} vs {other.origin}, resolution "
                f"{self._resolution} vs {other.resolution}, dims {self.dims} vs {tuple(other.dims)}"
            )

    def check_index(self, cell: CellIndex):
        cols, rows = self.dims
        col, row = cell
        if not (0 <= col < cols and 0 <= row < rows):
            raise GridIndexError(f"Cell {tuple(cell)} is outside a grid of {cols} columns and {rows} rows")

    def cell_center(self, cell: CellIndex) -> Tuple[float, float]:
        self.check_index(cell)
        return (
            self._origin[0] + (cell[0] + 0.5) * self._resolution,
            self._origin[1] + (cell[1] + 0.5) * self._resolution,
        )

    def cell_ranges(self, x_min: float, x_max: float, y_min: float, y_max: float) -> Tuple[slice, slice]:
        """
        Rows and columns of the cells whose centres lie inside the closed rectangle [x_min, x_max] x [y_min, y_max].
        :return: (row_slice, col_slice); either slice may be empty
        """
        cols, rows = self.dims
        res = self._resolution
        eps = _DIVISIBILITY_TOLERANCE

        col_lo = max(int(math.ceil((x_min - self._origin[0]) / res - 0.5 - eps)), 0)
        col_hi = min(int(math.floor((x_max - self._origin[0]) / res - 0.5 + eps)), cols - 1)
        row_lo = max(int(math.ceil((y_min - self._origin[1]) / res - 0.5 - eps)), 0)
        row_hi = min(int(math.floor((y_max - self._origin[1]) / res - 0.5 + eps)), rows - 1)

        return slice(row_lo, max(row_hi + 1, row_lo)), slice(col_lo, max(col_hi + 1, col_lo))

    def fuse(self, cell: CellIndex, p_obs: float) -> 'GridMap':
        """
        Log-odds update of a single cell with an observation of probability p_obs
        :return: A new map; this one is left untouched
        """
        self.check_index(cell)
        _check_observation(p_obs)
        fused = self.copy()
        fused.fuse_inplace(np.array([cell[1]]), np.array([cell[0]]), np.array([p_obs]))
        return fused

    def fuse_inplace(self, rows: np.ndarray, cols: np.ndarray, p_obs: np.ndarray):
        """
        Fuse a batch of observations into this map. Cells may repeat within a batch; each occurrence is
        added separately.
        """
        l_obs = logodds(p_obs)
        np.add.at(self._logodds, (np.asarray(rows, dtype=int), np.asarray(cols, dtype=int)), l_obs)
        np.clip(self._logodds, -LOGODDS_CLAMP, LOGODDS_CLAMP, out=self._logodds)

    def fuse_region(self, row_slice: slice, col_slice: slice, l_obs):
        """Add log-odds l_obs (scalar or array shaped like the region) to a rectangular block of cells"""
        region = self._logodds[row_slice, col_slice]
        region += l_obs
        np.clip(region, -LOGODDS_CLAMP, LOGODDS_CLAMP, out=region)

    def fuse_observations(self, observations: Iterable[Tuple[CellIndex, float]]):
        """Fuse a list of (CellIndex, p_obs) pairs, as returned by SensorModel.simulate_measurement(), in place"""
        observations = list(observations)
        if not observations:
            return
        cols = np.array([cell[0] for cell, _ in observations], dtype=int)
        rows = np.array([cell[1] for cell, _ in observations], dtype=int)
        p_obs = np.array([p for _, p in observations], dtype=float)
        self.fuse_inplace(rows, cols, p_obs)

    def entropy(self) -> float:
        """Shannon entropy of the map in nats"""
        return float(binary_entropy(self._logodds).sum())

    def unclassified_mask(self, th: ClassThresholds) -> np.ndarray:
        p = self.probabilities
        return (p > th.delta_nw) & (p < th.delta_w)

    def unclassified_count(self, th: ClassThresholds) -> int:
        return int(self.unclassified_mask(th).sum())

    def unclassified_cells(self, th: ClassThresholds) -> Set[CellIndex]:
        rows, cols = np.nonzero(self.unclassified_mask(th))
        return {CellIndex(int(c), int(r)) for r, c in zip(rows, cols)}

    def classification_rate(self, th: ClassThresholds) -> float:
        return 1.0 - self.unclassified_count(th) / self.size

    def fingerprint(self) -> str:
        """Hash of the map's geometry and contents; used to confirm that planning leaves a map untouched"""
        digest = hashlib.sha256()
        digest.update(np.array(self._origin + (self._resolution,)).tobytes())
        digest.update(self._logodds.tobytes())
        return digest.hexdigest()

    def to_text(self, path: str):
        """Write the probabilities as plain text, one grid row per line, 6 decimal places"""
        np.savetxt(path, self.probabilities, fmt='%.6f')


def new_map(extent: Tuple[float, float], resolution: float, prior: float = 0.5,
            origin: Tuple[float, float] = (0.0, 0.0)) -> GridMap:
    """
    Create a map covering extent (width, height) in metres with every cell set to the prior probability
    :param extent: (width, height) in metres; each must be a multiple of resolution
    :param resolution: Cell edge length in metres
    :param prior: Initial occupancy probability of every cell, in (0, 1)
    :param origin: World coordinate of the map's lower-left corner
    :return: The new map
    """
    if resolution <= 0:
        raise ValueError(f"resolution must be positive, got {resolution}")
    if not 0 < prior < 1:
        raise ValueError(f"prior must be in the range (0, 1), got {prior}")

    dims = []
    for length in extent:
        if length <= 0:
            raise ValueError(f"Map extent must be positive, got {extent}")
        count = round(length / resolution)
        if count < 1 or abs(count * resolution - length) > _DIVISIBILITY_TOLERANCE:
            raise ValueError(f"Map extent {length} m is not a multiple of the resolution {resolution} m")
        dims.append(count)

    cols, rows = dims
    return GridMap(origin, resolution, np.full((rows, cols), float(logodds(prior))))


def _check_observation(p_obs: float):
    if not 0 < p_obs < 1:
        raise ValueError(f"Observation probabilities must be in the range (0, 1), got {p_obs}")
