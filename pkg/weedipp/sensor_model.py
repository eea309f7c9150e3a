import math
import numpy as np
from typing import List, NamedTuple, Sequence, Set, Tuple

from .grid_map import CellIndex, GridMap, LOGODDS_CLAMP, logodds

CURVE_SHAPES = ('linear', 'sigmoid')


class Footprint(NamedTuple):
    """Axis-aligned square seen by the down-looking camera, in world coordinates (metres)"""
    center_x: float
    center_y: float
    half_width: float

    @property
    def side(self) -> float:
        return 2.0 * self.half_width

    @property
    def area(self) -> float:
        return self.side ** 2

    def bounds(self) -> Tuple[float, float, float, float]:
        """(x_min, x_max, y_min, y_max)"""
        return (
            self.center_x - self.half_width, self.center_x + self.half_width,
            self.center_y - self.half_width, self.center_y + self.half_width,
        )


class NoiseConfig(NamedTuple):
    """
    Classifier noise settings for simulated measurements against the ground truth. When enabled, each covered
    cell's label is sampled from the confusion curves. False positives are admitted for at most fp_cell_cap
    distinct true non-weed cells during one mission; once that many cells have been admitted, every true
    non-weed cell reports "non-weed", admitted cells included.
    """
    enabled: bool = True
    fp_cell_cap: int = 800
    rng_seed: int = 0

    def validate(self) -> 'NoiseConfig':
        if self.fp_cell_cap < 0:
            raise ValueError(f"fp_cell_cap must be non-negative, got {self.fp_cell_cap}")
        return self


class NoiseState:
    """
    Mission-wide record of the true non-weed cells that have produced a false positive so far. Until the cap is
    reached a recorded cell may produce further false positives; afterwards no cell does.
    """

    def __init__(self):
        self.false_positive_cells: Set[Tuple[int, int]] = set()

    @property
    def false_positive_count(self) -> int:
        return len(self.false_positive_cells)

    def cap_reached(self, cap: int) -> bool:
        return self.false_positive_count >= cap


class SensorModel:
    """
    Down-looking camera with a weed classifier whose confidence degrades with altitude.

    Attributes:
        _fov_deg - float - Full opening angle of the camera, in degrees
        _h_max - float - Altitude (m) at and above which the classifier provides no information
        _p_tp0 - float - P(label weed | true weed) at altitude 0
        _p_fp0 - float - P(label weed | true non-weed) at altitude 0
        _min_meas_interval - float - Minimum time (s) between consecutive measurements
        _curve - str - Shape of the confusion curves between altitude 0 and h_max, 'linear' or 'sigmoid'
        _sigmoid_steepness - float - Steepness of the sigmoid curve, in units of 1/h_max
    """

    def __init__(
            self,
            fov_deg: float = 60.0,
            h_max: float = 45.0,
            p_tp0: float = 0.95,
            p_fp0: float = 0.05,
            min_meas_interval: float = 5.0,
            *,
            curve: str = 'linear',
            sigmoid_steepness: float = 10.0
    ):
        if not 0 < fov_deg < 180:
            raise ValueError(f"fov_deg must be in the range (0, 180), got {fov_deg}")
        if h_max <= 0:
            raise ValueError(f"h_max must be positive, got {h_max}")
        if not 0.5 < p_tp0 < 1:
            raise ValueError(f"p_tp0 must be in the range (0.5, 1), got {p_tp0}")
        if not 0 < p_fp0 < 0.5:
            raise ValueError(f"p_fp0 must be in the range (0, 0.5), got {p_fp0}")
        if min_meas_interval < 0:
            raise ValueError(f"min_meas_interval must be non-negative, got {min_meas_interval}")
        if curve not in CURVE_SHAPES:
            raise ValueError(f"curve must be one of {CURVE_SHAPES}, got '{curve}'")
        if sigmoid_steepness <= 0:
            raise ValueError(f"sigmoid_steepness must be positive, got {sigmoid_steepness}")

        self._fov_deg = float(fov_deg)
        self._h_max = float(h_max)
        self._p_tp0 = float(p_tp0)
        self._p_fp0 = float(p_fp0)
        self._min_meas_interval = float(min_meas_interval)
        self._curve = curve
        self._sigmoid_steepness = float(sigmoid_steepness)
        self._tan_half_fov = math.tan(math.radians(self._fov_deg) / 2.0)

    @property
    def fov_deg(self) -> float:
        return self._fov_deg

    @property
    def h_max(self) -> float:
        return self._h_max

    @property
    def p_tp0(self) -> float:
        return self._p_tp0

    @property
    def p_fp0(self) -> float:
        return self._p_fp0

    @property
    def min_meas_interval(self) -> float:
        return self._min_meas_interval

    @property
    def curve(self) -> str:
        return self._curve

    def half_width_at(self, altitude: float) -> float:
        if altitude < 0:
            raise ValueError(f"Altitude must be non-negative, got {altitude}")
        return altitude * self._tan_half_fov

    def footprint_side_at(self, altitude: float) -> float:
        return 2.0 * self.half_width_at(altitude)

    def altitude_for_side(self, side: float) -> float:
        """Altitude at which the footprint has the given side length"""
        return side / (2.0 * self._tan_half_fov)

    def footprint_at(self, x: Sequence[float]) -> Footprint:
        return Footprint(float(x[0]), float(x[1]), self.half_width_at(float(x[2])))

    def covered_region(self, grid, x: Sequence[float]) -> Tuple[slice, slice]:
        """
        Rows and columns of the cells whose centres lie inside the footprint at x. The grid may be a GridMap or
        anything else sharing its geometry methods (e.g. a ground truth grid).
        """
        return grid.cell_ranges(*self.footprint_at(x).bounds())

    def _informativeness(self, h: float) -> float:
        """Weight in [0, 1] blending the altitude-0 confusion values (1) with uninformative 0.5 (0)"""
        if h < 0:
            raise ValueError(f"Altitude must be non-negative, got {h}")
        if h >= self._h_max:
            return 0.0
        if self._curve == 'linear':
            return 1.0 - h / self._h_max

        k = self._sigmoid_steepness / self._h_max

        def s(alt):
            return 0.5 * (1.0 - math.tanh(0.5 * k * (alt - 0.5 * self._h_max)))

        return min(max((s(h) - s(self._h_max)) / (s(0.0) - s(self._h_max)), 0.0), 1.0)

    def curve_w_given_w(self, h: float) -> float:
        return 0.5 + (self._p_tp0 - 0.5) * self._informativeness(h)

    def curve_w_given_nw(self, h: float) -> float:
        return 0.5 - (0.5 - self._p_fp0) * self._informativeness(h)

    def simulate_measurement(
            self,
            truth,
            x: Sequence[float],
            noise: NoiseConfig,
            rng: np.random.Generator,
            noise_state: NoiseState = None
    ) -> List[Tuple[CellIndex, float]]:
        """
        Simulate a real classifier measurement taken from x against the ground truth.

        :param truth: GroundTruthGrid holding the true weed labels
        :param x: (x, y, z) position of the camera
        :param noise: Noise settings. With noise disabled every cell reports its true label.
        :param rng: Generator used to sample labels, consumed once per covered cell in row-major order
        :param noise_state: Mission-wide false positive record. Required for the cap to span several
            measurements; a fresh record is used if none is given.
        :return: List of (CellIndex, p_obs) for every covered cell, in row-major order. Empty if the footprint
            misses the map.
        """
        h = float(x[2])
        row_slice, col_slice = self.covered_region(truth, x)
        weeds = truth.weeds[row_slice, col_slice]
        if weeds.size == 0:
            return []

        p_w = self.curve_w_given_w(h)
        p_nw = self.curve_w_given_nw(h)
        rows, cols = np.mgrid[row_slice, col_slice]
        rows, cols = rows.ravel(), cols.ravel()
        weeds = weeds.ravel()

        if p_w == 0.5 or not noise.enabled:
            # Uninformative altitudes report 0.5 whatever the label, so no draws are needed
            labels = weeds.copy()
        else:
            if noise_state is None:
                noise_state = NoiseState()
            draws = rng.random(weeds.size)
            labels = np.where(weeds, draws < p_w, draws < p_nw)
            for i in np.nonzero(labels & ~weeds)[0]:
                if noise_state.cap_reached(noise.fp_cell_cap):
                    labels[i] = False
                else:
                    noise_state.false_positive_cells.add((int(cols[i]), int(rows[i])))

        return [
            (CellIndex(int(c), int(r)), p_w if label else p_nw)
            for r, c, label in zip(rows, cols, labels)
        ]

    def ml_logodds_update(self, region: np.ndarray, h: float) -> np.ndarray:
        """
        Fuse a maximum-likelihood measurement at altitude h into a block of log-odds values: every cell with
        p >= 0.5 reports "weed", the rest "non-weed"
        :return: The updated block; region itself is not modified
        """
        l_w = float(logodds(self.curve_w_given_w(h)))
        l_nw = float(logodds(self.curve_w_given_nw(h)))
        return np.clip(region + np.where(region >= 0.0, l_w, l_nw), -LOGODDS_CLAMP, LOGODDS_CLAMP)

    def apply_ml_measurement(self, grid_map: GridMap, x: Sequence[float]) -> Tuple[slice, slice]:
        """
        In-place variant of simulate_ml_measurement()
        :return: (row_slice, col_slice) of the updated cells
        """
        row_slice, col_slice = self.covered_region(grid_map, x)
        region = grid_map.logodds[row_slice, col_slice]
        if region.size:
            region[...] = self.ml_logodds_update(region, float(x[2]))
        return row_slice, col_slice

    def simulate_ml_measurement(self, grid_map: GridMap, x: Sequence[float]) -> GridMap:
        """
        Predict the measurement taken from x by assuming every covered cell reports its currently most likely
        label, fused at the confidence of the altitude of x
        :return: The updated copy of grid_map
        """
        predicted = grid_map.copy()
        self.apply_ml_measurement(predicted, x)
        return predicted
