import numpy as np
from typing import Tuple, Union

from ._logging import _logger
from .exceptions import GeometryMismatchError
from .grid_map import GridMap, new_map

SeedLike = Union[int, Tuple[int, ...], np.random.SeedSequence, np.random.Generator]


class GroundTruthGrid:
    """
    The true weed layout of a field, on the same cells as the GridMap built over it.

    Attributes:
        _template - GridMap - An uninformative map supplying the geometry
        _weeds - ndarray of bool, shape (rows, cols) - True where a cell holds a weed
    """

    def __init__(self, template: GridMap, weeds: np.ndarray):
        weeds = np.asarray(weeds, dtype=bool)
        if weeds.shape != template.logodds.shape:
            raise GeometryMismatchError(
                f"Weed layout of shape {weeds.shape} does not match a grid of shape {template.logodds.shape}"
            )
        self._template = template
        self._weeds = weeds

    @property
    def weeds(self) -> np.ndarray:
        return self._weeds

    @property
    def weed_count(self) -> int:
        return int(self._weeds.sum())

    @property
    def origin(self):
        return self._template.origin

    @property
    def resolution(self) -> float:
        return self._template.resolution

    @property
    def dims(self):
        return self._template.dims

    @property
    def extent(self):
        return self._template.extent

    def cell_ranges(self, x_min: float, x_max: float, y_min: float, y_max: float):
        return self._template.cell_ranges(x_min, x_max, y_min, y_max)

    def new_belief(self, prior: float = 0.5) -> GridMap:
        """An uninformed map over the same cells"""
        return new_map(self.extent, self.resolution, prior, self.origin)


def generate_environment(
        extent: Tuple[float, float],
        resolution: float,
        n_weeds_mean: float,
        seed: SeedLike = None
) -> GroundTruthGrid:
    """
    Generate a field with randomly scattered weeds. The number of weeds is drawn from a Poisson distribution and
    that many distinct cells are chosen uniformly at random.

    :param extent: (width, height) of the field in metres
    :param resolution: Cell edge length in metres
    :param n_weeds_mean: Mean of the Poisson distribution of the weed count
    :param seed: Anything numpy.random.default_rng() accepts; the same seed always gives the same field
    :return: The ground truth
    """
    if not n_weeds_mean > 0:
        raise ValueError(f"n_weeds_mean must be positive, got {n_weeds_mean}")

    template = new_map(extent, resolution, 0.5)
    rng = np.random.default_rng(seed)
    n_weeds = int(rng.poisson(n_weeds_mean))
    if n_weeds > template.size:
        raise ValueError(f"Drew {n_weeds} weeds, more than the {template.size} cells of the field")

    weeds = np.zeros(template.size, dtype=bool)
    weeds[rng.choice(template.size, size=n_weeds, replace=False)] = True
    _logger.debug(f"Generated a {template.dims[0]}x{template.dims[1]} field with {n_weeds} weeds")
    return GroundTruthGrid(template, weeds.reshape(template.logodds.shape))
