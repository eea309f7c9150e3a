class WeedIppError(Exception):
    """
    Base class for the errors raised by this package
    """
    pass


class ConfigError(WeedIppError, ValueError):
    """
    To be raised when an experiment configuration cannot be used: the file is unreadable, a section
    contains a key we do not know about, or a value has the wrong type or is out of range
    """
    pass


class GridIndexError(WeedIppError, IndexError):
    """
    To be raised when a cell index lies outside the occupancy grid
    """
    pass


class GeometryMismatchError(WeedIppError, ValueError):
    """
    To be raised when two grids that must share origin, resolution and dimensions do not
    """
    pass


class DegenerateSegmentError(WeedIppError, ValueError):
    """
    To be raised when a trajectory is requested through consecutive viewpoints that coincide, which would
    produce a segment of zero length
    """
    pass


class TrajectoryRangeError(WeedIppError, ValueError):
    """
    To be raised when a trajectory is sampled outside of [0, duration]
    """
    pass


class InfeasibleBudgetError(WeedIppError, ValueError):
    """
    To be raised when no coverage pattern can cover the map within the time budget
    """
    pass
