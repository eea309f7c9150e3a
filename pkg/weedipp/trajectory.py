"""
Piecewise polynomial trajectories through ordered viewpoints, parameterised by the derivatives at the segment end
points. Free derivatives are chosen by an unconstrained quadratic program minimising the integral of squared snap,
segment durations come from a trapezoidal velocity profile, and the result is time-scaled until it respects the
reference velocity and acceleration.

Each segment stores 12 coefficients per axis in the normalised time s = t / T of that segment, so that
d^j p / dt^j = T^-j * sum_i c_i * i! / (i - j)! * s^(i - j).
"""
import math
import numpy as np
import pandas as pd
from typing import List, NamedTuple, Optional, Sequence, Tuple

from .exceptions import DegenerateSegmentError, TrajectoryRangeError

N_COEFFS = 12
# Derivative orders 0..5 are fixed or optimised at each end point of a segment
N_ENDPOINT_DERIVS = N_COEFFS // 2
SNAP_ORDER = 4
FEASIBILITY_SLACK = 1.05
SCALING_SAMPLES = 2001

_MIN_SEGMENT_LENGTH = 1e-9
_MAX_SCALING_ROUNDS = 20


def _falling_factorials(n: int) -> np.ndarray:
    """table[j, i] = i! / (i - j)!, zero where i < j"""
    table = np.zeros((n, n))
    for j in range(n):
        for i in range(j, n):
            table[j, i] = math.factorial(i) / math.factorial(i - j)
    return table


_FALLING = _falling_factorials(N_COEFFS)


def _endpoint_matrix() -> np.ndarray:
    """Maps s-basis coefficients to the s-derivatives of orders 0..5 at s = 0 followed by s = 1"""
    a = np.zeros((N_COEFFS, N_COEFFS))
    for j in range(N_ENDPOINT_DERIVS):
        a[j, j] = _FALLING[j, j]
        a[N_ENDPOINT_DERIVS + j, :] = _FALLING[j, :]
    return a


def _snap_cost_matrix() -> np.ndarray:
    """Integral over s in [0, 1] of the squared 4th s-derivative, as a quadratic form in the coefficients"""
    q = np.zeros((N_COEFFS, N_COEFFS))
    for i in range(SNAP_ORDER, N_COEFFS):
        for j in range(SNAP_ORDER, N_COEFFS):
            q[i, j] = _FALLING[SNAP_ORDER, i] * _FALLING[SNAP_ORDER, j] / (i + j - 2 * SNAP_ORDER + 1)
    return q


_A_INV = np.linalg.inv(_endpoint_matrix())
_Q = _snap_cost_matrix()
# Snap cost in terms of the s-domain end point derivatives
_H_UNIT = _A_INV.T @ _Q @ _A_INV


def _derivative_scales(duration: float) -> np.ndarray:
    powers = duration ** np.arange(N_ENDPOINT_DERIVS)
    return np.concatenate([powers, powers])


class DynamicLimits(NamedTuple):
    """Reference velocity (m/s) and acceleration (m/s^2) used to time trajectories"""
    v_ref: float = 3.0
    a_ref: float = 1.5

    def validate(self) -> 'DynamicLimits':
        if self.v_ref <= 0 or self.a_ref <= 0:
            raise ValueError(f"v_ref and a_ref must be positive, got {self.v_ref} and {self.a_ref}")
        return self


class Boundary(NamedTuple):
    """
    Derivatives of orders 1-4 imposed at the start and end of a trajectory, each an array of shape (4, 3).
    None means "at rest".
    """
    start: Optional[np.ndarray] = None
    end: Optional[np.ndarray] = None

    @property
    def at_rest(self) -> bool:
        return all(d is None or not np.any(d) for d in (self.start, self.end))


class TrajectoryState(NamedTuple):
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray


class PolySegment:
    """
    One polynomial piece of a trajectory.

    Attributes:
        _coefficients - ndarray of shape (3, 12) - Per-axis coefficients in the segment's normalised time
        _duration - float - Duration of the segment in seconds
    """

    def __init__(self, coefficients: np.ndarray, duration: float):
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (3, N_COEFFS):
            raise ValueError(f"Expected coefficients of shape (3, {N_COEFFS}), got {coefficients.shape}")
        if not np.all(np.isfinite(coefficients)):
            raise ValueError("Polynomial coefficients must be finite")
        if not duration > 0:
            raise ValueError(f"Segment duration must be positive, got {duration}")
        self._coefficients = coefficients
        self._duration = float(duration)

    @property
    def coefficients(self) -> np.ndarray:
        return self._coefficients

    @property
    def duration(self) -> float:
        return self._duration

    def derivative(self, tau: float, order: int = 0) -> np.ndarray:
        """Derivative of the given order (w.r.t. time) at time tau after the start of the segment"""
        s = tau / self._duration
        basis = np.zeros(N_COEFFS)
        basis[order:] = _FALLING[order, order:] * s ** np.arange(N_COEFFS - order)
        return self._coefficients @ basis / self._duration ** order

    def snap_cost(self) -> float:
        """Integral of the squared snap over the segment, summed over the axes"""
        c = self._coefficients
        return float(np.einsum('ai,ij,aj->', c, _Q, c)) / self._duration ** (2 * SNAP_ORDER - 1)

    def scaled(self, factor: float) -> 'PolySegment':
        """The same path flown factor times slower"""
        return PolySegment(self._coefficients, self._duration * factor)


def segment_from_endpoint_derivatives(d0: np.ndarray, d1: np.ndarray, duration: float) -> PolySegment:
    """
    Build a segment from its end point derivatives
    :param d0: Array of shape (6, 3): derivatives of orders 0-5 at the start, one column per axis
    :param d1: Same at the end
    :param duration: Segment duration in seconds
    """
    b = np.vstack([d0, d1]) * _derivative_scales(duration)[:, None]
    return PolySegment((_A_INV @ b).T, duration)


class Trajectory:
    """
    A sequence of polynomial segments joined at the waypoints they were planned through.

    Attributes:
        _segments - list of PolySegment
        _waypoints - ndarray of shape (n, 3) - The waypoints; segment k runs from waypoint k to waypoint k + 1
        _knot_times - ndarray of shape (n,) - Time at which each waypoint is passed
    """

    def __init__(self, segments: List[PolySegment], waypoints: np.ndarray):
        if not segments:
            raise ValueError("A trajectory needs at least one segment")
        waypoints = np.asarray(waypoints, dtype=float)
        if waypoints.shape != (len(segments) + 1, 3):
            raise ValueError(f"Expected {len(segments) + 1} waypoints, got array of shape {waypoints.shape}")
        self._segments = list(segments)
        self._waypoints = waypoints
        self._knot_times = np.concatenate([[0.0], np.cumsum([s.duration for s in segments])])
        self._coefficients = np.stack([s.coefficients for s in segments])
        self._durations = np.array([s.duration for s in segments])

    @property
    def segments(self) -> List[PolySegment]:
        return list(self._segments)

    @property
    def waypoints(self) -> np.ndarray:
        return self._waypoints

    @property
    def knot_times(self) -> np.ndarray:
        return self._knot_times

    @property
    def duration(self) -> float:
        return float(self._knot_times[-1])

    def derivative(self, t: float, order: int = 0) -> np.ndarray:
        k, tau = self._locate(t)
        return self._segments[k].derivative(tau, order)

    def derivatives(self, times: np.ndarray, order: int = 0) -> np.ndarray:
        """Vectorised derivative evaluation; returns an array of shape (len(times), 3)"""
        times = np.asarray(times, dtype=float)
        k = np.clip(np.searchsorted(self._knot_times, times, side='right') - 1, 0, len(self._segments) - 1)
        durations = self._durations[k]
        s = (times - self._knot_times[k]) / durations
        exponents = np.clip(np.arange(N_COEFFS) - order, 0, None)
        basis = _FALLING[order][None, :] * s[:, None] ** exponents[None, :]
        values = np.einsum('ni,nai->na', basis, self._coefficients[k])
        return values / durations[:, None] ** order

    def snap_cost(self) -> float:
        return sum(s.snap_cost() for s in self._segments)

    def scaled(self, factor: float) -> 'Trajectory':
        return Trajectory([s.scaled(factor) for s in self._segments], self._waypoints)

    def peak_dynamics(self, n_samples: int = SCALING_SAMPLES) -> Tuple[float, float]:
        """Largest speed and acceleration norm over n_samples evenly spaced times covering the whole duration"""
        times = np.linspace(0.0, self.duration, n_samples)
        v = np.linalg.norm(self.derivatives(times, 1), axis=1)
        a = np.linalg.norm(self.derivatives(times, 2), axis=1)
        return float(v.max()), float(a.max())

    def to_csv(self, path: str, dt: float = 0.1):
        """Write (t, x, y, z, vx, vy, vz) sampled every dt seconds, ending exactly at the final time"""
        times = np.arange(0.0, self.duration, dt)
        times = np.append(times, self.duration)
        pos = self.derivatives(times, 0)
        vel = self.derivatives(times, 1)
        df = pd.DataFrame({
            't': times,
            'x': pos[:, 0], 'y': pos[:, 1], 'z': pos[:, 2],
            'vx': vel[:, 0], 'vy': vel[:, 1], 'vz': vel[:, 2],
        })
        df.to_csv(path, index=False, float_format='%.6f')

    def _locate(self, t: float) -> Tuple[int, float]:
        duration = self.duration
        if t < -1e-9 or t > duration + 1e-9:
            raise TrajectoryRangeError(f"Time {t} is outside the trajectory's duration [0, {duration}]")
        t = min(max(t, 0.0), duration)
        k = int(np.searchsorted(self._knot_times, t, side='right')) - 1
        k = min(max(k, 0), len(self._segments) - 1)
        return k, t - self._knot_times[k]


def segment_duration(length: float, limits: DynamicLimits) -> float:
    """
    Time to fly a straight segment of the given length from rest to rest with a trapezoidal velocity profile at
    the reference velocity and acceleration (a triangular profile when the cruise speed is never reached)
    """
    v, a = limits.v_ref, limits.a_ref
    if length >= v * v / a:
        return length / v + v / a
    return 2.0 * math.sqrt(length / a)


def _check_viewpoints(viewpoints) -> np.ndarray:
    points = np.asarray(viewpoints, dtype=float)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError(f"Viewpoints must be an array of 3D positions, got shape {points.shape}")
    if len(points) < 2:
        raise DegenerateSegmentError(f"A trajectory needs at least two viewpoints, got {len(points)}")
    lengths = np.linalg.norm(np.diff(points, axis=0), axis=1)
    degenerate = np.nonzero(lengths < _MIN_SEGMENT_LENGTH)[0]
    if len(degenerate):
        k = int(degenerate[0])
        raise DegenerateSegmentError(f"Viewpoints {k} and {k + 1} coincide at {points[k].tolist()}")
    return points


def _fixed_mask(n_points: int) -> np.ndarray:
    fixed = np.zeros((n_points, N_ENDPOINT_DERIVS), dtype=bool)
    fixed[:, 0] = True
    fixed[0, 1:SNAP_ORDER + 1] = True
    fixed[-1, 1:SNAP_ORDER + 1] = True
    return fixed.ravel()


def _solve_segments(points: np.ndarray, durations: np.ndarray, boundary: Boundary) -> List[PolySegment]:
    """
    Minimum-snap solve for the free end point derivatives, in time made dimensionless by the mean segment
    duration so the system stays well conditioned
    """
    n_points = len(points)
    n_vars = n_points * N_ENDPOINT_DERIVS
    t0 = float(np.mean(durations))
    taus = durations / t0

    h = np.zeros((n_vars, n_vars))
    for k, tau in enumerate(taus):
        scales = _derivative_scales(tau)
        block = slice(k * N_ENDPOINT_DERIVS, k * N_ENDPOINT_DERIVS + N_COEFFS)
        h[block, block] += np.outer(scales, scales) * _H_UNIT / tau ** (2 * SNAP_ORDER - 1)

    # Dimensionless derivatives: d~_j = T0^j d_j
    d = np.zeros((n_points, N_ENDPOINT_DERIVS, 3))
    d[:, 0, :] = points
    order_scales = t0 ** np.arange(1, SNAP_ORDER + 1)[:, None]
    if boundary.start is not None:
        d[0, 1:SNAP_ORDER + 1, :] = np.asarray(boundary.start, dtype=float) * order_scales
    if boundary.end is not None:
        d[-1, 1:SNAP_ORDER + 1, :] = np.asarray(boundary.end, dtype=float) * order_scales
    d = d.reshape(n_vars, 3)

    fixed = _fixed_mask(n_points)
    free = ~fixed
    d[free] = -np.linalg.solve(h[np.ix_(free, free)], h[np.ix_(free, fixed)] @ d[fixed])

    segments = []
    for k, tau in enumerate(taus):
        b = d[k * N_ENDPOINT_DERIVS:k * N_ENDPOINT_DERIVS + N_COEFFS] * _derivative_scales(tau)[:, None]
        segments.append(PolySegment((_A_INV @ b).T, durations[k]))
    return segments


def plan_through(
        viewpoints: Sequence[Sequence[float]],
        limits: DynamicLimits = DynamicLimits(),
        boundary: Boundary = Boundary()
) -> Trajectory:
    """
    Plan a minimum-snap trajectory through the viewpoints, in order.

    :param viewpoints: At least two 3D positions; consecutive positions must differ
    :param limits: Reference velocity and acceleration. Segment durations start from a trapezoidal profile at
        these values and are then scaled up uniformly until no sampled speed or acceleration exceeds them.
    :param boundary: Derivatives of orders 1-4 at the start and end; at rest by default
    :return: The trajectory, with one segment per pair of consecutive viewpoints
    """
    points = _check_viewpoints(viewpoints)
    lengths = np.linalg.norm(np.diff(points, axis=0), axis=1)
    durations = np.array([segment_duration(length, limits) for length in lengths])

    trajectory = Trajectory(_solve_segments(points, durations, boundary), points)
    for _ in range(_MAX_SCALING_ROUNDS):
        v_peak, a_peak = trajectory.peak_dynamics()
        factor = max(1.0, v_peak / limits.v_ref, math.sqrt(a_peak / limits.a_ref))
        if factor <= 1.0:
            break
        if boundary.at_rest:
            # Stretching time leaves the normalised coefficients of a rest-to-rest solution unchanged
            return trajectory.scaled(factor)
        durations = durations * factor
        trajectory = Trajectory(_solve_segments(points, durations, boundary), points)
    return trajectory


def travel_time(viewpoints: Sequence[Sequence[float]], limits: DynamicLimits = DynamicLimits()) -> float:
    """Duration of the trajectory plan_through() produces for the viewpoints"""
    return plan_through(viewpoints, limits).duration


def sample(traj: Trajectory, t: float) -> TrajectoryState:
    """Position, velocity and acceleration at time t, which must lie in [0, traj.duration]"""
    return TrajectoryState(traj.derivative(t, 0), traj.derivative(t, 1), traj.derivative(t, 2))


def measurement_schedule(
        traj: Trajectory,
        viewpoints: Sequence[Sequence[float]],
        min_interval: float
) -> List[Tuple[int, float]]:
    """
    Match each viewpoint to the waypoint of traj it is flown through and drop viewpoints reached sooner than
    min_interval after the previously kept one. Waypoints are matched in order, so a chain that revisits a
    position is handled.
    :return: List of (viewpoint index, passage time) for the kept viewpoints
    """
    waypoints = traj.waypoints
    times = traj.knot_times
    kept = []
    search_from = 0
    last_time = None
    for i, viewpoint in enumerate(np.asarray(viewpoints, dtype=float).reshape(-1, 3)):
        distances = np.linalg.norm(waypoints[search_from:] - viewpoint, axis=1)
        w = search_from + int(np.argmin(distances))
        search_from = w
        t = float(times[w])
        if last_time is None or t - last_time >= min_interval - 1e-9:
            kept.append((i, t))
            last_time = t
    return kept


def measurement_times(
        traj: Trajectory,
        viewpoints: Sequence[Sequence[float]],
        min_interval: float
) -> List[float]:
    """Passage times of the viewpoints at which a measurement is taken; see measurement_schedule()"""
    return [t for _, t in measurement_schedule(traj, viewpoints, min_interval)]
