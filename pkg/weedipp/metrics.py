import math
import numpy as np
import pandas as pd
import xarray as xr
from typing import Dict, List, NamedTuple, Optional, Sequence

from .grid_map import ClassThresholds, GridMap

METRIC_COLUMNS = ['entropy_nats', 'entropy_bits', 'class_rate', 'f2']
LOG_COLUMNS = ['t_s', 'measurements'] + METRIC_COLUMNS
AGGREGATE_COLUMNS = ['t_s', 'metric', 'mean', 'p05', 'p95', 'variant']
CSV_FLOAT_FORMAT = '%.6f'


class MetricsRecord(NamedTuple):
    t: float
    entropy: float
    class_rate: float
    f2: float
    measurements: int = 0


class MetricsLog:
    """
    Time series of map quality over one mission: entropy (nats), classification rate and F2-score, recorded for the
    prior and after every fusion. Records are ordered by (t, measurements), where measurements counts the fusions
    so far; several records may share a time, such as the prior and the start scan at t = 0.
    """

    def __init__(self, records: Sequence[MetricsRecord] = ()):
        self._records: List[MetricsRecord] = []
        for record in records:
            self.append(*record)

    def __len__(self):
        return len(self._records)

    @property
    def records(self) -> List[MetricsRecord]:
        return list(self._records)

    def append(self, t: float, entropy: float, class_rate: float, f2: float, measurements: Optional[int] = None):
        """
        :param measurements: Fusions so far; one more than the last record's by default, 0 for the first record
        """
        values = (t, entropy, class_rate, f2)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"Metrics must be finite, got {values}")
        if not (0.0 <= class_rate <= 1.0 and 0.0 <= f2 <= 1.0):
            raise ValueError(f"Rates must lie in [0, 1], got class_rate={class_rate} and f2={f2}")
        if measurements is None:
            measurements = self._records[-1].measurements + 1 if self._records else 0
        if self._records:
            last = self._records[-1]
            if t < last.t:
                raise ValueError(f"Metrics must be recorded in time order, got t={t} after t={last.t}")
            if measurements <= last.measurements:
                raise ValueError(f"Measurement counts must increase, got {measurements} after {last.measurements}")
        self._records.append(MetricsRecord(float(t), float(entropy), float(class_rate), float(f2), int(measurements)))

    def record(self, t: float, grid_map: GridMap, truth, th: ClassThresholds):
        """Append the metrics of grid_map scored against the ground truth"""
        self.append(t, grid_map.entropy(), grid_map.classification_rate(th), f2_score(grid_map, truth, th))

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self._records, columns=['t_s', 'entropy_nats', 'class_rate', 'f2', 'measurements'])
        df['measurements'] = df['measurements'].astype(int)
        df.insert(2, 'entropy_bits', df['entropy_nats'] / math.log(2))
        return df[LOG_COLUMNS]

    def to_csv(self, path: str):
        self.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> 'MetricsLog':
        return cls([
            MetricsRecord(row.t_s, row.entropy_nats, row.class_rate, row.f2, int(row.measurements))
            for row in df.itertuples(index=False)
        ])

    def value_at(self, t: float, metric: str = 'entropy_nats') -> float:
        """Last value recorded at or before t (the first value before the first record)"""
        df = self.to_frame()
        i = int(np.searchsorted(df['t_s'].to_numpy(), t, side='right')) - 1
        return float(df[metric].iloc[max(i, 0)])


def f2_score(grid_map: GridMap, truth, th: ClassThresholds) -> float:
    """
    F2-score of the map's classification with weeds as the positive class. Cells with p >= delta_w are predicted
    weeds, cells with p <= delta_nw predicted non-weeds, and unclassified cells are left out. Returns 0 where
    precision or recall is undefined.
    """
    grid_map.check_same_geometry(truth)
    p = grid_map.probabilities
    weeds = truth.weeds
    predicted_weed = p >= th.delta_w
    predicted_non_weed = p <= th.delta_nw

    tp = int(np.count_nonzero(predicted_weed & weeds))
    fp = int(np.count_nonzero(predicted_weed & ~weeds))
    fn = int(np.count_nonzero(predicted_non_weed & weeds))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 5.0 * precision * recall / (4.0 * precision + recall)


def entropy_cdf(logs: Sequence[MetricsLog], bin_width: float) -> pd.DataFrame:
    """
    Cumulative share of the entropy reduction achieved by the end of each time bin, averaged over missions.

    Each mission's entropy is read at the right edge of every bin (last observation carried forward) and its
    reduction from the mission's first record, the prior, is normalised by the mission's largest reduction. A
    running maximum keeps each mission's curve from decreasing; a mission without any reduction counts as complete
    from the first bin. The curves are then averaged across missions.

    :return: DataFrame with columns t_s (right bin edges) and cdf
    """
    if not logs:
        raise ValueError("entropy_cdf needs at least one metrics log")
    if bin_width <= 0:
        raise ValueError(f"bin_width must be positive, got {bin_width}")

    end = max(log.records[-1].t for log in logs)
    n_bins = max(int(math.ceil(end / bin_width - 1e-9)), 1)
    edges = bin_width * np.arange(1, n_bins + 1)

    curves = []
    for log in logs:
        df = log.to_frame()
        times = df['t_s'].to_numpy()
        entropy = df['entropy_nats'].to_numpy()
        idx = np.clip(np.searchsorted(times, edges, side='right') - 1, 0, None)
        reduction = np.maximum.accumulate(entropy[0] - entropy[idx])
        total = reduction[-1]
        curves.append(reduction / total if total > 0 else np.ones_like(reduction))

    cdf = np.mean(curves, axis=0)
    return pd.DataFrame({'t_s': edges, 'cdf': np.clip(cdf, 0.0, 1.0)})


def resample_log(log: MetricsLog, grid: np.ndarray) -> pd.DataFrame:
    """Metrics on the given time grid by last observation carried forward; of records sharing a time the last counts"""
    df = log.to_frame().set_index('t_s')
    df = df[~df.index.duplicated(keep='last')]
    return df.reindex(df.index.union(grid)).ffill().bfill().loc[grid]


def aggregate_logs(logs_by_variant: Dict[str, Sequence[MetricsLog]], step: float = 1.0) -> pd.DataFrame:
    """
    Mean and 5th/95th percentiles of every metric across missions, per variant, on a regular time grid.
    :param logs_by_variant: Mission logs of each variant
    :param step: Spacing of the time grid in seconds
    :return: Long-format DataFrame with columns t_s, metric, mean, p05, p95, variant
    """
    frames = []
    for variant, logs in logs_by_variant.items():
        if not logs:
            continue
        end = max(log.records[-1].t for log in logs)
        grid = step * np.arange(int(math.floor(end / step + 1e-9)) + 1)
        data = np.stack([resample_log(log, grid)[METRIC_COLUMNS].to_numpy() for log in logs])
        da = xr.DataArray(
            data,
            dims=('trial', 't_s', 'metric'),
            coords={'trial': np.arange(len(logs)), 't_s': grid, 'metric': METRIC_COLUMNS},
        )
        quantiles = da.quantile([0.05, 0.95], dim='trial')
        summary = xr.Dataset({
            'mean': da.mean('trial'),
            'p05': quantiles.sel(quantile=0.05, drop=True),
            'p95': quantiles.sel(quantile=0.95, drop=True),
        })
        df = summary.to_dataframe().reset_index()
        df['metric'] = pd.Categorical(df['metric'], categories=METRIC_COLUMNS, ordered=True)
        df = df.sort_values(['metric', 't_s']).reset_index(drop=True)
        df['metric'] = df['metric'].astype(str)
        df['variant'] = variant
        frames.append(df[AGGREGATE_COLUMNS])

    if not frames:
        return pd.DataFrame(columns=AGGREGATE_COLUMNS)
    return pd.concat(frames, ignore_index=True)
