import os
import numpy as np
import pandas as pd
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

from ._logging import _logger, attach_log_file
from .coverage_plan import run_coverage_mission
from .exceptions import WeedIppError
from .experiment_config import ENVIRONMENT_STREAM, NOISE_STREAM, PLANNER_STREAM, ExperimentConfig
from .generate_environment import generate_environment
from .metrics import CSV_FLOAT_FORMAT, MetricsLog, aggregate_logs, entropy_cdf
from .planner import CMAES_MODES, OBJECTIVE_MODES
from .rig_tree_plan import run_rig_tree_mission
from .run_mission import MissionResult, ReplanRecord, run_mission


class Variant(NamedTuple):
    """
    A planner setup compared in an experiment. objective_mode and cmaes_mode override the config's planner
    section for IPP variants.
    """
    name: str
    kind: str
    objective_mode: Optional[str] = None
    cmaes_mode: Optional[str] = None


class ExperimentResult(NamedTuple):
    output_dir: str
    trial_files: Dict[str, List[str]]
    aggregate_file: str
    entropy_cdf_file: str
    errors_file: Optional[str]


def run_variants(cfg: ExperimentConfig) -> List[Variant]:
    """The single variant named by the config"""
    return [Variant(cfg.variant, cfg.variant)]


def compare_variants(cfg: ExperimentConfig) -> List[Variant]:
    """IPP with the time-varying objective and global CMA-ES against both baselines"""
    return [
        Variant('ipp', 'ipp', 'time_varying', 'global'),
        Variant('coverage', 'coverage'),
        Variant('rig_tree', 'rig_tree'),
    ]


def sweep_variants(cfg: ExperimentConfig) -> List[Variant]:
    """Every combination of objective and CMA-ES mode"""
    return [
        Variant(f"ipp-{objective}-{cmaes}", 'ipp', objective, cmaes)
        for objective in OBJECTIVE_MODES
        for cmaes in CMAES_MODES
    ]


def run_trial(cfg: ExperimentConfig, variant: Variant, trial: int) -> MissionResult:
    """
    Run one mission of one variant. The field, the weed density and the classifier noise depend only on the
    trial, so all variants of a trial face the same conditions.
    """
    env_rng = np.random.default_rng(cfg.trial_seed_sequence(trial, ENVIRONMENT_STREAM))
    weeds_mean = cfg.environment.draw_weeds_mean(env_rng)
    truth = generate_environment(cfg.environment.extent, cfg.environment.resolution, weeds_mean, env_rng)
    noise_rng = np.random.default_rng(cfg.trial_seed_sequence(trial, NOISE_STREAM))
    rng = np.random.default_rng(cfg.trial_seed_sequence(trial, PLANNER_STREAM))

    if variant.kind == 'ipp' and (variant.objective_mode or variant.cmaes_mode):
        cfg = cfg.with_planner(
            objective_mode=variant.objective_mode or cfg.planner.objective_mode,
            cmaes_mode=variant.cmaes_mode or cfg.planner.cmaes_mode,
        )

    sensor = cfg.sensor.sensor_model()
    planner_cfg = cfg.planner_config()
    noise = cfg.noise.noise_config(cfg.seed + trial)
    prior = cfg.environment.prior

    if variant.kind == 'coverage':
        return run_coverage_mission(
            truth, sensor, planner_cfg, noise=noise, noise_rng=noise_rng,
            forward_overlap=cfg.coverage.forward_overlap, altitude_step=cfg.coverage.altitude_step, prior=prior,
        )
    if variant.kind == 'rig_tree':
        return run_rig_tree_mission(
            truth, sensor, planner_cfg, cfg.rig_tree_config(), rng, noise=noise, noise_rng=noise_rng,
            initial_viewpoint=cfg.mission.initial_viewpoint, planning_time=cfg.mission.planning_time, prior=prior,
        )
    if variant.kind == 'ipp':
        return run_mission(
            truth, sensor, planner_cfg, rng, noise=noise, noise_rng=noise_rng,
            initial_viewpoint=cfg.mission.initial_viewpoint, planning_time=cfg.mission.planning_time, prior=prior,
        )
    raise ValueError(f"Unknown variant kind '{variant.kind}'")


def _run_task(task: Tuple[ExperimentConfig, Variant, int]):
    """Worker entry point: returns (metrics frame, replan records, error message)"""
    cfg, variant, trial = task
    try:
        result = run_trial(cfg, variant, trial)
    except Exception as e:
        return None, [], f"{type(e).__name__}: {e}"
    return result.log.to_frame(), result.replans, None


def run_experiment(
        cfg: ExperimentConfig,
        variants: Sequence[Variant] = None,
        *,
        jobs: int = 1,
        verbose: bool = False
) -> ExperimentResult:
    """
    Run every trial of every variant and write the results into cfg.output_dir:
      <variant>/trial_NNNN.csv - metrics after every fusion of one mission
      <variant>/replans_trial_NNNN.csv - the viewpoints of every plan (verbose only)
      aggregate.csv - mean and 5th/95th percentiles of every metric on a 1 s grid
      entropy_cdf.csv - cumulative share of the entropy reduction over time
      plot_metrics.py - a matplotlib script plotting the two files above
      errors.csv - the trials that failed, if any

    :param cfg: The experiment configuration
    :param variants: The planners to run; run_variants(cfg) by default
    :param jobs: Number of worker processes. Outputs do not depend on it.
    :param verbose: Also write the per-replan files
    :return: Paths of the files written
    """
    if jobs < 1:
        raise ValueError(f"jobs must be at least 1, got {jobs}")
    variants = list(variants) if variants is not None else run_variants(cfg)

    try:
        os.makedirs(cfg.output_dir, exist_ok=True)
        for variant in variants:
            os.makedirs(os.path.join(cfg.output_dir, variant.name), exist_ok=True)
    except OSError as e:
        raise WeedIppError(f"Cannot write to the output directory {cfg.output_dir}: {e}") from e
    attach_log_file(cfg.output_dir)

    tasks = [(cfg, variant, trial) for variant in variants for trial in range(cfg.trials)]
    _logger.info(f"Running {cfg.trials} trial(s) of {len(variants)} variant(s) with {jobs} job(s)")
    if jobs == 1:
        outcomes = map(_run_task, tasks)
    else:
        executor = ProcessPoolExecutor(max_workers=jobs)
        outcomes = executor.map(_run_task, tasks)

    logs_by_variant: Dict[str, List[MetricsLog]] = {v.name: [] for v in variants}
    trial_files: Dict[str, List[str]] = {v.name: [] for v in variants}
    errors = []
    try:
        for (_, variant, trial), (frame, replans, error) in zip(tasks, outcomes):
            if error is not None:
                _logger.warning(f"Trial {trial} of variant {variant.name} failed: {error}")
                errors.append({'variant': variant.name, 'trial': trial, 'error': error})
                continue
            variant_dir = os.path.join(cfg.output_dir, variant.name)
            path = os.path.join(variant_dir, f"trial_{trial:04d}.csv")
            frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
            trial_files[variant.name].append(path)
            logs_by_variant[variant.name].append(MetricsLog.from_frame(frame))
            if verbose:
                _write_replans(replans, os.path.join(variant_dir, f"replans_trial_{trial:04d}.csv"))
            _logger.info(f"Finished trial {trial} of variant {variant.name}")
    finally:
        if jobs > 1:
            executor.shutdown()

    aggregate_file = os.path.join(cfg.output_dir, 'aggregate.csv')
    aggregate_logs(logs_by_variant).to_csv(aggregate_file, index=False, float_format=CSV_FLOAT_FORMAT)

    cdf_frames = []
    for name, logs in logs_by_variant.items():
        if logs:
            cdf = entropy_cdf(logs, cfg.entropy_cdf_bin)
            cdf['variant'] = name
            cdf_frames.append(cdf)
    cdf_file = os.path.join(cfg.output_dir, 'entropy_cdf.csv')
    cdf_table = pd.concat(cdf_frames, ignore_index=True) if cdf_frames else pd.DataFrame(columns=['t_s', 'cdf', 'variant'])
    cdf_table.to_csv(cdf_file, index=False, float_format=CSV_FLOAT_FORMAT)

    with open(os.path.join(cfg.output_dir, 'plot_metrics.py'), 'w') as f:
        f.write(PLOT_SCRIPT)

    errors_file = None
    if errors:
        errors_file = os.path.join(cfg.output_dir, 'errors.csv')
        pd.DataFrame(errors, columns=['variant', 'trial', 'error']).to_csv(errors_file, index=False)
        raise WeedIppError(f"{len(errors)} trial(s) failed; see {errors_file}")

    _logger.info(f"Results written to {cfg.output_dir}")
    return ExperimentResult(cfg.output_dir, trial_files, aggregate_file, cdf_file, errors_file)


def _write_replans(records: List[ReplanRecord], path: str):
    df = pd.DataFrame(records, columns=ReplanRecord._fields)
    df.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)


PLOT_SCRIPT = '''"""
Plot the aggregate metrics and entropy CDFs written next to this script. Requires matplotlib and pandas.

    python plot_metrics.py
"""
import os
import matplotlib.pyplot as plt
import pandas as pd

HERE = os.path.dirname(os.path.abspath(__file__))

aggregate = pd.read_csv(os.path.join(HERE, 'aggregate.csv'))
cdf = pd.read_csv(os.path.join(HERE, 'entropy_cdf.csv'))

metrics = ['entropy_nats', 'class_rate', 'f2']
fig, axes = plt.subplots(1, len(metrics) + 1, figsize=(5 * (len(metrics) + 1), 4))
for ax, metric in zip(axes, metrics):
    for variant, df in aggregate[aggregate['metric'] == metric].groupby('variant'):
        ax.plot(df['t_s'], df['mean'], label=variant)
        ax.fill_between(df['t_s'], df['p05'], df['p95'], alpha=0.2)
    ax.set_xlabel('time [s]')
    ax.set_ylabel(metric)

for variant, df in cdf.groupby('variant'):
    axes[-1].step(df['t_s'], df['cdf'], where='post', label=variant)
axes[-1].set_xlabel('time [s]')
axes[-1].set_ylabel('entropy reduction CDF')
axes[-1].legend()

fig.tight_layout()
fig.savefig(os.path.join(HERE, 'metrics.png'), dpi=150)
plt.show()
'''
