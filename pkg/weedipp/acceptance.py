import pandas as pd
from typing import List, NamedTuple, Tuple

from ._logging import _logger
from .experiment_config import ExperimentConfig
from .run_experiment import ExperimentResult, Variant, run_experiment

IPP = 'ipp-time_varying-global'
COVERAGE = 'coverage'
RIG_TREE = 'rig_tree'

# Headline time of the entropy comparison against coverage, in seconds
EARLY_COMPARISON_TIME = 100.0
EARLY_ENTROPY_RATIO = 0.7
FINAL_ENTROPY_RATIO = 0.6


class CriterionResult(NamedTuple):
    number: int
    description: str
    passed: bool
    detail: str

    def __str__(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number}. {self.description}: {self.detail}"


def acceptance_variants(cfg: ExperimentConfig) -> List[Variant]:
    """
    Both baselines, IPP with the time-varying objective under every CMA-ES mode, and IPP with each single
    objective under global CMA-ES
    """
    return [
        Variant(COVERAGE, 'coverage'),
        Variant(RIG_TREE, 'rig_tree'),
        Variant('ipp-time_varying-none', 'ipp', 'time_varying', 'none'),
        Variant('ipp-time_varying-local', 'ipp', 'time_varying', 'local'),
        Variant(IPP, 'ipp', 'time_varying', 'global'),
        Variant('ipp-info_only-global', 'ipp', 'info_only', 'global'),
        Variant('ipp-class_only-global', 'ipp', 'class_only', 'global'),
    ]


def mean_at(aggregate: pd.DataFrame, variant: str, metric: str, t: float) -> float:
    """Mean of a metric across trials at the last grid time at or before t"""
    rows = aggregate[(aggregate['variant'] == variant) & (aggregate['metric'] == metric)]
    if rows.empty:
        raise KeyError(f"The aggregate holds no '{metric}' for variant '{variant}'")
    rows = rows[rows['t_s'] <= t + 1e-9]
    if rows.empty:
        raise KeyError(f"Variant '{variant}' has no '{metric}' at or before t={t}")
    return float(rows.sort_values('t_s')['mean'].iloc[-1])


def _at_most(a: float, b: float, tolerance: float = 0.0) -> bool:
    """Whether a exceeds b by no more than tolerance times the larger magnitude"""
    return a <= b + tolerance * max(abs(a), abs(b))


def evaluate_acceptance(aggregate: pd.DataFrame, budget: float, noise_tolerance: float = 0.02) -> List[CriterionResult]:
    """
    Check the experiment-scale acceptance criteria against an aggregate table as written by run_experiment() for
    the acceptance_variants().

    :param aggregate: Long-format table with columns t_s, metric, mean, p05, p95, variant
    :param budget: Mission budget B in seconds
    :param noise_tolerance: Relative slack allowed between local CMA-ES and no refinement, whose difference may
        lie within trial-to-trial noise
    :return: One result per criterion, in order
    """
    def entropy(variant, t=budget):
        return mean_at(aggregate, variant, 'entropy_nats', t)

    def class_rate(variant, t=budget):
        return mean_at(aggregate, variant, 'class_rate', t)

    results = []

    early = min(EARLY_COMPARISON_TIME, budget)
    ipp_early, coverage_early = entropy(IPP, early), entropy(COVERAGE, early)
    results.append(CriterionResult(
        1, f"IPP entropy at {early:g} s at least {1 - EARLY_ENTROPY_RATIO:.0%} below coverage",
        ipp_early <= EARLY_ENTROPY_RATIO * coverage_early,
        f"{ipp_early:.1f} vs {coverage_early:.1f} nats ({_reduction(ipp_early, coverage_early)})",
    ))

    ipp_final, coverage_final, rig_final = entropy(IPP), entropy(COVERAGE), entropy(RIG_TREE)
    results.append(CriterionResult(
        2, f"IPP final entropy at least {1 - FINAL_ENTROPY_RATIO:.0%} below coverage",
        ipp_final <= FINAL_ENTROPY_RATIO * coverage_final,
        f"{ipp_final:.1f} vs {coverage_final:.1f} nats ({_reduction(ipp_final, coverage_final)})",
    ))
    results.append(CriterionResult(
        3, "Final entropy IPP < RIG-tree < coverage",
        ipp_final < rig_final < coverage_final,
        f"{ipp_final:.1f} / {rig_final:.1f} / {coverage_final:.1f} nats",
    ))

    modes = [f"ipp-time_varying-{mode}" for mode in ('global', 'local', 'none')]
    entropies = [entropy(v) for v in modes]
    rates = [class_rate(v) for v in modes]
    results.append(CriterionResult(
        4, "CMA-ES modes ordered global, local, none by final entropy and classification rate",
        entropies[0] <= entropies[1] and _at_most(entropies[1], entropies[2], noise_tolerance)
        and rates[0] >= rates[1] and _at_most(rates[2], rates[1], noise_tolerance),
        f"entropy {' / '.join(f'{e:.1f}' for e in entropies)} nats, "
        f"classification rate {' / '.join(f'{r:.4f}' for r in rates)}",
    ))

    quarter = budget / 4.0
    objectives = ['ipp-class_only-global', 'ipp-info_only-global', IPP]
    early_rates = [class_rate(v, quarter) for v in objectives]
    class_final = entropy('ipp-class_only-global')
    results.append(CriterionResult(
        5, f"Classification objective leads the classification rate at {quarter:g} s; time-varying ends with "
           f"lower entropy than classification only",
        early_rates[0] > max(early_rates[1:]) and ipp_final < class_final,
        f"rate at {quarter:g} s class/info/time-varying {' / '.join(f'{r:.4f}' for r in early_rates)}; "
        f"final entropy time-varying {ipp_final:.1f} vs class {class_final:.1f} nats",
    ))
    return results


def _reduction(value: float, reference: float) -> str:
    if reference <= 0:
        return "no reference entropy"
    return f"{1 - value / reference:.1%} lower"


def run_acceptance(
        cfg: ExperimentConfig,
        jobs: int = 1,
        verbose: bool = False
) -> Tuple[ExperimentResult, List[CriterionResult]]:
    """
    Run the acceptance_variants() on cfg and check the criteria against the aggregate it writes
    :return: The experiment's output files and the criteria results
    """
    result = run_experiment(cfg, acceptance_variants(cfg), jobs=jobs, verbose=verbose)
    aggregate = pd.read_csv(result.aggregate_file)
    criteria = evaluate_acceptance(aggregate, cfg.mission.budget)
    for criterion in criteria:
        _logger.info(str(criterion))
    return result, criteria
