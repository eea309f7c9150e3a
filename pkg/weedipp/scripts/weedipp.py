import click
import sys
import weedipp
from weedipp._logging import set_verbose
from weedipp.acceptance import run_acceptance
from weedipp.exceptions import ConfigError
from weedipp.run_experiment import compare_variants, run_variants, sweep_variants

EXIT_CONFIG_ERROR = 1
EXIT_RUNTIME_ERROR = 2
EXIT_ACCEPTANCE_FAILED = 3


_EXPERIMENT_OPTIONS = [
    click.option(
        '-c', '--config',
        required=True,
        type=click.Path(dir_okay=False),
        help="""The YAML file describing the experiment. See weedipp/data/configs/ for the full evaluation
                and a small configuration that runs in seconds."""
    ),
    click.option(
        '-o', '--out',
        default=None,
        type=click.Path(file_okay=False, dir_okay=True, writable=True, resolve_path=True),
        help="""The directory results are written to. Overrides the config's output_dir."""
    ),
    click.option(
        '--seed',
        default=None,
        type=int,
        help="""Base seed; trial i uses seed + i. Overrides the config's seed."""
    ),
    click.option(
        '--trials',
        default=None,
        type=int,
        help="""Number of trials per variant. Overrides the config's trials."""
    ),
    click.option(
        '-j', '--jobs',
        default=1,
        show_default=True,
        type=int,
        help="""Number of worker processes. Results do not depend on it."""
    ),
    click.option(
        '-v', '--verbose',
        is_flag=True,
        default=False,
        help="""Log every replan and write the per-replan viewpoint files."""
    ),
]


def experiment_options(command):
    """Options shared by every experiment command"""
    for option in reversed(_EXPERIMENT_OPTIONS):
        command = option(command)
    return command


def _load(config, out, seed, trials):
    try:
        return weedipp.load_experiment_config(config).with_overrides(output_dir=out, seed=seed, trials=trials)
    except ConfigError as e:
        click.echo(f"Configuration error: {e}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)


def _run(choose_variants, config, out, seed, trials, jobs, verbose):
    set_verbose(verbose)
    cfg = _load(config, out, seed, trials)

    variants = choose_variants(cfg)
    try:
        result = weedipp.run_experiment(cfg, variants, jobs=jobs, verbose=verbose)
    except ConfigError as e:
        click.echo(f"Configuration error: {e}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    except Exception as e:
        click.echo(f"Experiment failed: {e}", err=True)
        sys.exit(EXIT_RUNTIME_ERROR)

    n_files = sum(len(files) for files in result.trial_files.values())
    click.echo(f"Wrote {n_files} trial file(s) for {len(variants)} variant(s) to {result.output_dir}")


@click.group()
@click.version_option(weedipp.__version__)
def weedipp_cli():
    """Simulate informative path planning missions for UAV weed classification and compare planners."""


@weedipp_cli.command()
@experiment_options
def run(config, out, seed, trials, jobs, verbose):
    """Run the single planner named by the config's "variant" key."""
    _run(run_variants, config, out, seed, trials, jobs, verbose)


@weedipp_cli.command()
@experiment_options
def compare(config, out, seed, trials, jobs, verbose):
    """Compare IPP (time-varying objective, global CMA-ES) with lawnmower coverage and the RIG-tree."""
    _run(compare_variants, config, out, seed, trials, jobs, verbose)


@weedipp_cli.command()
@experiment_options
def sweep(config, out, seed, trials, jobs, verbose):
    """Run IPP with every combination of objective (info_only, class_only, time_varying) and CMA-ES mode
       (none, local, global)."""
    _run(sweep_variants, config, out, seed, trials, jobs, verbose)


@weedipp_cli.command()
@experiment_options
def check(config, out, seed, trials, jobs, verbose):
    """Run both baselines and the IPP variants the planner comparisons need, then report whether IPP beats
       coverage and the RIG-tree by the expected margins and whether the CMA-ES modes and objectives rank as
       expected. Exits with code 3 if any comparison fails."""
    set_verbose(verbose)
    cfg = _load(config, out, seed, trials)
    try:
        result, criteria = run_acceptance(cfg, jobs=jobs, verbose=verbose)
    except ConfigError as e:
        click.echo(f"Configuration error: {e}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    except Exception as e:
        click.echo(f"Experiment failed: {e}", err=True)
        sys.exit(EXIT_RUNTIME_ERROR)

    for criterion in criteria:
        click.echo(str(criterion))
    failed = [c.number for c in criteria if not c.passed]
    if failed:
        click.echo(f"{len(failed)} of {len(criteria)} check(s) failed; results in {result.output_dir}", err=True)
        sys.exit(EXIT_ACCEPTANCE_FAILED)
    click.echo(f"All {len(criteria)} checks passed; results in {result.output_dir}")


if __name__ == '__main__':  # pragma: no cover
    weedipp_cli()
