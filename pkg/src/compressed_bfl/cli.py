import sys
from pathlib import Path

import click

from . import __version__
from .core import CompressedBFLError
from .harness import (
    ExperimentConfig,
    ResultsIOError,
    format_report,
    report,
    run_experiment,
)
from .logging import configure_logging, logger
from .samplers import DivergenceError

EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_RESULTS = 4


def _fail(message: str, code: int):
    click.echo(message, err=True)
    sys.exit(code)


def _load(config_path, seed, out, fmt) -> ExperimentConfig:
    overrides = {}
    if seed is not None:
        overrides["seeds.seed"] = seed
    if out is not None:
        overrides["output.directory"] = str(out)
    if fmt is not None:
        overrides["output.format"] = fmt
    try:
        return ExperimentConfig.from_toml(config_path).with_overrides(overrides)
    except CompressedBFLError as e:
        _fail(f"Configuration error: {e}", EXIT_CONFIG)


def _run(config: ExperimentConfig, out_dir: Path):
    try:
        return run_experiment(config, out_dir)
    except DivergenceError as e:
        _fail(
            f"Chain diverged in round {e.round_index + 1}"
            + (f" on device {e.device}" if e.device is not None else "")
            + f"; partial trace written to {out_dir}",
            EXIT_DIVERGENCE,
        )
    except ResultsIOError as e:
        _fail(f"Results error: {e}", EXIT_RESULTS)
    except CompressedBFLError as e:
        _fail(f"Configuration error: {e}", EXIT_CONFIG)


def _echo_summary(bundle, out_dir: Path):
    for row in bundle.summary["evaluations"]:
        click.echo(
            f"{row['set']:<12} accuracy={row['accuracy']:.4f} "
            f"ece={row['ece']:.4f} pooled_ece={row['pooled_ece']:.4f}"
        )
    savings = bundle.summary["communication"]["savings_percent"]
    if savings is not None:
        click.echo(f"communication savings: {savings:.2f}%")
    click.echo(f"results: {out_dir}")


_format_option = click.option(
    "--format", "fmt", type=click.Choice(["csv", "json"]), default=None, help="Table format."
)
_seed_option = click.option("--seed", type=int, default=None, help="Override seeds.seed.")
_out_option = click.option(
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Output directory (default: output.directory of the config).",
)


@click.group()
@click.version_option(__version__, prog_name="compressed-bfl")
@click.option("-v", "--verbose", is_flag=True, help="Log debug messages.")
@click.option("-q", "--quiet", is_flag=True, help="Only log warnings and errors.")
def cli(verbose, quiet):
    """compressed-bfl: decentralized Bayesian federated learning simulator"""
    if verbose and quiet:
        _fail("--verbose and --quiet are mutually exclusive", EXIT_CONFIG)
    configure_logging("DEBUG" if verbose else "WARNING" if quiet else "INFO")


@cli.command()
@click.argument("config_path", type=click.Path(dir_okay=False, path_type=Path))
@_seed_option
@_out_option
@_format_option
def run(config_path, seed, out, fmt):
    """Run the experiment described by CONFIG_PATH."""
    config = _load(config_path, seed, out, fmt)
    out_dir = Path(config.output.directory)
    bundle = _run(config, out_dir)
    _echo_summary(bundle, out_dir)


def _parse_param(param: str) -> tuple[str, list[str]]:
    name, sep, values = param.partition("=")
    values = [v.strip() for v in values.split(",") if v.strip()]
    if not sep or not name.strip() or not values:
        _fail(f"--param expects NAME=V1,V2,..., got {param!r}", EXIT_CONFIG)
    return name.strip(), values


@cli.command()
@click.argument("config_path", type=click.Path(dir_okay=False, path_type=Path))
@click.option(
    "--param", required=True, help="Swept parameter, e.g. L=1,2,4,8,12 or training.zeta=0.01,0.1."
)
@_seed_option
@_out_option
@_format_option
def sweep(config_path, param, seed, out, fmt):
    """Run one experiment per value of a parameter."""
    base = _load(config_path, seed, out, fmt)
    name, values = _parse_param(param)
    root = Path(base.output.directory)
    for value in values:
        out_dir = root / f"{name}={value}"
        try:
            config = base.with_overrides({name: value, "output.directory": str(out_dir)})
        except CompressedBFLError as e:
            _fail(f"Configuration error: {e}", EXIT_CONFIG)
        logger.info(f"Sweep {name}={value} -> {out_dir}")
        bundle = _run(config, out_dir)
        _echo_summary(bundle, out_dir)


@cli.command(name="report")
@click.argument("results_dir", type=click.Path(file_okay=False, path_type=Path))
def report_command(results_dir):
    """Summarize every run below RESULTS_DIR."""
    try:
        rows = report(results_dir)
    except ResultsIOError as e:
        _fail(f"Results error: {e}", EXIT_RESULTS)
    click.echo(format_report(rows))


if __name__ == "__main__":
    cli()
