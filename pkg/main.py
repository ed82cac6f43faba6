# main.py
import logging
import sys
import time
from typing import Optional, Tuple

import click
from dotenv import load_dotenv
from pydantic import ValidationError

from config.settings import settings

# Load environment variables
load_dotenv()

# Configure basic logging
logging.basicConfig(level=settings.LOG_LEVEL, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

from commands.pipelines import build_manifest, run
from models.cone import ConeSpec
from models.report import RunOptions
from services.reports import emit_report, run_directory


def _parse_grid(ctx, param, value: Optional[str]) -> Optional[Tuple[int, int]]:
    """'800x400' -> (800, 400); a single number N means N x N."""
    if value is None:
        return None
    try:
        parts = [int(part) for part in value.lower().split("x")]
    except ValueError:
        raise click.BadParameter(f"expected NxM or N, got '{value}'")
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2 or min(parts) < 1:
        raise click.BadParameter(f"expected two positive sizes, got '{value}'")
    return parts[0], parts[1]


def shared_options(command):
    """Flags accepted by every command; unused ones are still recorded in the manifest."""
    options = [
        click.option("--p", "p", type=int, default=None, help="First winding frequency."),
        click.option("--q", "q", type=int, default=None, help="Second winding frequency."),
        click.option("--k", "k", type=int, default=None, help="Cover multiplicity (largest one for scans)."),
        click.option("--pq-max", "pq_max", type=int, default=settings.PQ_MAX, show_default=True,
                     help="Scan every coprime (p, q) with p + q <= this value."),
        click.option("--modes", type=int, default=settings.MODE_MAX, show_default=True,
                     help="Largest integer mode l checked on the profile bank."),
        click.option("--eps", type=float, default=None, help="Band amplitude of the graph problem."),
        click.option("--c", "c", type=float, default=settings.KERNEL_C, show_default=True,
                     help="Cutoff offset of the monotonicity kernel."),
        click.option("--grid", callback=_parse_grid, default=None,
                     help="Kernel grid as TxTHETA (e.g. 800x400) or graph cells N."),
        click.option("--seed", type=int, default=None, help="Seed for profile banks and noise."),
        click.option("--tol", type=float, default=None, help="Override the command's main tolerance."),
        click.option("--out", default=settings.OUTPUT_DIR, show_default=True, help="Parent output directory."),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def execute(command: str, out: str, **flags) -> None:
    try:
        options = RunOptions(**flags)
        if (options.p is None) != (options.q is None):
            raise click.UsageError("--p and --q must be given together")
        if options.p is not None:
            ConeSpec(p=options.p, q=options.q, k=options.k or 1)
    except ValidationError as e:
        raise click.UsageError(str(e))

    directory = run_directory(out, build_manifest(command, options))
    click.echo(f"[*] Running '{command}' into {directory}")
    start = time.perf_counter()
    try:
        report, tables = run(command, options, directory)
        emit_report(report, out, tables=tables, wall_time=time.perf_counter() - start, directory=directory)
    except OSError as e:
        click.echo(f"[ERROR] Could not write the report: {e}", err=True)
        sys.exit(1)

    if report.passed:
        click.echo(f"[OK] {command}: all checks passed")
        return
    click.echo(f"[ERROR] {command}: {len(report.failures)} check(s) failed", err=True)
    for failure in report.failures:
        click.echo(f"   - {failure}", err=True)
    sys.exit(1)


@click.group()
def cli():
    """Numerical checks for Hamiltonian-stationary Lagrangian cones."""


@cli.command()
@shared_options
def cone(**flags):
    """Validate one cone (--p --q) or the whole catalog up to --pq-max."""
    execute("cone", **flags)


@cli.command()
@shared_options
def stability(**flags):
    """Stability verdicts for every coprime (p, q) with p + q <= --pq-max."""
    execute("stability", **flags)


@cli.command()
@shared_options
def kernel(**flags):
    """Tabulate and certify the monotonicity kernel."""
    execute("kernel", **flags)


@cli.command()
@shared_options
def density(**flags):
    """Kernel-weighted density ratios of cones at several radii."""
    execute("density", **flags)


@cli.command()
@shared_options
def graph(**flags):
    """Minimize the area of a Lagrangian graph and run the refinement study."""
    execute("graph", **flags)


@cli.command(name="all")
@shared_options
def run_all(**flags):
    """Every pipeline in one run directory."""
    execute("all", **flags)


if __name__ == "__main__":
    cli()
