import sys
from typing import Optional, Sequence

import click

from app.commands import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION
from app.commands.data_commands import generate
from app.commands.eval_commands import analyze, evaluate, export
from app.commands.train_commands import ablate, train
from app.utils.common import setup_logging


@click.group(help="Ladder-style multi-dataset semantic segmentation: generate, train, eval, export, analyze, ablate.")
@click.version_option("0.1.0", prog_name="ladderseg")
@click.option("--verbose", "-v", is_flag=True, default=False, help="DEBUG logging.")
def cli(verbose: bool):
    setup_logging(verbose)


cli.add_command(generate)
cli.add_command(train)
cli.add_command(evaluate)
cli.add_command(export)
cli.add_command(analyze)
cli.add_command(ablate)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Process entry point: 0 success, 1 invalid input, 2 runtime failure."""
    try:
        rv = cli.main(args=list(argv) if argv is not None else None, prog_name="ladderseg", standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return EXIT_VALIDATION
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_RUNTIME
    return rv if isinstance(rv, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
