"""Command surface. Each command maps failures to exit codes: 1 for invalid input, 2 for runtime errors."""
import functools
import logging
from pathlib import Path
from typing import Optional

import click
from pydantic import ValidationError

from app.exceptions import ConfigError, LadderSegError
from settings.config import settings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def handle_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (ConfigError, ValidationError) as exc:
            click.echo(f"error: {exc}", err=True)
            raise click.exceptions.Exit(EXIT_VALIDATION)
        except (LadderSegError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            raise click.exceptions.Exit(EXIT_RUNTIME)
        except click.exceptions.Exit:
            raise
        except click.ClickException:
            raise
        except Exception as exc:
            logger.debug("Unhandled failure", exc_info=True)
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            raise click.exceptions.Exit(EXIT_RUNTIME)
    return wrapper


def resolve_output_dir(flag: Optional[Path], default: Optional[Path] = None) -> Path:
    """Explicit flag, else LADDERSEG_OUTPUT_ROOT, else ``default``."""
    if flag is not None:
        return Path(flag)
    if settings.output_root is not None:
        return Path(settings.output_root)
    return Path(default) if default is not None else Path("runs") / "reports"


def _split(value: Optional[str], cast, param):
    if value is None:
        return None
    try:
        return tuple(cast(v) for v in value.split(",") if v.strip())
    except ValueError:
        raise click.BadParameter(f"expected a comma separated list, got '{value}'", param=param)


def float_list(ctx, param, value):
    return _split(value, float, param)


def int_list(ctx, param, value):
    return _split(value, int, param)
