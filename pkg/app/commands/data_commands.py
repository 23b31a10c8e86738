import logging
from pathlib import Path
from typing import Optional

import click

from app.commands import handle_errors
from app.dependencies import get_label_space
from app.exceptions import ConfigError
from app.services.dataset_service import generate_synthetic
from app.utils.config_file import read_run_config

logger = logging.getLogger(__name__)


@click.command("generate")
@click.option("--config", "config_path", type=click.Path(path_type=Path), required=True, help="Run file with [synthetic.*] sections.")
@click.option("--root", type=click.Path(path_type=Path), default=None, help="Overrides [generate] root.")
@click.option("--seed", type=int, default=None, help="Overrides [generate] seed.")
@handle_errors
def generate(config_path: Path, root: Optional[Path], seed: Optional[int]):
    """Write the synthetic datasets declared in the run file under <root>/<split>/<dataset_id>."""
    run_config = read_run_config(config_path, {"synthetic_root": root, "generate_seed": seed})
    if not run_config.synthetic:
        raise ConfigError("synthetic", "no [synthetic.<dataset_id>] section declared")
    space = get_label_space()
    for spec in run_config.synthetic:
        index = generate_synthetic(spec, run_config.generate_seed, run_config.synthetic_root / spec.split, space)
        click.echo(f"{spec.dataset_id}/{spec.split}: {len(index)} samples")
