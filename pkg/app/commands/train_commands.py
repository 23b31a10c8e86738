import logging
from pathlib import Path
from typing import Optional, Tuple

import click

from app.commands import float_list, handle_errors, int_list
from app.dependencies import get_device, get_label_space
from app.services.trainer_service import run_pyramid_ablation, train as run_training
from app.utils.config_file import read_run_config

logger = logging.getLogger(__name__)


@click.command("train")
@click.option("--config", "config_path", type=click.Path(path_type=Path), required=True)
@click.option("--iterations", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--pyramid-weight", type=float, default=None, help="0 disables the pyramid loss.")
@click.option("--batch-size", type=int, default=None)
@click.option("--output-dir", type=click.Path(path_type=Path), default=None)
@click.option("--resume", type=click.Path(exists=True, path_type=Path), default=None, help="Checkpoint to continue from.")
@click.option("--device", default=None)
@handle_errors
def train(config_path: Path, iterations: Optional[int], seed: Optional[int], pyramid_weight: Optional[float],
          batch_size: Optional[int], output_dir: Optional[Path], resume: Optional[Path], device: Optional[str]):
    """Train the ladder network on the datasets of the run file."""
    run_config = read_run_config(config_path, {
        "train.iterations": iterations,
        "train.seed": seed,
        "train.pyramid_weight": pyramid_weight,
        "train.batch_size": batch_size,
        "output_dir": output_dir,
    })
    result = run_training(run_config, get_label_space(), resume=resume, device=get_device(device))
    click.echo(f"checkpoint: {result.checkpoint}")
    for dataset_id, summary in result.evaluations.items():
        click.echo(f"{dataset_id}: mIoU {summary.miou} category mIoU {summary.category_miou}")


@click.command("ablate")
@click.option("--config", "config_path", type=click.Path(path_type=Path), required=True)
@click.option("--weights", callback=float_list, default="0,0.4", show_default=True, help="Pyramid weights to compare.")
@click.option("--seeds", callback=int_list, default="0,1,2", show_default=True)
@click.option("--iterations", type=int, default=None)
@click.option("--output-dir", type=click.Path(path_type=Path), default=None)
@handle_errors
def ablate(config_path: Path, weights: Tuple[float, ...], seeds: Tuple[int, ...], iterations: Optional[int],
           output_dir: Optional[Path]):
    """Train one run per (pyramid weight, seed) and tabulate validation scores."""
    run_config = read_run_config(config_path, {"train.iterations": iterations, "output_dir": output_dir})
    rows = run_pyramid_ablation(run_config, weights, seeds, get_label_space())
    click.echo("pyramid_weight\tseed\tmiou\tcategory_miou")
    for row in rows:
        click.echo(f"{row.pyramid_weight:g}\t{row.seed}\t{row.miou}\t{row.category_miou}")
