import logging
from pathlib import Path
from typing import Dict, Iterator, Optional

import click
import numpy as np

from app.commands import handle_errors, resolve_output_dir
from app.dependencies import get_device, get_label_space
from app.exceptions import ConfigError
from app.schemas.config_schemas import EvalOptions, RunConfig
from app.schemas.label_schemas import RemapKind
from app.services.checkpoint_service import load_model
from app.services.dataset_service import DatasetIndex, load_dataset
from app.services.evaluation_service import (
    analyze_incidence, directory_predictions, evaluate_predictions, export_predictions, model_predictions,
    resolve_strategy,
)
from app.services.metrics_service import write_evaluation_report, write_incidence_report
from app.utils.config_file import read_run_config
from app.utils.png_io import read_png

logger = logging.getLogger(__name__)

STRATEGIES = click.Choice([kind.value for kind in RemapKind])


def _source(checkpoint: Optional[Path], predictions: Optional[Path]) -> None:
    if (checkpoint is None) == (predictions is None):
        raise click.UsageError("give exactly one of --checkpoint or --predictions")


def _dataset_root(root: Optional[Path], run_config: Optional[RunConfig], dataset_id: str) -> Path:
    if root is not None:
        return root
    if run_config is not None:
        for entry in run_config.datasets:
            if entry.dataset_id == dataset_id:
                return entry.val_root or entry.root
    raise ConfigError("root", f"no dataset root given for '{dataset_id}'")


def _options(run_config: Optional[RunConfig], strategy: Optional[str], target: Optional[str],
              negative_rule: Optional[bool]) -> EvalOptions:
    base = run_config.eval.model_dump() if run_config is not None else {}
    update = {"strategy": strategy, "target": target, "negative_rule": negative_rule}
    base.update({k: v for k, v in update.items() if v is not None})
    return EvalOptions.model_validate(base)


def _load(config_path: Optional[Path], checkpoint: Optional[Path], device: Optional[str]):
    """(model or None, run config or None) from --checkpoint / --config."""
    model, run_config = None, None
    if checkpoint is not None:
        model, run_config, iteration = load_model(checkpoint, get_device(device))
        logger.info("Loaded checkpoint %s (iteration %d)", checkpoint, iteration)
    if config_path is not None:
        run_config = read_run_config(config_path)
    return model, run_config


def _predictions(model, dataset: DatasetIndex, predictions: Optional[Path], eval_scale: float, device: Optional[str]):
    if model is not None:
        return model_predictions(model, dataset, eval_scale, get_device(device))
    return directory_predictions(predictions, dataset)


@click.command("eval")
@click.option("--checkpoint", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--predictions", type=click.Path(exists=True, file_okay=False, path_type=Path), default=None,
              help="Directory of unified-id prediction PNGs named after the samples.")
@click.option("--dataset-id", required=True)
@click.option("--root", type=click.Path(path_type=Path), default=None, help="Parent directory of <dataset_id>/.")
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--strategy", type=STRATEGIES, default=None)
@click.option("--target", default=None, help="Class name for --strategy to_class.")
@click.option("--eval-scale", type=float, default=None)
@click.option("--negative-rule/--no-negative-rule", default=None)
@click.option("--output-dir", type=click.Path(path_type=Path), default=None)
@click.option("--device", default=None)
@handle_errors
def evaluate(checkpoint, predictions, dataset_id, root, config_path, strategy, target, eval_scale, negative_rule,
             output_dir, device):
    """Score predictions on one dataset; writes <dataset>_classes.tsv and <dataset>_summary.json."""
    _source(checkpoint, predictions)
    model, run_config = _load(config_path, checkpoint, device)
    space = get_label_space()
    options = _options(run_config, strategy, target, negative_rule)
    if eval_scale is None:
        eval_scale = run_config.train.eval_scale if run_config is not None else 1.0
    dataset = load_dataset(_dataset_root(root, run_config, dataset_id), dataset_id, space)
    summary = evaluate_predictions(space, dataset_id, _predictions(model, dataset, predictions, eval_scale, device),
                                   options, eval_scale)
    table, _ = write_evaluation_report(summary, resolve_output_dir(output_dir))
    click.echo(f"mIoU {summary.miou} category mIoU {summary.category_miou} pixel accuracy {summary.pixel_accuracy}")
    click.echo(f"report: {table}")


@click.command("export")
@click.option("--checkpoint", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--dataset-id", required=True, help="Dataset whose images are predicted.")
@click.option("--root", type=click.Path(path_type=Path), default=None)
@click.option("--dest", "dest_dataset_id", default=None, help="Benchmark whose native ids are written; defaults to --dataset-id.")
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--strategy", type=STRATEGIES, default=None)
@click.option("--target", default=None)
@click.option("--eval-scale", type=float, default=None)
@click.option("--keep-unified", is_flag=True, default=False, help="Also write unified-id maps under unified/.")
@click.option("--preview", is_flag=True, default=False, help="Also write colorized maps under preview/.")
@click.option("--output-dir", type=click.Path(path_type=Path), default=None)
@click.option("--device", default=None)
@handle_errors
def export(checkpoint, dataset_id, root, dest_dataset_id, config_path, strategy, target, eval_scale, keep_unified,
           preview, output_dir, device):
    """Predict a dataset and write label images in a benchmark's native ids."""
    model, run_config = _load(config_path, checkpoint, device)
    space = get_label_space()
    dest_dataset_id = dest_dataset_id or dataset_id
    options = _options(run_config, strategy, target, None)
    remap = resolve_strategy(space, dest_dataset_id, options.strategy, options.target)
    if eval_scale is None:
        eval_scale = run_config.train.eval_scale if run_config is not None else 1.0
    dataset = load_dataset(_dataset_root(root, run_config, dataset_id), dataset_id, space)
    out_dir = resolve_output_dir(output_dir) / dest_dataset_id
    count = export_predictions(space, model_predictions(model, dataset, eval_scale, get_device(device)),
                               dest_dataset_id, remap, out_dir, keep_unified, preview)
    click.echo(f"exported {count} label images to {out_dir}")


def _prediction_files(predictions: Path, dataset_id: str, single: bool) -> Iterator[np.ndarray]:
    directory = predictions / dataset_id
    if not directory.is_dir():
        if not single:
            raise FileNotFoundError(f"no prediction directory {directory}")
        directory = predictions
    for path in sorted(directory.glob("*.png")):
        yield read_png(path)


@click.command("analyze")
@click.option("--checkpoint", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--predictions", type=click.Path(exists=True, file_okay=False, path_type=Path), default=None,
              help="Directory of unified-id PNGs, one sub-directory per dataset.")
@click.option("--dataset-id", "dataset_ids", multiple=True, required=True)
@click.option("--root", type=click.Path(path_type=Path), default=None)
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--eval-scale", type=float, default=None)
@click.option("--output-dir", type=click.Path(path_type=Path), default=None)
@click.option("--device", default=None)
@handle_errors
def analyze(checkpoint, predictions, dataset_ids, root, config_path, eval_scale, output_dir, device):
    """Report the share of predicted pixels in driving and indoor classes per dataset."""
    _source(checkpoint, predictions)
    model, run_config = _load(config_path, checkpoint, device)
    space = get_label_space()
    if eval_scale is None:
        eval_scale = run_config.train.eval_scale if run_config is not None else 1.0
    sources: Dict[str, Iterator[np.ndarray]] = {}
    for dataset_id in dataset_ids:
        if model is not None:
            dataset = load_dataset(_dataset_root(root, run_config, dataset_id), dataset_id, space)
            sources[dataset_id] = (pred for _, pred in model_predictions(model, dataset, eval_scale, get_device(device)))
        else:
            sources[dataset_id] = _prediction_files(predictions, dataset_id, len(dataset_ids) == 1)
    report = analyze_incidence(space, sources)
    path = write_incidence_report(report, resolve_output_dir(output_dir) / "incidence.tsv")
    click.echo("dataset\tdriving classes (%)\tindoor classes (%)")
    for row in report.rows:
        click.echo(f"{row.dataset_id}\t{100 * row.driving_fraction:.2f}\t{100 * row.indoor_fraction:.2f}")
    click.echo(f"report: {path}")
