"""Prediction, benchmark-style evaluation, native-id export and incidence analysis."""
import logging
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from app.exceptions import EmptyDataset, MissingTarget, ShapeMismatch
from app.models.ladder_model import LadderDenseNet
from app.schemas.config_schemas import EvalOptions
from app.schemas.dataset_schemas import Sample
from app.schemas.label_schemas import LabelSpace, RemapKind, RemapStrategy
from app.schemas.report_schemas import ClassScore, EvaluationSummary, IncidenceReport
from app.services import label_service
from app.services.dataset_service import DatasetIndex
from app.services.metrics_service import (
    InstanceAccumulator, category_iou, class_iou, credit_negative_predictions, foreign_incidence, pixel_accuracy,
)
from app.utils.png_io import read_png, write_png

logger = logging.getLogger(__name__)

Prediction = Tuple[Sample, np.ndarray]


def resolve_strategy(space: LabelSpace, dataset_id: str, kind: RemapKind, target: Optional[str] = None) -> RemapStrategy:
    """Turn a strategy kind plus class name into a RemapStrategy for ``dataset_id``."""
    kind = RemapKind(kind)
    if kind is not RemapKind.TO_CLASS:
        return RemapStrategy(kind=kind)
    if target is None:
        raise MissingTarget()
    try:
        return RemapStrategy.to_class(space.class_id(target, dataset_id))
    except KeyError:
        raise MissingTarget(f"class '{target}' is not labelled in dataset '{dataset_id}'")


def predict_image(model: LadderDenseNet, image: np.ndarray, eval_scale: float = 1.0, device: str = "cpu") -> np.ndarray:
    """H x W x 3 float image -> H x W uint8 unified prediction; ``eval_scale`` resizes the input first."""
    height, width = image.shape[:2]
    tensor = torch.from_numpy(np.ascontiguousarray(image)).permute(2, 0, 1).unsqueeze(0).float().to(device)
    if eval_scale != 1.0:
        size = (max(1, int(round(height * eval_scale))), max(1, int(round(width * eval_scale))))
        tensor = F.interpolate(tensor, size=size, mode="bilinear", align_corners=False)
    model.eval()
    logits = model.predict_logits(tensor)
    if logits.shape[-2:] != (height, width):
        logits = F.interpolate(logits, size=(height, width), mode="bilinear", align_corners=False)
    return logits.argmax(1)[0].cpu().numpy().astype(np.uint8)


def model_predictions(model: LadderDenseNet, dataset: DatasetIndex, eval_scale: float = 1.0,
                      device: str = "cpu") -> Iterator[Prediction]:
    for sample in dataset.samples():
        yield sample, predict_image(model, sample.image, eval_scale, device)


def directory_predictions(pred_dir: Path, dataset: DatasetIndex) -> Iterator[Prediction]:
    """Pairs each sample with ``<pred_dir>/<name>.png`` holding unified ids."""
    pred_dir = Path(pred_dir)
    for sample in dataset.samples():
        path = pred_dir / f"{sample.name}.png"
        if not path.exists():
            raise FileNotFoundError(f"no prediction {path} for sample '{sample.name}'")
        pred = read_png(path)
        if pred.shape != sample.labels.shape:
            raise ShapeMismatch(f"prediction {path}", sample.labels.shape, pred.shape)
        yield sample, pred


def evaluate_predictions(space: LabelSpace, dataset_id: str, predictions: Iterable[Prediction],
                         options: EvalOptions = EvalOptions(), eval_scale: float = 1.0) -> EvaluationSummary:
    """Remap foreign predictions for ``dataset_id``, apply the negative-image rule and score."""
    strategy = resolve_strategy(space, dataset_id, options.strategy, options.target)
    accumulator = InstanceAccumulator(space)
    num_images = num_negative = 0
    with_instances = True
    for sample, pred in predictions:
        pred = label_service.remap_unified(space, pred, dataset_id, strategy)
        if sample.is_negative:
            num_negative += 1
            if options.negative_rule:
                pred = credit_negative_predictions(space, pred, sample.labels)
        with_instances = with_instances and sample.instances is not None
        accumulator.add(pred, sample.labels, sample.instances)
        num_images += 1
    if num_images == 0:
        logger.error("Nothing to evaluate for '%s'", dataset_id)
        raise EmptyDataset(dataset_id)

    conf = accumulator.conf
    class_ids = space.dataset_class_ids(dataset_id)
    ious = class_iou(conf, class_ids)
    categories = category_iou(space, conf)
    iiou = accumulator.class_iiou() if with_instances else None
    category_iiou = accumulator.category_iiou().mean if with_instances else None
    scores = []
    for class_id in class_ids:
        label_class = space.classes[class_id]
        scores.append(ClassScore(
            class_id=class_id,
            name=label_class.name,
            category=label_class.category.value,
            iou=float(ious.per_class[class_id]),
            iiou=None if iiou is None else float(iiou[class_id]),
            category_iou=float(categories.per_class[label_class.category.index]),
        ))
    summary = EvaluationSummary(
        dataset_id=dataset_id,
        strategy=strategy.kind.value,
        negative_rule=options.negative_rule,
        eval_scale=eval_scale,
        num_images=num_images,
        num_negative=num_negative,
        pixel_accuracy=pixel_accuracy(conf),
        miou=ious.mean,
        category_miou=categories.mean,
        category_iiou=category_iiou,
        classes=scores,
    )
    logger.info("Evaluated %d images of '%s': mIoU %s, category mIoU %s",
                num_images, dataset_id, summary.miou, summary.category_miou)
    return summary


def evaluate_model(model: LadderDenseNet, space: LabelSpace, dataset: DatasetIndex,
                   options: EvalOptions = EvalOptions(), eval_scale: float = 1.0, device: str = "cpu") -> EvaluationSummary:
    predictions = model_predictions(model, dataset, eval_scale, device)
    return evaluate_predictions(space, dataset.dataset_id, predictions, options, eval_scale)


def export_predictions(space: LabelSpace, predictions: Iterable[Prediction], dest_dataset_id: str,
                       strategy: RemapStrategy, out_dir: Path, keep_unified: bool = False,
                       preview: bool = False) -> int:
    """Write ``<out_dir>/<name>.png`` in the destination's native ids; optionally unified maps and color previews."""
    out_dir = Path(out_dir)
    count = 0
    for sample, pred in predictions:
        write_png(out_dir / f"{sample.name}.png", label_service.remap_for_benchmark(space, pred, dest_dataset_id, strategy))
        if keep_unified:
            write_png(out_dir / "unified" / f"{sample.name}.png", np.asarray(pred, dtype=np.uint8))
        if preview:
            write_png(out_dir / "preview" / f"{sample.name}.png", label_service.colorize(space, pred))
        count += 1
    logger.info("Exported %d predictions for '%s' (%s) to %s", count, dest_dataset_id, strategy.kind.value, out_dir)
    return count


def analyze_incidence(space: LabelSpace, predictions: Mapping[str, Iterable[np.ndarray]]) -> IncidenceReport:
    """One incidence row per dataset; the home group comes from the label table."""
    reports = [
        foreign_incidence(space, pred_maps, space.dataset_groups[dataset_id], dataset_id)
        for dataset_id, pred_maps in predictions.items()
    ]
    return IncidenceReport.merge(*reports)
