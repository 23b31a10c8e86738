"""Confusion accumulation, IoU family metrics, negative-image scoring and foreign-pixel incidence.

iIoU follows the Cityscapes benchmark: every ground-truth instance of class c weighs
its true-positive and false-negative pixels by ``mean instance size of c / its size``,
where the mean is taken over all instances of c accumulated so far; false positives
are the unweighted off-diagonal column counts of the confusion matrix. Categories
are scored the same way after collapsing classes into categories.
"""
import csv
import logging
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from app.exceptions import MissingInstances, ShapeMismatch
from app.schemas.label_schemas import DEFAULT_IGNORE_ID, Category, ClassGroup, DRIVING_CATEGORIES, LabelSpace
from app.schemas.report_schemas import EvaluationSummary, IncidenceReport, IncidenceRow
from app.services.label_service import class_to_category

logger = logging.getLogger(__name__)


class ConfusionMatrix:
    """``counts[gt, pred]`` over object classes followed by negative ids."""

    def __init__(self, num_labels: int, counts: Optional[np.ndarray] = None):
        self.num_labels = num_labels
        if counts is None:
            counts = np.zeros((num_labels, num_labels), dtype=np.int64)
        if counts.shape != (num_labels, num_labels):
            raise ShapeMismatch("confusion counts", (num_labels, num_labels), counts.shape)
        self.counts = counts.astype(np.int64, copy=False)

    @classmethod
    def for_space(cls, space: LabelSpace) -> "ConfusionMatrix":
        return cls(space.num_labels)

    @property
    def total_pixels(self) -> int:
        return int(self.counts.sum())

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_labels != self.num_labels:
            raise ShapeMismatch("merged confusion", self.counts.shape, other.counts.shape)
        return ConfusionMatrix(self.num_labels, self.counts + other.counts)

    __add__ = merge

    def copy(self) -> "ConfusionMatrix":
        return ConfusionMatrix(self.num_labels, self.counts.copy())

    def __eq__(self, other) -> bool:
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)


class IoUResult(NamedTuple):
    per_class: np.ndarray  # NaN where TP + FP + FN == 0
    mean: float


def accumulate(conf: ConfusionMatrix, pred_map: np.ndarray, gt_map: np.ndarray,
               ignore_id: int = DEFAULT_IGNORE_ID) -> ConfusionMatrix:
    """Add ``counts[gt, pred]`` for every pixel whose gt is not ``ignore_id``; updates ``conf`` in place."""
    pred_map = np.asarray(pred_map)
    gt_map = np.asarray(gt_map)
    if pred_map.shape != gt_map.shape:
        raise ShapeMismatch("prediction", gt_map.shape, pred_map.shape)
    keep = gt_map != ignore_id
    gt = gt_map[keep].astype(np.int64)
    pred = pred_map[keep].astype(np.int64)
    n = conf.num_labels
    if gt.size and (gt.max() >= n or pred.max() >= n or pred.min() < 0 or gt.min() < 0):
        raise ValueError(f"label ids must lie in [0, {n}) or equal ignore_id {ignore_id}")
    conf.counts += np.bincount(gt * n + pred, minlength=n * n).reshape(n, n)
    return conf


def _iou(counts: np.ndarray) -> np.ndarray:
    tp = np.diag(counts).astype(np.float64)
    fp = counts.sum(0) - tp
    fn = counts.sum(1) - tp
    denominator = tp + fp + fn
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(denominator > 0, tp / np.maximum(denominator, 1), np.nan)


def _nanmean(values: np.ndarray) -> float:
    values = values[~np.isnan(values)]
    return float(values.mean()) if values.size else float("nan")


def class_iou(conf: ConfusionMatrix, class_ids: Optional[Sequence[int]] = None) -> IoUResult:
    """Per-label IoU; the mean runs over ``class_ids`` (default: all labels) that occur in gt or prediction."""
    per_class = _iou(conf.counts)
    selected = per_class if class_ids is None else per_class[list(class_ids)]
    return IoUResult(per_class=per_class, mean=_nanmean(selected))


def pixel_accuracy(conf: ConfusionMatrix) -> float:
    total = conf.total_pixels
    return float(np.trace(conf.counts)) / total if total else float("nan")


def _category_lut(space: LabelSpace) -> np.ndarray:
    """Unified id -> row of the category confusion: categories first, then one row per negative id."""
    lut = np.full(256, -1, dtype=np.int64)
    for c in space.classes:
        lut[c.unified_id] = c.category.index
    for k, negative_id in enumerate(space.negative_ids):
        lut[negative_id] = len(Category) + k
    return lut


def _num_category_labels(space: LabelSpace) -> int:
    return len(Category) + len(space.negative_ids)


def category_confusion(space: LabelSpace, conf: ConfusionMatrix) -> ConfusionMatrix:
    """Aggregate a class-level confusion through the class -> category map."""
    size = _num_category_labels(space)
    lut = _category_lut(space)[:conf.num_labels]
    aggregation = np.zeros((conf.num_labels, size), dtype=np.int64)
    aggregation[np.arange(conf.num_labels), lut] = 1
    return ConfusionMatrix(size, aggregation.T @ conf.counts @ aggregation)


def _category_maps(space: LabelSpace, pred_map: np.ndarray, gt_map: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    negative_rows = {neg: len(Category) + k for k, neg in enumerate(space.negative_ids)}
    pred = class_to_category(space, pred_map)
    gt = class_to_category(space, gt_map)
    for negative_id, row in negative_rows.items():
        pred[np.asarray(pred_map) == negative_id] = row
        gt[np.asarray(gt_map) == negative_id] = row
    return pred, gt


def category_iou(space: LabelSpace,
                 conf_or_maps: Union[ConfusionMatrix, Tuple[np.ndarray, np.ndarray]]) -> IoUResult:
    """IoU over the seven driving categories; accepts a class confusion or a (pred, gt) pair of maps."""
    if isinstance(conf_or_maps, ConfusionMatrix):
        categories = category_confusion(space, conf_or_maps)
    else:
        pred_map, gt_map = conf_or_maps
        pred, gt = _category_maps(space, pred_map, gt_map)
        categories = accumulate(ConfusionMatrix(_num_category_labels(space)), pred, gt, space.ignore_id)
    per_category = _iou(categories.counts)[:len(Category)]
    mean = _nanmean(per_category[[c.index for c in DRIVING_CATEGORIES]])
    return IoUResult(per_class=per_category, mean=mean)


class InstanceAccumulator:
    """Streams (pred, gt, instances) triples and scores iIoU at class and category level."""

    def __init__(self, space: LabelSpace):
        self.space = space
        self.conf = ConfusionMatrix.for_space(space)
        self._instance_classes = np.zeros(256, dtype=bool)
        self._instance_classes[list(space.instance_class_ids())] = True
        self._category_lut = _category_lut(space)
        # per instance: class id, size, class-level TP pixels, category-level TP pixels
        self._records: List[Tuple[int, int, int, int]] = []

    def add(self, pred_map: np.ndarray, gt_map: np.ndarray, instance_map: Optional[np.ndarray]) -> None:
        """Without an instance map only the confusion is updated."""
        pred_map = np.asarray(pred_map).astype(np.int64)
        gt_map = np.asarray(gt_map).astype(np.int64)
        accumulate(self.conf, pred_map, gt_map, self.space.ignore_id)
        if instance_map is None:
            return
        instance_map = np.asarray(instance_map).astype(np.int64)
        if instance_map.shape != gt_map.shape:
            raise ShapeMismatch("instances", gt_map.shape, instance_map.shape)

        in_instance_class = self._instance_classes[gt_map]
        orphans = in_instance_class & (instance_map == 0)
        if orphans.any():
            class_id = int(gt_map[orphans][0])
            logger.error("Instance-class pixels without instance id (class %d)", class_id)
            raise MissingInstances(class_id, int(orphans.sum()))

        if not in_instance_class.any():
            return
        gt = gt_map[in_instance_class]
        keys = instance_map[in_instance_class]
        pred = pred_map[in_instance_class]
        class_hit = (pred == gt).astype(np.float64)
        category_hit = (self._category_lut[pred] == self._category_lut[gt]).astype(np.float64)
        unique, inverse = np.unique(np.stack([gt, keys], axis=1), axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        sizes = np.bincount(inverse, minlength=len(unique))
        class_tp = np.bincount(inverse, weights=class_hit, minlength=len(unique))
        category_tp = np.bincount(inverse, weights=category_hit, minlength=len(unique))
        for (class_id, _), size, tp, cat_tp in zip(unique, sizes, class_tp, category_tp):
            self._records.append((int(class_id), int(size), int(tp), int(cat_tp)))

    def _weighted(self, keys: np.ndarray, sizes: np.ndarray, tps: np.ndarray, key: int) -> Tuple[float, float]:
        mask = keys == key
        if not mask.any():
            return 0.0, 0.0
        weights = sizes[mask].mean() / sizes[mask]
        tp = float((weights * tps[mask]).sum())
        fn = float((weights * (sizes[mask] - tps[mask])).sum())
        return tp, fn

    def _records_array(self) -> np.ndarray:
        if not self._records:
            return np.zeros((0, 4), dtype=np.int64)
        return np.asarray(self._records, dtype=np.int64)

    def class_iiou(self) -> np.ndarray:
        """Per label; classes without instances fall back to their plain IoU."""
        iou = _iou(self.conf.counts)
        records = self._records_array()
        out = iou.copy()
        for class_id in self.space.instance_class_ids():
            tp, fn = self._weighted(records[:, 0], records[:, 1].astype(np.float64),
                                    records[:, 2].astype(np.float64), class_id)
            fp = float(self.conf.counts[:, class_id].sum() - self.conf.counts[class_id, class_id])
            denominator = tp + fn + fp
            out[class_id] = tp / denominator if denominator > 0 else np.nan
        return out

    def category_iiou(self) -> IoUResult:
        """Per category; only categories holding instance classes are defined (human, vehicle)."""
        categories = category_confusion(self.space, self.conf).counts
        records = self._records_array()
        record_categories = self._category_lut[records[:, 0]] if len(records) else np.zeros(0, dtype=np.int64)
        out = np.full(len(Category), np.nan)
        instance_categories = sorted({self.space.classes[c].category.index for c in self.space.instance_class_ids()})
        for index in instance_categories:
            tp, fn = self._weighted(record_categories, records[:, 1].astype(np.float64),
                                    records[:, 3].astype(np.float64), index)
            fp = float(categories[:, index].sum() - categories[index, index])
            denominator = tp + fn + fp
            out[index] = tp / denominator if denominator > 0 else np.nan
        driving = [c.index for c in DRIVING_CATEGORIES if c.index in instance_categories]
        return IoUResult(per_class=out, mean=_nanmean(out[driving]))


def instance_iou(space: LabelSpace, pred_map: np.ndarray, gt_map: np.ndarray, instance_map: np.ndarray) -> np.ndarray:
    """Per-label iIoU of a single image."""
    accumulator = InstanceAccumulator(space)
    accumulator.add(pred_map, gt_map, instance_map)
    return accumulator.class_iiou()


def credit_negative_predictions(space: LabelSpace, pred_map: np.ndarray, gt_map: np.ndarray) -> np.ndarray:
    """Rewrite credited pixels of a negative image to their gt class.

    A pixel is credited when the prediction is exact, belongs to the other class
    group than its gt class, or is a negative id.
    """
    pred_map = np.asarray(pred_map)
    gt_map = np.asarray(gt_map)
    if pred_map.shape != gt_map.shape:
        raise ShapeMismatch("prediction", gt_map.shape, pred_map.shape)
    pred = pred_map.astype(np.int64)
    gt = gt_map.astype(np.int64)
    pred_group = space.group_lut[pred]
    gt_group = space.group_lut[gt]
    foreign = (pred_group >= 0) & (gt_group >= 0) & (pred_group != gt_group)
    negative = np.isin(pred, space.negative_ids)
    credited = (gt != space.ignore_id) & (foreign | negative)
    out = pred_map.copy()
    out[credited] = gt_map[credited]
    return out


def score_negative_image(space: LabelSpace, pred_map: np.ndarray, gt_map: np.ndarray) -> ConfusionMatrix:
    """Confusion contribution of a negative image under the credit rule."""
    credited = credit_negative_predictions(space, pred_map, gt_map)
    return accumulate(ConfusionMatrix.for_space(space), credited, gt_map, space.ignore_id)


def foreign_incidence(space: LabelSpace, pred_maps: Iterable[np.ndarray], home_group: ClassGroup,
                      dataset_id: str = "") -> IncidenceReport:
    """Count predicted object pixels per class group; negatives and ignore are left out."""
    counts = np.zeros(2, dtype=np.int64)
    for pred_map in pred_maps:
        groups = space.group_lut[np.asarray(pred_map).astype(np.int64)]
        counts += np.bincount(groups[groups >= 0].ravel(), minlength=2)[:2]
    row = IncidenceRow(dataset_id=dataset_id, home_group=ClassGroup(home_group),
                       driving_pixels=int(counts[0]), indoor_pixels=int(counts[1]))
    logger.info("Foreign incidence of '%s': %.4f", dataset_id, row.foreign_fraction)
    return IncidenceReport(rows=[row])


def write_incidence_report(report: IncidenceReport, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
        writer.writerow(("dataset", "driving classes (%)", "indoor classes (%)"))
        for row in report.rows:
            writer.writerow((row.dataset_id, f"{100 * row.driving_fraction:.2f}", f"{100 * row.indoor_fraction:.2f}"))
    return path


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.4f}"


def write_evaluation_report(summary: EvaluationSummary, out_dir: Path) -> Tuple[Path, Path]:
    """``<dataset>_classes.tsv`` (class, IoU, iIoU, category, category IoU) and ``<dataset>_summary.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = out_dir / f"{summary.dataset_id}_classes.tsv"
    with open(table, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
        writer.writerow(("class", "IoU", "iIoU", "category", "category IoU"))
        for score in summary.classes:
            writer.writerow((score.name, _fmt(score.iou), _fmt(score.iiou), score.category, _fmt(score.category_iou)))
    record = out_dir / f"{summary.dataset_id}_summary.json"
    record.write_text(summary.model_dump_json(indent=2), encoding="utf-8")
    logger.info("Wrote evaluation report for '%s' to %s", summary.dataset_id, out_dir)
    return table, record
