"""Unified label space: table loading, encoding and benchmark remapping."""
import csv
import logging
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from app.exceptions import MissingTarget, UnknownDataset, UnknownNativeId
from app.schemas.label_schemas import (
    Category, ClassGroup, LabelClass, LabelSpace, NegativeClass, RemapKind, RemapStrategy,
)
from settings.config import settings

logger = logging.getLogger(__name__)

NATIVE_IGNORE = 255
_FIXED_COLUMNS = ("unified_id", "name", "group", "category", "has_instances", "color")


def _read_table(path: Path):
    """Split the declarative table into ``# key: value`` header entries and records."""
    header: Dict[str, str] = {}
    lines: List[str] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if line.startswith("#"):
                key, sep, value = line[1:].partition(":")
                if sep:
                    header[key.strip()] = value.strip()
                continue
            if line.strip():
                lines.append(line)
    return header, list(csv.DictReader(lines, delimiter="\t"))


def load_label_table(path: Path) -> LabelSpace:
    header, records = _read_table(path)
    if not records:
        raise ValueError(f"label table {path} has no records")
    dataset_ids = [col for col in records[0] if col not in _FIXED_COLUMNS]

    classes: List[LabelClass] = []
    negatives: Dict[str, NegativeClass] = {}
    dataset_maps: Dict[str, Dict[int, int]] = {d: {} for d in dataset_ids}
    dataset_groups: Dict[str, ClassGroup] = {}

    for record in records:
        unified_id = int(record["unified_id"])
        color = tuple(int(v) for v in record["color"].split(","))
        natives = {d: int(record[d]) for d in dataset_ids if record[d].strip() != "-"}
        if record["group"] == "negative":
            for dataset_id, native_id in natives.items():
                negatives[dataset_id] = NegativeClass(unified_id=unified_id, name=record["name"], native_id=native_id)
            continue
        label_class = LabelClass(
            unified_id=unified_id,
            name=record["name"],
            group=ClassGroup(record["group"]),
            category=Category(record["category"]),
            has_instances=record["has_instances"].strip() == "1",
            color=color,
        )
        classes.append(label_class)
        for dataset_id, native_id in natives.items():
            dataset_maps[dataset_id][native_id] = unified_id
            previous = dataset_groups.setdefault(dataset_id, label_class.group)
            if previous is not label_class.group:
                raise ValueError(f"dataset '{dataset_id}' labels classes from two groups")

    space = LabelSpace(
        version=int(header.get("version", 1)),
        classes=tuple(classes),
        negatives=negatives,
        dataset_maps=dataset_maps,
        dataset_groups=dataset_groups,
        ignore_id=int(header.get("ignore_id", 255)),
        foreign_base=int(header.get("foreign_base", 100)),
    )
    logger.debug("Loaded label table %s: %d classes, datasets %s", path, space.num_classes, dataset_ids)
    return space


def build_default_space(path: Optional[Path] = None) -> LabelSpace:
    """Default space: 19 driving + 20 indoor object classes, "Void" and "Ignore"."""
    return load_label_table(Path(path) if path else settings.label_table)


def _check_dataset(space: LabelSpace, dataset_id: str) -> None:
    if dataset_id not in space.dataset_maps:
        raise UnknownDataset(dataset_id)


def _encode_lut(space: LabelSpace, dataset_id: str) -> np.ndarray:
    lut = np.full(256, -1, dtype=np.int16)
    for native_id, unified_id in space.dataset_maps[dataset_id].items():
        lut[native_id] = unified_id
    # negative-class pixels carry no supervision
    lut[space.negatives[dataset_id].native_id] = space.ignore_id
    lut[NATIVE_IGNORE] = space.ignore_id
    return lut


def encode(space: LabelSpace, dataset_id: str, native_map: np.ndarray) -> np.ndarray:
    """Native on-disk label ids -> unified ids (uint8)."""
    _check_dataset(space, dataset_id)
    native_map = np.asarray(native_map)
    if native_map.size and (native_map.min() < 0 or native_map.max() > 255):
        bad = native_map[(native_map < 0) | (native_map > 255)].flat[0]
        raise UnknownNativeId(dataset_id, bad)
    unified = _encode_lut(space, dataset_id)[native_map.astype(np.int64)]
    if (unified < 0).any():
        bad = native_map[unified < 0].flat[0]
        logger.error("Undeclared native id %s in a '%s' label map", bad, dataset_id)
        raise UnknownNativeId(dataset_id, bad)
    return unified.astype(np.uint8)


def decode(space: LabelSpace, dataset_id: str, unified_map: np.ndarray) -> np.ndarray:
    """Unified ids -> native ids of one dataset.

    The dataset's own classes and negative class are translated; ``ignore_id`` becomes
    the native ignore code; every other (foreign) label id ``u`` becomes
    ``foreign_base + u``, which no native class of the dataset uses.
    """
    _check_dataset(space, dataset_id)
    lut = np.full(256, NATIVE_IGNORE, dtype=np.int16)
    lut[:space.num_labels] = space.foreign_base + np.arange(space.num_labels)
    for native_id, unified_id in space.dataset_maps[dataset_id].items():
        lut[unified_id] = native_id
    negative = space.negatives[dataset_id]
    lut[negative.unified_id] = negative.native_id
    lut[space.ignore_id] = NATIVE_IGNORE
    return lut[np.asarray(unified_map).astype(np.int64)].astype(np.uint8)


def remap_unified(space: LabelSpace, pred_map: np.ndarray, dest_dataset_id: str,
                  strategy: RemapStrategy) -> np.ndarray:
    """Replace ids foreign to ``dest_dataset_id`` according to ``strategy``, staying in unified ids.

    Idempotent for auto_void and to_class: the replacement values belong to the
    destination dataset and are left alone on a second pass.
    """
    _check_dataset(space, dest_dataset_id)
    pred_map = np.asarray(pred_map)
    own = np.zeros(256, dtype=bool)
    own[list(space.dataset_class_ids(dest_dataset_id))] = True
    own[space.negatives[dest_dataset_id].unified_id] = True
    own[space.ignore_id] = True
    foreign = ~own[pred_map.astype(np.int64)]

    if strategy.kind is RemapKind.IDENTITY:
        return pred_map.copy()
    if strategy.kind is RemapKind.AUTO_VOID:
        replacement = space.negatives[dest_dataset_id].unified_id
    else:
        if strategy.target is None:
            raise MissingTarget()
        if strategy.target not in space.dataset_class_ids(dest_dataset_id):
            raise MissingTarget(f"target {strategy.target} is not a class of dataset '{dest_dataset_id}'")
        replacement = strategy.target
    out = pred_map.copy()
    out[foreign] = replacement
    if foreign.any():
        logger.debug("Remapped %d foreign pixels for '%s' (%s)", int(foreign.sum()), dest_dataset_id, strategy.kind.value)
    return out


def remap_for_benchmark(space: LabelSpace, pred_map: np.ndarray, dest_dataset_id: str,
                        strategy: RemapStrategy) -> np.ndarray:
    """Unified prediction -> native label map of the destination benchmark."""
    return decode(space, dest_dataset_id, remap_unified(space, pred_map, dest_dataset_id, strategy))


def class_to_category(space: LabelSpace, pred_map: np.ndarray) -> np.ndarray:
    """Object classes -> Category index; negative ids and ``ignore_id`` pass through unchanged."""
    return space.category_lut[np.asarray(pred_map).astype(np.int64)].astype(np.int64)


def colorize(space: LabelSpace, label_map: np.ndarray) -> np.ndarray:
    """H x W unified map -> H x W x 3 uint8 preview using the table colors."""
    return space.palette[np.asarray(label_map).astype(np.int64)]
