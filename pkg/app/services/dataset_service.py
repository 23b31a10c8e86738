"""On-disk datasets: ``<root>/<dataset_id>/{images,labels,instances}/<name>.png`` plus ``manifest.tsv``."""
import csv
import io
import logging
import os
import zlib
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch.utils.data import Dataset

from app.exceptions import MissingLabel, ShapeMismatch
from app.schemas.config_schemas import AugmentParams, SyntheticDatasetSpec
from app.schemas.dataset_schemas import Sample, SampleDescriptor, SegBatch
from app.schemas.label_schemas import ClassGroup, LabelSpace
from app.schemas.sampler_schemas import ScheduleEntry
from app.services import label_service
from app.services.augment_service import augment
from app.utils.png_io import png_size, read_png, write_png

logger = logging.getLogger(__name__)

MANIFEST = "manifest.tsv"
SUBDIRS = ("images", "labels", "instances")


class DatasetIndex(Sequence[SampleDescriptor]):
    """Lazy sequence of sample descriptors for one dataset split."""

    def __init__(self, dataset_id: str, descriptors: List[SampleDescriptor], label_space: LabelSpace):
        self.dataset_id = dataset_id
        self.descriptors = descriptors
        self.label_space = label_space

    def __len__(self) -> int:
        return len(self.descriptors)

    def __getitem__(self, index):
        return self.descriptors[index]

    def materialize(self, index: int) -> Sample:
        return materialize(self.descriptors[index], self.label_space)

    def samples(self) -> Iterator[Sample]:
        for index in range(len(self)):
            yield self.materialize(index)

    @property
    def group(self) -> ClassGroup:
        return self.label_space.dataset_groups[self.dataset_id]


def _read_manifest(path: Path) -> List[Tuple[str, bool]]:
    with open(path, "r", encoding="utf-8", newline="") as handle:
        return [(row["name"], row["is_negative"].strip() == "1") for row in csv.DictReader(handle, delimiter="\t")]


def load_dataset(root: Path, dataset_id: str, label_space: LabelSpace) -> DatasetIndex:
    """Enumerate the samples under ``root/dataset_id``; shapes are checked from PNG headers."""
    base = Path(root) / dataset_id
    label_service._check_dataset(label_space, dataset_id)
    manifest = base / MANIFEST
    if manifest.exists():
        entries = _read_manifest(manifest)
    elif (base / "images").is_dir():
        entries = [(p.stem, False) for p in sorted((base / "images").glob("*.png"))]
    else:
        logger.warning("No dataset found under %s", base)
        entries = []

    descriptors = []
    for name, is_negative in entries:
        image_path = base / "images" / f"{name}.png"
        label_path = base / "labels" / f"{name}.png"
        instance_path = base / "instances" / f"{name}.png"
        if not label_path.exists():
            logger.error("Missing label for %s", image_path)
            raise MissingLabel(image_path)
        height, width = png_size(image_path)
        label_size = png_size(label_path)
        if label_size != (height, width):
            raise ShapeMismatch(f"labels of {label_path}", (height, width), label_size)
        if instance_path.exists():
            instance_size = png_size(instance_path)
            if instance_size != (height, width):
                raise ShapeMismatch(f"instances of {instance_path}", (height, width), instance_size)
        else:
            instance_path = None
        descriptors.append(SampleDescriptor(
            name=name, dataset_id=dataset_id, image_path=image_path, label_path=label_path,
            instance_path=instance_path, is_negative=is_negative, height=height, width=width,
        ))
    logger.info("Loaded %d samples of '%s' from %s", len(descriptors), dataset_id, base)
    return DatasetIndex(dataset_id, descriptors, label_space)


def materialize(descriptor: SampleDescriptor, label_space: LabelSpace) -> Sample:
    image = read_png(descriptor.image_path).astype(np.float32) / 255.0
    labels = label_service.encode(label_space, descriptor.dataset_id, read_png(descriptor.label_path))
    instances = None
    if descriptor.instance_path is not None:
        instances = read_png(descriptor.instance_path).astype(np.int32)
    return Sample(
        image=image, labels=labels, instances=instances, dataset_id=descriptor.dataset_id,
        is_negative=descriptor.is_negative, name=descriptor.name,
    )


def _stream_seed(seed: int, spec: SyntheticDatasetSpec) -> List[int]:
    return [seed, zlib.crc32(f"{spec.dataset_id}/{spec.split}".encode("utf-8"))]


def _render_scene(spec: SyntheticDatasetSpec, label_space: LabelSpace, rng: np.random.Generator,
                  negative: bool) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Two background bands plus random rectangles/ellipses; labels match rendered regions exactly."""
    height, width = spec.height, spec.width
    classes = np.asarray(spec.classes)
    labels = np.empty((height, width), dtype=np.uint8)
    instances = np.zeros((height, width), dtype=np.uint16)

    top, bottom = rng.choice(classes, size=2)
    horizon = int(rng.integers(height // 3, max(height // 3 + 1, 2 * height // 3)))
    labels[:horizon] = top
    labels[horizon:] = bottom
    next_instance = 1
    for band, cls in ((slice(0, horizon), top), (slice(horizon, height), bottom)):
        if label_space.classes[int(cls)].has_instances:
            instances[band] = next_instance
            next_instance += 1

    rows, cols = np.mgrid[0:height, 0:width]
    for _ in range(int(rng.integers(0, spec.max_shapes + 1))):
        cls = int(rng.choice(classes))
        h = int(rng.integers(max(2, height // 6), max(3, height // 2)))
        w = int(rng.integers(max(2, width // 6), max(3, width // 2)))
        y0 = int(rng.integers(0, height - h + 1))
        x0 = int(rng.integers(0, width - w + 1))
        if rng.random() < 0.5:
            mask = (rows >= y0) & (rows < y0 + h) & (cols >= x0) & (cols < x0 + w)
        else:
            cy, cx = y0 + h / 2.0, x0 + w / 2.0
            mask = ((rows + 0.5 - cy) / (h / 2.0)) ** 2 + ((cols + 0.5 - cx) / (w / 2.0)) ** 2 <= 1.0
        labels[mask] = cls
        instances[mask] = 0
        if label_space.classes[cls].has_instances:
            instances[mask] = next_instance
            next_instance += 1
    # instances only survive where the final label still has them
    instances[~np.isin(labels, label_space.instance_class_ids())] = 0

    palette = label_space.palette.astype(np.float32) / 255.0
    if negative:
        home = label_space.classes[int(classes[0])].group
        foreign = [c.unified_id for c in label_space.classes if c.group is not home]
        lut = np.arange(256)
        for cls in classes:
            lut[cls] = foreign[int(cls) % len(foreign)]
        image = palette[lut[labels]]
    else:
        image = palette[labels]
    image = image + rng.normal(0.0, spec.noise, size=image.shape).astype(np.float32)

    if spec.hood_rows:
        labels[-spec.hood_rows:] = label_space.ignore_id
        instances[-spec.hood_rows:] = 0
        image[-spec.hood_rows:] = 0.1
    return np.clip(image, 0.0, 1.0), labels, instances


def generate_synthetic(spec: SyntheticDatasetSpec, rng_seed: int, root: Path, label_space: LabelSpace) -> DatasetIndex:
    """Write a deterministic geometric-shape dataset under ``root/<dataset_id>``.

    The manifest is written last, so a failed run never leaves a manifest behind.
    Scene files left over from an earlier, larger generation are removed.
    """
    label_service._check_dataset(label_space, spec.dataset_id)
    own = set(label_space.dataset_class_ids(spec.dataset_id))
    foreign = [c for c in spec.classes if c not in own]
    if foreign:
        raise ValueError(f"classes {foreign} are not labelled in dataset '{spec.dataset_id}'")

    base = Path(root) / spec.dataset_id
    for sub in SUBDIRS:
        (base / sub).mkdir(parents=True, exist_ok=True)
    (base / MANIFEST).unlink(missing_ok=True)

    rng = np.random.default_rng(_stream_seed(rng_seed, spec))
    rows = []
    for index in range(spec.count):
        name = f"{spec.split}_{index:05d}"
        negative = bool(rng.random() < spec.negative_fraction)
        image, labels, instances = _render_scene(spec, label_space, rng, negative)
        write_png(base / "images" / f"{name}.png", np.round(image * 255.0).astype(np.uint8))
        write_png(base / "labels" / f"{name}.png", label_service.decode(label_space, spec.dataset_id, labels))
        write_png(base / "instances" / f"{name}.png", instances)
        rows.append((name, int(negative)))

    written = {name for name, _ in rows}
    stale = [p for sub in SUBDIRS for p in (base / sub).glob("*.png") if p.stem not in written]
    for path in stale:
        path.unlink()
    if stale:
        logger.info("Removed %d stale scene files from %s", len(stale), base)

    buffer = io.StringIO()
    writer = csv.writer(buffer, delimiter="\t", lineterminator="\n")
    writer.writerow(("name", "is_negative"))
    writer.writerows(rows)
    tmp_manifest = base / (MANIFEST + ".part")
    tmp_manifest.write_text(buffer.getvalue(), encoding="utf-8")
    os.replace(tmp_manifest, base / MANIFEST)
    logger.info("Generated %d synthetic '%s' samples in %s", spec.count, spec.dataset_id, base)
    return load_dataset(root, spec.dataset_id, label_space)


def collate_samples(samples: Sequence[Sample]) -> SegBatch:
    images = torch.from_numpy(np.stack([s.image for s in samples])).permute(0, 3, 1, 2).contiguous()
    labels = torch.from_numpy(np.stack([s.labels for s in samples]).astype(np.int64))
    return SegBatch(
        images=images.float(),
        labels=labels,
        dataset_ids=[s.dataset_id for s in samples],
        is_negative=torch.tensor([s.is_negative for s in samples], dtype=torch.bool),
        names=[s.name for s in samples],
    )


class AugmentedDataset(Dataset):
    """Serves schedule entries: materialize, then augment with the entry's own rng seed.

    The seed travels with the entry, so the produced crops do not depend on worker
    count or on where an interrupted run resumed.
    """

    def __init__(self, indexes: Dict[str, DatasetIndex], params: Optional[AugmentParams]):
        self.indexes = indexes
        self.params = params

    def __len__(self) -> int:
        return sum(len(index) for index in self.indexes.values())

    def __getitem__(self, entry: ScheduleEntry) -> Sample:
        index = self.indexes[entry.dataset_id]
        sample = index.materialize(entry.sample_index)
        if self.params is None:
            return sample
        return augment(sample, self.params, np.random.default_rng(list(entry.seed)), index.label_space.ignore_id)
